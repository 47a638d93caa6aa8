//! Stability criteria for the closed-loop gain matrix.
//!
//! The linear loop `v[t+1] = S K v[t] + ...` is asymptotically stable iff
//! `rho(S K) < 1`. Three nested tests are exposed, from least to most
//! conservative:
//!
//! - `rho`    — spectral radius of `S K` (exact condition)
//! - `norm2`  — largest singular value of `S K`
//! - `holder` — both the 1-norm and the inf-norm of `S K`
//!
//! Since `K` is diagonal with support on the generator set, the nonzero
//! spectrum of the full n x n product lives in the generator block; all
//! criteria are evaluated on reduced blocks where that is exact.

use alloc::vec::Vec;

use nalgebra::linalg::{Schur, SymmetricEigen};
use nalgebra::{DMatrix, DVector};

use crate::linmodels::LinearPlant;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Rho,
    Norm2,
    Holder,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::Rho => "rho",
            Criterion::Norm2 => "norm2",
            Criterion::Holder => "holder",
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StabilityError {
    #[error("generator set is empty")]
    EmptyGeneratorSet,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("eigenvalue iteration did not converge")]
    EigenFailed,
    #[error("gain {value} at node {index} violates the non-positivity constraint")]
    PositiveGain { index: usize, value: f64 },
    #[error("gain {value} at non-generator node {index}")]
    GainOffGenerator { index: usize, value: f64 },
    #[error("gain vector length {got} does not match size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Full-length VVC slope vector: non-positive on generator nodes, zero
/// elsewhere. `K = diag(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainVector {
    k: DVector<f64>,
}

impl GainVector {
    pub fn zeros(n: usize) -> Self {
        GainVector { k: DVector::zeros(n) }
    }

    /// Validate a full-length slope vector against a generator set.
    pub fn new(k: DVector<f64>, gens: &[usize]) -> Result<Self, StabilityError> {
        for (i, &ki) in k.iter().enumerate() {
            if !ki.is_finite() {
                return Err(StabilityError::NonFinite);
            }
            if gens.contains(&i) {
                if ki > 0.0 {
                    return Err(StabilityError::PositiveGain { index: i, value: ki });
                }
            } else if ki != 0.0 {
                return Err(StabilityError::GainOffGenerator { index: i, value: ki });
            }
        }
        Ok(GainVector { k })
    }

    /// Scatter per-generator slopes into a full-length vector.
    pub fn from_generator_slopes(
        n: usize,
        gens: &[usize],
        slopes: &DVector<f64>,
    ) -> Result<Self, StabilityError> {
        if slopes.len() != gens.len() {
            return Err(StabilityError::DimensionMismatch {
                expected: gens.len(),
                got: slopes.len(),
            });
        }
        let mut k = DVector::zeros(n);
        for (g, &i) in gens.iter().enumerate() {
            k[i] = slopes[g];
        }
        GainVector::new(k, gens)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.k
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.len() == 0
    }

    /// Indices with nonzero slope.
    pub fn support(&self) -> Vec<usize> {
        (0..self.k.len()).filter(|&i| self.k[i] != 0.0).collect()
    }

    /// Slopes gathered over a generator set, in set order.
    pub fn gathered(&self, gens: &[usize]) -> DVector<f64> {
        DVector::from_iterator(gens.len(), gens.iter().map(|&i| self.k[i]))
    }

    pub fn norm(&self) -> f64 {
        self.k.norm()
    }

    /// Same shape with every slope multiplied by a non-negative factor.
    pub fn scaled(&self, factor: f64) -> GainVector {
        assert!(factor >= 0.0, "scaling must preserve the sign constraint");
        GainVector { k: &self.k * factor }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityVerdict {
    pub criterion: Criterion,
    /// rho, the 2-norm, or max(norm1, norminf) depending on the criterion.
    pub value: f64,
    /// `(1 - epsilon) - value`; feasible iff non-negative.
    pub margin: f64,
    pub feasible: bool,
    pub epsilon: f64,
}

fn ensure_finite(m: &DMatrix<f64>) -> Result<(), StabilityError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StabilityError::NonFinite)
    }
}

/// `M = S[gens, gens] * diag(k[gens])`. The nonzero eigenvalues of the full
/// `S K` equal the eigenvalues of `M`: zero columns of `K` only add zeros.
pub fn reduce_generator_block(
    sens: &DMatrix<f64>,
    gens: &[usize],
    k: &GainVector,
) -> Result<DMatrix<f64>, StabilityError> {
    if gens.is_empty() {
        return Err(StabilityError::EmptyGeneratorSet);
    }
    let m = DMatrix::from_fn(gens.len(), gens.len(), |a, b| {
        sens[(gens[a], gens[b])] * k.as_vector()[gens[b]]
    });
    Ok(m)
}

/// Largest eigenvalue magnitude of a (possibly non-symmetric) square matrix,
/// via real Schur reduction.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64, StabilityError> {
    if m.nrows() != m.ncols() {
        return Err(StabilityError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    ensure_finite(m)?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let max_niter = 100 * m.nrows().max(10);
    let schur =
        Schur::try_new(m.clone(), f64::EPSILON, max_niter).ok_or(StabilityError::EigenFailed)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|l| math::sqrt(l.norm_sqr()))
        .fold(0.0f64, f64::max))
}

/// Largest singular value, computed from the spectrum of the smaller Gram
/// matrix (works for rectangular input).
pub fn norm2(m: &DMatrix<f64>) -> Result<f64, StabilityError> {
    ensure_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let gram = if m.ncols() <= m.nrows() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let max_niter = 100 * gram.nrows().max(10);
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, max_niter)
        .ok_or(StabilityError::EigenFailed)?;
    Ok(math::sqrt(eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max).max(0.0)))
}

/// (max absolute column sum, max absolute row sum).
pub fn norm1_inf(m: &DMatrix<f64>) -> (f64, f64) {
    let mut col_max = 0.0f64;
    for j in 0..m.ncols() {
        col_max = col_max.max(m.column(j).iter().map(|v| v.abs()).sum());
    }
    let mut row_max = 0.0f64;
    for i in 0..m.nrows() {
        row_max = row_max.max(m.row(i).iter().map(|v| v.abs()).sum());
    }
    (col_max, row_max)
}

/// Criterion value for raw generator slopes (no sign checks): rho of the
/// generator block, the 2-norm of the n x n_g column block, or the worst of
/// the full-matrix 1/inf norms.
pub fn criterion_value(
    sens: &DMatrix<f64>,
    gens: &[usize],
    slopes: &DVector<f64>,
    criterion: Criterion,
) -> Result<f64, StabilityError> {
    if gens.len() != slopes.len() {
        return Err(StabilityError::DimensionMismatch {
            expected: gens.len(),
            got: slopes.len(),
        });
    }
    if gens.is_empty() {
        return Ok(0.0);
    }
    match criterion {
        Criterion::Rho => {
            let m = DMatrix::from_fn(gens.len(), gens.len(), |a, b| {
                sens[(gens[a], gens[b])] * slopes[b]
            });
            spectral_radius(&m)
        }
        Criterion::Norm2 => {
            let b = DMatrix::from_fn(sens.nrows(), gens.len(), |i, g| {
                sens[(i, gens[g])] * slopes[g]
            });
            norm2(&b)
        }
        Criterion::Holder => {
            // 1-norm: scaled column sums; inf-norm: row sums over the block.
            let mut col_max = 0.0f64;
            for (g, &j) in gens.iter().enumerate() {
                let s: f64 = (0..sens.nrows()).map(|i| sens[(i, j)].abs()).sum();
                col_max = col_max.max(s * slopes[g].abs());
            }
            let mut row_max = 0.0f64;
            for i in 0..sens.nrows() {
                let s: f64 = gens
                    .iter()
                    .enumerate()
                    .map(|(g, &j)| sens[(i, j)].abs() * slopes[g].abs())
                    .sum();
                row_max = row_max.max(s);
            }
            Ok(col_max.max(row_max))
        }
    }
}

/// Evaluate one criterion for a gain vector against a plant's reactive
/// sensitivity (`Jq` for LPF, `X` for LDF).
pub fn check_stability(
    plant: &LinearPlant,
    k: &GainVector,
    criterion: Criterion,
    epsilon: f64,
) -> Result<StabilityVerdict, StabilityError> {
    let sens = plant.q_sensitivity();
    if k.len() != sens.nrows() {
        return Err(StabilityError::DimensionMismatch {
            expected: sens.nrows(),
            got: k.len(),
        });
    }
    // Zero slopes contribute nothing to any criterion, so the support is the
    // only set that matters here.
    let support = k.support();
    let slopes = k.gathered(&support);
    let value = criterion_value(sens, &support, &slopes, criterion)?;
    let margin = (1.0 - epsilon) - value;
    Ok(StabilityVerdict {
        criterion,
        value,
        margin,
        feasible: margin >= 0.0,
        epsilon,
    })
}

/// The paper's published 2-node sensitivity block; used as a fixture by the
/// region-sampling studies and tests.
pub fn two_node_fixture() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.5504, 1.5504, 1.5505, 1.6144])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodels::LdfModel;
    use approx::assert_abs_diff_eq;

    /// Eigenvalues of a 2x2 from the characteristic polynomial.
    fn rho_2x2(m: &DMatrix<f64>) -> f64 {
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = tr * tr - 4.0 * det;
        if disc >= 0.0 {
            let r = math::sqrt(disc);
            ((tr + r) / 2.0).abs().max(((tr - r) / 2.0).abs())
        } else {
            // complex pair: |lambda|^2 = det
            math::sqrt(det)
        }
    }

    fn fixture_plant() -> LinearPlant {
        LinearPlant::Ldf(LdfModel {
            x: two_node_fixture(),
            r: DMatrix::zeros(2, 2),
            v_flat: DVector::from_element(2, 1.0),
        })
    }

    #[test]
    fn spectral_radius_identity_and_diag() {
        assert_abs_diff_eq!(spectral_radius(&DMatrix::identity(3, 3)).unwrap(), 1.0, epsilon = 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![0.5, -0.3]));
        assert_abs_diff_eq!(spectral_radius(&d).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fixture_rho_matches_characteristic_polynomial() {
        let jq = two_node_fixture();
        let m = &jq * DMatrix::from_diagonal(&DVector::from_element(2, -0.4));
        let expected = rho_2x2(&m);
        // frozen from the quadratic oracle: tr = -1.26592, det = 0.01585129
        assert_abs_diff_eq!(expected, 1.2532721, epsilon = 1e-6);
        assert_abs_diff_eq!(spectral_radius(&m).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn norms_on_small_fixtures() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![0.5, -0.3]));
        assert_abs_diff_eq!(norm2(&d).unwrap(), 0.5, epsilon = 1e-12);
        let (n1, ninf) = norm1_inf(&d);
        assert_abs_diff_eq!(n1, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ninf, 0.5, epsilon = 1e-15);

        // nilpotent: zero spectrum, unit 2-norm — the conservatism gap
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(spectral_radius(&nil).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(norm2(&nil).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reduction_single_generator() {
        let jq = DMatrix::from_row_slice(
            3,
            3,
            &[0.3, 0.1, 0.05, 0.1, 0.4, 0.2, 0.05, 0.2, 0.6],
        );
        let k = GainVector::from_generator_slopes(
            3,
            &[1],
            &DVector::from_element(1, -0.5),
        )
        .unwrap();
        let m = reduce_generator_block(&jq, &[1], &k).unwrap();
        assert_eq!(m.nrows(), 1);
        assert_abs_diff_eq!(m[(0, 0)], -0.5 * 0.4, epsilon = 1e-15);
    }

    #[test]
    fn reduction_is_identity_when_all_generate() {
        let jq = two_node_fixture();
        let k = GainVector::from_generator_slopes(
            2,
            &[0, 1],
            &DVector::from_vec(alloc::vec![-0.3, -0.1]),
        )
        .unwrap();
        let m = reduce_generator_block(&jq, &[0, 1], &k).unwrap();
        let full = &jq * DMatrix::from_diagonal(k.as_vector());
        assert_eq!(m, full);
    }

    #[test]
    fn reduction_matches_full_spectrum() {
        // deterministic 5x5 with two generators
        let jq = DMatrix::from_fn(5, 5, |i, j| 0.1 + 0.05 * (i as f64) + 0.03 * (j as f64));
        let gens = [1usize, 3];
        let k = GainVector::from_generator_slopes(
            5,
            &gens,
            &DVector::from_vec(alloc::vec![-0.7, -0.2]),
        )
        .unwrap();
        let reduced = reduce_generator_block(&jq, &gens, &k).unwrap();
        let full = &jq * DMatrix::from_diagonal(k.as_vector());
        assert_abs_diff_eq!(
            spectral_radius(&reduced).unwrap(),
            spectral_radius(&full).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn empty_generator_set_is_an_error() {
        let jq = two_node_fixture();
        let k = GainVector::zeros(2);
        assert_eq!(
            reduce_generator_block(&jq, &[], &k).unwrap_err(),
            StabilityError::EmptyGeneratorSet
        );
    }

    #[test]
    fn zero_gain_is_feasible_everywhere() {
        let plant = fixture_plant();
        let k = GainVector::zeros(2);
        for criterion in [Criterion::Rho, Criterion::Norm2, Criterion::Holder] {
            let v = check_stability(&plant, &k, criterion, 1e-3).unwrap();
            assert_eq!(v.value, 0.0);
            assert!(v.feasible);
            assert_abs_diff_eq!(v.margin, 1.0 - 1e-3, epsilon = 1e-15);
        }
    }

    #[test]
    fn margin_definition() {
        // scalar plant with sensitivity 1.0: value = |k|
        let plant = LinearPlant::Ldf(LdfModel {
            x: DMatrix::from_element(1, 1, 1.0),
            r: DMatrix::zeros(1, 1),
            v_flat: DVector::from_element(1, 1.0),
        });
        let k = GainVector::from_generator_slopes(1, &[0], &DVector::from_element(1, -1.05))
            .unwrap();
        let v = check_stability(&plant, &k, Criterion::Rho, 1e-3).unwrap();
        assert!(!v.feasible);
        assert_abs_diff_eq!(v.value, 1.05, epsilon = 1e-12);
        assert_abs_diff_eq!(v.margin, -0.051, epsilon = 1e-12);
    }

    #[test]
    fn holder_boundary_point_nests() {
        let plant = fixture_plant();
        // put k on (just inside) the holder boundary along the diagonal
        let jq = two_node_fixture();
        let (n1, ninf) = norm1_inf(&jq);
        let scale = (1.0 - 1e-3) / n1.max(ninf);
        let k = GainVector::from_generator_slopes(
            2,
            &[0, 1],
            &DVector::from_element(2, -scale * 0.999999),
        )
        .unwrap();
        let holder = check_stability(&plant, &k, Criterion::Holder, 1e-3).unwrap();
        assert!(holder.feasible);
        let n2 = check_stability(&plant, &k, Criterion::Norm2, 1e-3).unwrap();
        assert!(n2.feasible);
        assert!(n2.value <= holder.value + 1e-12);
        let rho = check_stability(&plant, &k, Criterion::Rho, 1e-3).unwrap();
        assert!(rho.feasible);
        assert!(rho.value <= n2.value + 1e-12);
    }

    #[test]
    fn gain_vector_invariants_enforced() {
        assert!(matches!(
            GainVector::new(DVector::from_vec(alloc::vec![0.1, 0.0]), &[0]),
            Err(StabilityError::PositiveGain { .. })
        ));
        assert!(matches!(
            GainVector::new(DVector::from_vec(alloc::vec![0.0, -0.1]), &[0]),
            Err(StabilityError::GainOffGenerator { .. })
        ));
    }

    #[test]
    fn scaling_the_gain_scales_rho_linearly() {
        let plant = fixture_plant();
        let k = GainVector::from_generator_slopes(
            2,
            &[0, 1],
            &DVector::from_vec(alloc::vec![-0.2, -0.1]),
        )
        .unwrap();
        let v1 = check_stability(&plant, &k, Criterion::Rho, 1e-3).unwrap();
        let v2 = check_stability(&plant, &k.scaled(2.5), Criterion::Rho, 1e-3).unwrap();
        assert_abs_diff_eq!(v2.value, 2.5 * v1.value, epsilon = 1e-10);
    }
}
