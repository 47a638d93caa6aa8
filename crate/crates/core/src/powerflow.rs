//! Nonlinear AC power flow for radial feeders with constant-power (P-Q) buses.
//!
//! The solver is a backward-forward sweep with current summation: node draw
//! currents are accumulated leaf-to-head, then voltages propagate head-to-leaf
//! through the series impedances. On radial networks this fixed point is the
//! same solution the DistFlow equations describe. Convergence is judged on the
//! complex power balance residual at every node, so a converged profile is a
//! genuine power flow solution regardless of the iteration path.
//!
//! Non-convergence is reported in the profile, not thrown: the closed-loop
//! simulator treats it as a divergence signal.

use alloc::vec;

use nalgebra::{Complex, DVector};

use crate::math;
use crate::network::NetworkModel;

/// Net nodal injections (generation minus demand), per-unit.
#[derive(Debug, Clone)]
pub struct Injection {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
}

impl Injection {
    pub fn new(p: DVector<f64>, q: DVector<f64>) -> Self {
        Injection { p, q }
    }

    pub fn zero(n: usize) -> Self {
        Injection {
            p: DVector::zeros(n),
            q: DVector::zeros(n),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PfConfig {
    /// Convergence threshold on the worst nodal power balance residual (p.u.).
    pub tolerance: f64,
    pub max_iter: usize,
    /// Injections with any |p_i| or |q_i| above this are rejected as implausible.
    pub max_injection: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        // Finite-difference linearization (eps = 1e-6) needs solver noise
        // well below eps.
        PfConfig {
            tolerance: 1e-10,
            max_iter: 100,
            max_injection: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VoltageProfile {
    /// Voltage magnitudes, per-unit.
    pub v: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Worst nodal power balance residual at the last iterate (p.u.).
    pub max_mismatch: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PfError {
    #[error("injection length {got} does not match network size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("implausible injection {value} p.u. at node {index} (limit {limit})")]
    ImplausibleInjection { index: usize, value: f64, limit: f64 },
    #[error("non-finite injection at node {0}")]
    NonFiniteInjection(usize),
}

/// Solve `v = f_pf(p, q)` from a flat start.
///
/// Pure: no shared mutable state, so callers may run many solves concurrently
/// (the Jacobian construction depends on this).
pub fn solve_pf(
    net: &NetworkModel,
    inj: &Injection,
    cfg: &PfConfig,
) -> Result<VoltageProfile, PfError> {
    let n = net.n();
    if inj.p.len() != n {
        return Err(PfError::DimensionMismatch { expected: n, got: inj.p.len() });
    }
    if inj.q.len() != n {
        return Err(PfError::DimensionMismatch { expected: n, got: inj.q.len() });
    }
    for i in 0..n {
        let (p, q) = (inj.p[i], inj.q[i]);
        if !p.is_finite() || !q.is_finite() {
            return Err(PfError::NonFiniteInjection(i));
        }
        for value in [p, q] {
            if value.abs() > cfg.max_injection {
                return Err(PfError::ImplausibleInjection {
                    index: i,
                    value,
                    limit: cfg.max_injection,
                });
            }
        }
    }

    let head = Complex::new(net.head_voltage(), 0.0);
    let order = net.bfs_order();
    // Flat start every solve: reproducible iteration counts, identical answers.
    let mut v = vec![head; n];
    let mut current = vec![Complex::new(0.0, 0.0); n];

    let mut iterations = 0;
    let mut max_mismatch = f64::INFINITY;
    let mut converged = false;

    'sweep: for it in 1..=cfg.max_iter {
        iterations = it;

        // Node draw currents: I = conj(S_draw / V), S_draw = -(p + jq).
        for i in 0..n {
            let s_draw = Complex::new(-inj.p[i], -inj.q[i]);
            current[i] = (s_draw / v[i]).conj();
        }
        // Backward: fold each subtree's current into its parent branch.
        for &i in order.iter().rev() {
            if let Some(p) = net.parent(i) {
                let add = current[i];
                current[p] += add;
            }
        }
        // Forward: drop voltage across each series branch.
        for &i in order.iter() {
            let v_up = match net.parent(i) {
                Some(p) => v[p],
                None => head,
            };
            let z = net.branch_into(i);
            v[i] = v_up - Complex::new(z.r, z.x) * current[i];
        }

        for vi in &v {
            if !vi.re.is_finite() || !vi.im.is_finite() || vi.norm_sqr() < 1e-4 {
                // Voltage collapse; report as non-converged.
                max_mismatch = f64::INFINITY;
                break 'sweep;
            }
        }

        max_mismatch = power_balance_residual(net, &v, inj);
        if max_mismatch <= cfg.tolerance {
            converged = true;
            break;
        }
    }

    let magnitudes = DVector::from_iterator(n, v.iter().map(|c| math::sqrt(c.norm_sqr())));
    Ok(VoltageProfile {
        v: magnitudes,
        converged,
        iterations,
        max_mismatch,
    })
}

/// Worst |S_spec - S_implied| over all nodes for a complex voltage state.
fn power_balance_residual(net: &NetworkModel, v: &[Complex<f64>], inj: &Injection) -> f64 {
    let head = Complex::new(net.head_voltage(), 0.0);
    let mut worst = 0.0f64;
    for i in 0..net.n() {
        let v_up = match net.parent(i) {
            Some(p) => v[p],
            None => head,
        };
        let z = net.branch_into(i);
        // Current the node pushes into its incident branches.
        let mut outflow = (v[i] - v_up) / Complex::new(z.r, z.x);
        for &c in net.children(i) {
            let zc = net.branch_into(c);
            outflow += (v[i] - v[c]) / Complex::new(zc.r, zc.x);
        }
        let s_implied = v[i] * outflow.conj();
        let ds = Complex::new(inj.p[i], inj.q[i]) - s_implied;
        worst = worst.max(math::sqrt(ds.norm_sqr()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use approx::assert_abs_diff_eq;

    /// Exact single-line solution with net-injection convention (p, q > 0 for
    /// generation): the high-voltage root of
    /// u^2 - u(2(pr+qx) + v0^2) + (p^2+q^2)|z|^2 = 0 with u = v1^2,
    /// derived from V1 conj(V0 - V1) = -s conj(z).
    fn two_bus_exact(p: f64, q: f64, r: f64, x: f64, v0: f64) -> f64 {
        let b = -(2.0 * (p * r + q * x) + v0 * v0);
        let c = (p * p + q * q) * (r * r + x * x);
        let disc = b * b - 4.0 * c;
        assert!(disc >= 0.0, "no real solution");
        crate::math::sqrt((-b + crate::math::sqrt(disc)) / 2.0)
    }

    #[test]
    fn zero_injection_is_flat_in_one_iteration() {
        let net = cases::feeder33();
        let prof = solve_pf(&net, &Injection::zero(net.n()), &PfConfig::default()).unwrap();
        assert!(prof.converged);
        assert_eq!(prof.iterations, 1);
        for i in 0..net.n() {
            assert_abs_diff_eq!(prof.v[i], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn two_bus_load_matches_quadratic_oracle() {
        let net = cases::two_bus();
        let inj = Injection::new(DVector::from_element(1, -0.1), DVector::from_element(1, -0.05));
        let prof = solve_pf(&net, &inj, &PfConfig::default()).unwrap();
        assert!(prof.converged);
        let expected = two_bus_exact(-0.1, -0.05, 0.01, 0.02, 1.0);
        assert_abs_diff_eq!(prof.v[0], expected, epsilon = 1e-10);
        assert!(prof.v[0] < 1.0);
    }

    #[test]
    fn two_bus_generation_raises_voltage() {
        let net = cases::two_bus();
        let inj = Injection::new(DVector::from_element(1, 0.1), DVector::zeros(1));
        let prof = solve_pf(&net, &inj, &PfConfig::default()).unwrap();
        assert!(prof.converged);
        let expected = two_bus_exact(0.1, 0.0, 0.01, 0.02, 1.0);
        assert_abs_diff_eq!(prof.v[0], expected, epsilon = 1e-10);
        assert!(prof.v[0] > 1.0);
    }

    #[test]
    fn implausible_injection_rejected() {
        let net = cases::two_bus();
        let inj = Injection::new(DVector::from_element(1, 11.0), DVector::zeros(1));
        let err = solve_pf(&net, &inj, &PfConfig::default()).unwrap_err();
        assert!(matches!(err, PfError::ImplausibleInjection { .. }));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = cases::feeder33();
        let inj = Injection::zero(5);
        assert!(matches!(
            solve_pf(&net, &inj, &PfConfig::default()),
            Err(PfError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn voltage_collapse_reports_nonconvergence() {
        // 9.9 p.u. of load behind 0.01+j0.02 is far past the nose point.
        let net = cases::two_bus();
        let inj = Injection::new(DVector::from_element(1, -9.9), DVector::from_element(1, -9.9));
        let prof = solve_pf(&net, &inj, &PfConfig::default()).unwrap();
        assert!(!prof.converged);
    }

    #[test]
    fn feeder33_full_load_drops_below_092() {
        let net = cases::feeder33();
        let (p_d, q_d) = cases::feeder33_nominal_demand();
        let prof = solve_pf(&net, &Injection::new(-p_d, -q_d), &PfConfig::default()).unwrap();
        assert!(prof.converged);
        let vmin = prof.v.min();
        // classic benchmark: minimum near 0.913 at the end of the main lateral
        assert!(vmin > 0.90 && vmin < 0.92, "vmin = {vmin}");
        let i18 = net.index_of("n18").unwrap();
        assert_abs_diff_eq!(prof.v[i18], vmin, epsilon = 1e-6);
    }
}
