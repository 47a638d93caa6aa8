//! Linear plant models for VVC design.
//!
//! Two models of the voltage/injection mapping:
//!
//! - **LPF** — first-order Taylor expansion of the nonlinear power flow around
//!   a historical operating point `(p0, q0)`, with sensitivity matrices from
//!   centered finite differences. Accounts for losses and off-nominal voltage.
//! - **LDF** — LinDistFlow: sensitivities assembled purely from network
//!   impedances (shared-path sums), losses neglected, voltages near 1 p.u.
//!
//! Both reduce a scenario to an affine plant `v = S q_g + v~` where `S` is the
//! reactive sensitivity and `v~` folds the base case and the uncontrolled
//! injections. Design and simulation operate on that common form.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::network::NetworkModel;
use crate::powerflow::{solve_pf, Injection, PfConfig, PfError};
use crate::scenario::{Scenario, ScenarioSet};

/// Data-driven linearized power flow around `(p0, q0)`.
#[derive(Debug, Clone)]
pub struct LpfModel {
    /// f_pf(p0, q0)
    pub v_base: DVector<f64>,
    pub p0: DVector<f64>,
    pub q0: DVector<f64>,
    pub jp: DMatrix<f64>,
    pub jq: DMatrix<f64>,
    /// Step used by the centered differences.
    pub finite_diff_eps: f64,
}

/// Impedance-only LinDistFlow model.
#[derive(Debug, Clone)]
pub struct LdfModel {
    /// Shared-path reactance sums, symmetric positive definite.
    pub x: DMatrix<f64>,
    /// Shared-path resistance sums.
    pub r: DMatrix<f64>,
    pub v_flat: DVector<f64>,
}

/// The constant `v~` of one scenario: what the plant reads with q_g = 0.
#[derive(Debug, Clone)]
pub struct ScenarioOffset {
    pub v_tilde: DVector<f64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LinModelError {
    #[error("power flow did not converge at the operating point")]
    BaseCaseDiverged,
    #[error("power flow did not converge perturbing {var} column {index}")]
    ColumnDiverged { var: &'static str, index: usize },
    #[error("vector length {got} does not match model size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Pf(#[from] PfError),
}

/// One column of both Jacobians by centered differences:
/// `[f(x + eps e_j) - f(x - eps e_j)] / (2 eps)` for x = p and x = q.
///
/// Pure; columns are independent, so drivers may evaluate them concurrently.
pub fn jacobian_column(
    net: &NetworkModel,
    p0: &DVector<f64>,
    q0: &DVector<f64>,
    j: usize,
    eps: f64,
    pf: &PfConfig,
) -> Result<(DVector<f64>, DVector<f64>), LinModelError> {
    let solve_at = |p: &DVector<f64>, q: &DVector<f64>, var, index| {
        let prof = solve_pf(net, &Injection::new(p.clone(), q.clone()), pf)?;
        if !prof.converged {
            return Err(LinModelError::ColumnDiverged { var, index });
        }
        Ok(prof.v)
    };
    let mut p_hi = p0.clone();
    let mut p_lo = p0.clone();
    p_hi[j] += eps;
    p_lo[j] -= eps;
    let vp = (solve_at(&p_hi, q0, "p", j)? - solve_at(&p_lo, q0, "p", j)?) / (2.0 * eps);

    let mut q_hi = q0.clone();
    let mut q_lo = q0.clone();
    q_hi[j] += eps;
    q_lo[j] -= eps;
    let vq = (solve_at(p0, &q_hi, "q", j)? - solve_at(p0, &q_lo, "q", j)?) / (2.0 * eps);
    Ok((vp, vq))
}

/// Assemble an [`LpfModel`] from precomputed columns (see [`jacobian_column`]).
pub fn lpf_from_columns(
    v_base: DVector<f64>,
    p0: DVector<f64>,
    q0: DVector<f64>,
    columns: Vec<(DVector<f64>, DVector<f64>)>,
    eps: f64,
) -> LpfModel {
    let n = v_base.len();
    let mut jp = DMatrix::zeros(n, n);
    let mut jq = DMatrix::zeros(n, n);
    for (j, (cp, cq)) in columns.into_iter().enumerate() {
        jp.set_column(j, &cp);
        jq.set_column(j, &cq);
    }
    LpfModel {
        v_base,
        p0,
        q0,
        jp,
        jq,
        finite_diff_eps: eps,
    }
}

/// Base-case solve at `(p0, q0)`; shared by the serial and parallel builders.
pub fn lpf_base_voltage(
    net: &NetworkModel,
    p0: &DVector<f64>,
    q0: &DVector<f64>,
    pf: &PfConfig,
) -> Result<DVector<f64>, LinModelError> {
    let prof = solve_pf(net, &Injection::new(p0.clone(), q0.clone()), pf)?;
    if !prof.converged {
        return Err(LinModelError::BaseCaseDiverged);
    }
    Ok(prof.v)
}

/// Build the LPF model with 4n power flow solves (serial driver).
pub fn build_jacobians(
    net: &NetworkModel,
    p0: &DVector<f64>,
    q0: &DVector<f64>,
    eps: f64,
    pf: &PfConfig,
) -> Result<LpfModel, LinModelError> {
    let n = net.n();
    if p0.len() != n || q0.len() != n {
        return Err(LinModelError::DimensionMismatch { expected: n, got: p0.len() });
    }
    let v_base = lpf_base_voltage(net, p0, q0, pf)?;
    let mut columns = Vec::with_capacity(n);
    for j in 0..n {
        columns.push(jacobian_column(net, p0, q0, j, eps, pf)?);
    }
    Ok(lpf_from_columns(v_base, p0.clone(), q0.clone(), columns, eps))
}

/// `v~ = v_base + Jp (p - p0) - Jq (q0 + q_d)` for one scenario.
pub fn lpf_offset(model: &LpfModel, scen: &Scenario) -> Result<ScenarioOffset, LinModelError> {
    let n = model.v_base.len();
    if scen.p_d.len() != n {
        return Err(LinModelError::DimensionMismatch { expected: n, got: scen.p_d.len() });
    }
    let p = scen.net_p();
    let v_tilde = &model.v_base + &model.jp * (p - &model.p0) - &model.jq * (&model.q0 + &scen.q_d);
    Ok(ScenarioOffset { v_tilde })
}

/// `v = Jq q_g + v~`.
pub fn lpf_predict(
    model: &LpfModel,
    offset: &ScenarioOffset,
    q_g: &DVector<f64>,
) -> Result<DVector<f64>, LinModelError> {
    let n = model.v_base.len();
    if q_g.len() != n || offset.v_tilde.len() != n {
        return Err(LinModelError::DimensionMismatch { expected: n, got: q_g.len() });
    }
    Ok(&model.jq * q_g + &offset.v_tilde)
}

/// Shared-path impedance sums: `X_ij` adds the reactance of every branch on
/// the common head-to-i / head-to-j path, `R` likewise with resistance.
pub fn build_ldf(net: &NetworkModel) -> LdfModel {
    let n = net.n();
    // ancestor sets, each node owning its parent branch
    let mut on_path = vec![vec![false; n]; n];
    for i in 0..n {
        for k in net.path_to_head(i) {
            on_path[i][k] = true;
        }
    }
    let mut x = DMatrix::zeros(n, n);
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sx = 0.0;
            let mut sr = 0.0;
            for k in 0..n {
                if on_path[i][k] && on_path[j][k] {
                    let z = net.branch_into(k);
                    sx += z.x;
                    sr += z.r;
                }
            }
            x[(i, j)] = sx;
            x[(j, i)] = sx;
            r[(i, j)] = sr;
            r[(j, i)] = sr;
        }
    }
    LdfModel {
        x,
        r,
        v_flat: DVector::from_element(n, net.head_voltage()),
    }
}

impl LdfModel {
    /// LDF analogue of the scenario offset, R·p term included.
    pub fn offset(&self, scen: &Scenario) -> Result<ScenarioOffset, LinModelError> {
        let n = self.v_flat.len();
        if scen.p_d.len() != n {
            return Err(LinModelError::DimensionMismatch { expected: n, got: scen.p_d.len() });
        }
        let v_tilde = &self.v_flat + &self.r * scen.net_p() - &self.x * &scen.q_d;
        Ok(ScenarioOffset { v_tilde })
    }

    pub fn predict(
        &self,
        offset: &ScenarioOffset,
        q_g: &DVector<f64>,
    ) -> Result<DVector<f64>, LinModelError> {
        let n = self.v_flat.len();
        if q_g.len() != n {
            return Err(LinModelError::DimensionMismatch { expected: n, got: q_g.len() });
        }
        Ok(&self.x * q_g + &offset.v_tilde)
    }
}

/// Either linear plant behind one interface; design, stability, and the
/// linear closed loop are written against this.
#[derive(Debug, Clone)]
pub enum LinearPlant {
    Lpf(LpfModel),
    Ldf(LdfModel),
}

impl LinearPlant {
    pub fn n(&self) -> usize {
        match self {
            LinearPlant::Lpf(m) => m.v_base.len(),
            LinearPlant::Ldf(m) => m.v_flat.len(),
        }
    }

    /// The reactive sensitivity the closed loop multiplies the gains by:
    /// `Jq` for LPF, `X` for LDF.
    pub fn q_sensitivity(&self) -> &DMatrix<f64> {
        match self {
            LinearPlant::Lpf(m) => &m.jq,
            LinearPlant::Ldf(m) => &m.x,
        }
    }

    pub fn offset(&self, scen: &Scenario) -> Result<ScenarioOffset, LinModelError> {
        match self {
            LinearPlant::Lpf(m) => lpf_offset(m, scen),
            LinearPlant::Ldf(m) => m.offset(scen),
        }
    }

    pub fn predict(
        &self,
        offset: &ScenarioOffset,
        q_g: &DVector<f64>,
    ) -> Result<DVector<f64>, LinModelError> {
        match self {
            LinearPlant::Lpf(m) => lpf_predict(m, offset, q_g),
            LinearPlant::Ldf(m) => m.predict(offset, q_g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Lpf,
    Ldf,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Lpf => "lpf",
            ModelKind::Ldf => "ldf",
        }
    }
}

/// One (scenario, node, model) sample of the accuracy study.
#[derive(Debug, Clone)]
pub struct ErrorRecord {
    pub scenario_id: String,
    pub node: usize,
    pub model: ModelKind,
    pub v_model: f64,
    pub v_ac: f64,
}

impl ErrorRecord {
    pub fn error(&self) -> f64 {
        self.v_model - self.v_ac
    }
}

/// Signed-error histogram over symmetric bins, one count row per model.
#[derive(Debug, Clone)]
pub struct ErrorHistogram {
    /// `bins + 1` edges spanning [-m, m].
    pub edges: Vec<f64>,
    pub lpf_counts: Vec<usize>,
    pub ldf_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub records: Vec<ErrorRecord>,
    /// Scenario ids whose AC solve failed.
    pub skipped: Vec<String>,
    pub lpf_max_abs_error: f64,
    pub ldf_max_abs_error: f64,
    pub histogram: ErrorHistogram,
}

/// Open-loop model-vs-AC voltage errors for both models across a scenario set.
pub fn model_error_report(
    net: &NetworkModel,
    lpf: &LpfModel,
    ldf: &LdfModel,
    scenarios: &ScenarioSet,
    pf: &PfConfig,
    bins: usize,
) -> Result<ErrorReport, LinModelError> {
    let n = net.n();
    let q_zero = DVector::zeros(n);
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for scen in &scenarios.scenarios {
        let prof = solve_pf(net, &scen.open_loop_injection(), pf)?;
        if !prof.converged {
            log::warn!("model error report: AC solve failed for `{}`, skipped", scen.id);
            skipped.push(scen.id.clone());
            continue;
        }
        let v_lpf = lpf_predict(lpf, &lpf_offset(lpf, scen)?, &q_zero)?;
        let v_ldf = ldf.predict(&ldf.offset(scen)?, &q_zero)?;
        for i in 0..n {
            records.push(ErrorRecord {
                scenario_id: scen.id.clone(),
                node: i,
                model: ModelKind::Lpf,
                v_model: v_lpf[i],
                v_ac: prof.v[i],
            });
            records.push(ErrorRecord {
                scenario_id: scen.id.clone(),
                node: i,
                model: ModelKind::Ldf,
                v_model: v_ldf[i],
                v_ac: prof.v[i],
            });
        }
    }

    let max_abs = |kind: ModelKind| {
        records
            .iter()
            .filter(|r| r.model == kind)
            .map(|r| r.error().abs())
            .fold(0.0f64, f64::max)
    };
    let lpf_max = max_abs(ModelKind::Lpf);
    let ldf_max = max_abs(ModelKind::Ldf);

    let bins = bins.max(1);
    let m = lpf_max.max(ldf_max).max(1e-12);
    let width = 2.0 * m / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| -m + b as f64 * width).collect();
    let mut lpf_counts = vec![0usize; bins];
    let mut ldf_counts = vec![0usize; bins];
    for rec in &records {
        let slot = (((rec.error() + m) / width) as usize).min(bins - 1);
        match rec.model {
            ModelKind::Lpf => lpf_counts[slot] += 1,
            ModelKind::Ldf => ldf_counts[slot] += 1,
        }
    }

    Ok(ErrorReport {
        records,
        skipped,
        lpf_max_abs_error: lpf_max,
        ldf_max_abs_error: ldf_max,
        histogram: ErrorHistogram {
            edges,
            lpf_counts,
            ldf_counts,
        },
    })
}
