//! Closed-loop simulation of the grid-VVC feedback.
//!
//! Each step applies the VVC rule to the last measured voltages and re-solves
//! the full nonlinear power flow, so designed slopes are judged against the
//! ground-truth plant rather than the linear model they were designed on.
//! Two controller realizations are supported:
//!
//! - non-incremental: `q_g[t+1] = K (v[t] - v_r)` (the sampled droop rule)
//! - incremental ("Type-B"): first-order filtered update
//!   `q_g[t+1] = (1 - dT/tau) q_g[t] + (dT/tau) K (v[t] - v_r)`,
//!   which reduces exactly to the non-incremental rule at `dT/tau = 1`.
//!
//! Divergence is declared on voltage excursion past a configurable band or on
//! power flow non-convergence, whichever happens first.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::linmodels::{LinearPlant, ScenarioOffset};
use crate::network::NetworkModel;
use crate::powerflow::{solve_pf, PfConfig, PfError};
use crate::scenario::Scenario;
use crate::stability::GainVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopMode {
    NonIncremental,
    Incremental,
}

#[derive(Debug, Clone, Copy)]
pub struct LoopConfig {
    pub mode: LoopMode,
    /// Filter mixing factor; must be 1 in non-incremental mode.
    pub dt_over_tau: f64,
    /// Step-to-step voltage change below which the loop has converged (p.u.).
    pub conv_tol: f64,
    pub max_steps: usize,
    /// |v - v_r| beyond this at any node is declared divergence (p.u.).
    pub divergence_v_limit: f64,
    /// Keep every `stride`-th step in the history (final state always kept).
    pub history_stride: usize,
}

impl LoopConfig {
    pub fn nonincremental() -> Self {
        LoopConfig {
            mode: LoopMode::NonIncremental,
            dt_over_tau: 1.0,
            conv_tol: 1e-4,
            max_steps: 2000,
            divergence_v_limit: 0.5,
            history_stride: 1,
        }
    }

    pub fn incremental(dt_over_tau: f64) -> Self {
        LoopConfig {
            mode: LoopMode::Incremental,
            dt_over_tau,
            ..LoopConfig::nonincremental()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt_over_tau > 0.0 && self.dt_over_tau <= 1.0) {
            return Err(SimError::InvalidConfig(String::from(
                "dt_over_tau must lie in (0, 1]",
            )));
        }
        if self.mode == LoopMode::NonIncremental && self.dt_over_tau != 1.0 {
            return Err(SimError::InvalidConfig(String::from(
                "non-incremental mode is the special case dt_over_tau = 1",
            )));
        }
        if !(self.conv_tol > 0.0) || self.max_steps == 0 || self.history_stride == 0 {
            return Err(SimError::InvalidConfig(String::from(
                "conv_tol, max_steps, and history_stride must be positive",
            )));
        }
        Ok(())
    }
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig::nonincremental()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopOutcome {
    Converged,
    Diverged,
    MaxSteps,
}

impl LoopOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            LoopOutcome::Converged => "converged",
            LoopOutcome::Diverged => "diverged",
            LoopOutcome::MaxSteps => "max_steps",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DeviationMetrics {
    pub dev2: f64,
    pub devinf: f64,
}

/// `(||v - v_r||_2, ||v - v_r||_inf)`.
pub fn deviation_metrics(v: &DVector<f64>, v_ref: &DVector<f64>) -> DeviationMetrics {
    let d = v - v_ref;
    DeviationMetrics {
        dev2: d.norm(),
        devinf: d.amax(),
    }
}

#[derive(Debug, Clone)]
pub struct ClosedLoopTrace {
    /// Steps actually stored (subject to `history_stride`).
    pub history_steps: Vec<usize>,
    pub v_history: Vec<DVector<f64>>,
    pub q_history: Vec<DVector<f64>>,
    pub outcome: LoopOutcome,
    /// Index of the last completed step (step 0 is the open-loop solve).
    pub steps: usize,
    pub v_final: DVector<f64>,
    pub q_final: DVector<f64>,
    pub metrics: DeviationMetrics,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("invalid loop config: {0}")]
    InvalidConfig(String),
    #[error("initial power flow (q_g = 0) did not converge")]
    InitialPowerFlow,
    #[error("vector length {got} does not match network size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Pf(#[from] PfError),
}

/// Non-incremental VVC rule: `q_g = K (v - v_r)`.
pub fn vvc_response(k: &GainVector, v: &DVector<f64>, v_ref: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| k.as_vector()[i] * (v[i] - v_ref[i]))
}

/// Filtered (Type-B) update; equals [`vvc_response`] at `dt_over_tau = 1`.
pub fn incremental_response(
    k: &GainVector,
    v: &DVector<f64>,
    v_ref: &DVector<f64>,
    q_prev: &DVector<f64>,
    dt_over_tau: f64,
) -> DVector<f64> {
    let target = vvc_response(k, v, v_ref);
    q_prev * (1.0 - dt_over_tau) + target * dt_over_tau
}

fn next_q(
    cfg: &LoopConfig,
    k: &GainVector,
    v: &DVector<f64>,
    v_ref: &DVector<f64>,
    q_prev: &DVector<f64>,
) -> DVector<f64> {
    match cfg.mode {
        LoopMode::NonIncremental => vvc_response(k, v, v_ref),
        LoopMode::Incremental => incremental_response(k, v, v_ref, q_prev, cfg.dt_over_tau),
    }
}

struct TraceBuilder {
    stride: usize,
    steps: Vec<usize>,
    v: Vec<DVector<f64>>,
    q: Vec<DVector<f64>>,
}

impl TraceBuilder {
    fn new(stride: usize) -> Self {
        TraceBuilder {
            stride,
            steps: Vec::new(),
            v: Vec::new(),
            q: Vec::new(),
        }
    }

    fn record(&mut self, step: usize, v: &DVector<f64>, q: &DVector<f64>, force: bool) {
        if force || step % self.stride == 0 {
            if self.steps.last() == Some(&step) {
                return;
            }
            self.steps.push(step);
            self.v.push(v.clone());
            self.q.push(q.clone());
        }
    }
}

/// Simulate the feedback loop against the nonlinear power flow: one VVC
/// update plus one full AC solve per step, starting from the open-loop
/// condition (`q_g[0] = 0`).
pub fn simulate_closed_loop(
    net: &NetworkModel,
    k: &GainVector,
    scen: &Scenario,
    v_ref: &DVector<f64>,
    cfg: &LoopConfig,
    pf: &PfConfig,
) -> Result<ClosedLoopTrace, SimError> {
    cfg.validate()?;
    let n = net.n();
    if k.len() != n || v_ref.len() != n || scen.p_d.len() != n {
        return Err(SimError::DimensionMismatch { expected: n, got: k.len() });
    }

    let open = solve_pf(net, &scen.open_loop_injection(), pf)?;
    if !open.converged {
        return Err(SimError::InitialPowerFlow);
    }

    let mut trace = TraceBuilder::new(cfg.history_stride);
    let mut v = open.v;
    let mut q_g = DVector::zeros(n);
    trace.record(0, &v, &q_g, true);

    let mut outcome = LoopOutcome::MaxSteps;
    let mut steps = 0;
    for t in 1..=cfg.max_steps {
        steps = t;
        q_g = next_q(cfg, k, &v, v_ref, &q_g);
        // A controller that drives injections past the plausibility guard has
        // left the physical envelope: that is divergence, not a caller error.
        let prof = match solve_pf(net, &scen.injection_with(&q_g), pf) {
            Ok(prof) => prof,
            Err(PfError::ImplausibleInjection { .. }) => {
                trace.record(t, &v, &q_g, true);
                outcome = LoopOutcome::Diverged;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        if !prof.converged {
            trace.record(t, &v, &q_g, true);
            outcome = LoopOutcome::Diverged;
            break;
        }
        let v_new = prof.v;
        trace.record(t, &v_new, &q_g, false);
        let excursion = (0..n).any(|i| (v_new[i] - v_ref[i]).abs() > cfg.divergence_v_limit);
        let step_change = (&v_new - &v).amax();
        v = v_new;
        if excursion {
            trace.record(t, &v, &q_g, true);
            outcome = LoopOutcome::Diverged;
            break;
        }
        if step_change <= cfg.conv_tol {
            trace.record(t, &v, &q_g, true);
            outcome = LoopOutcome::Converged;
            break;
        }
    }
    if outcome == LoopOutcome::MaxSteps {
        trace.record(steps, &v, &q_g, true);
    }

    let metrics = deviation_metrics(&v, v_ref);
    Ok(ClosedLoopTrace {
        history_steps: trace.steps,
        v_history: trace.v,
        q_history: trace.q,
        outcome,
        steps,
        v_final: v,
        q_final: q_g,
        metrics,
    })
}

/// Same loop iterated on a linear plant (`v = S q_g + v~`) instead of the
/// nonlinear solver; used to cross-check the closed-loop equilibrium.
pub fn simulate_linear_loop(
    plant: &LinearPlant,
    k: &GainVector,
    offset: &ScenarioOffset,
    v_ref: &DVector<f64>,
    cfg: &LoopConfig,
) -> Result<ClosedLoopTrace, SimError> {
    cfg.validate()?;
    let n = plant.n();
    if k.len() != n || v_ref.len() != n || offset.v_tilde.len() != n {
        return Err(SimError::DimensionMismatch { expected: n, got: k.len() });
    }
    let sens = plant.q_sensitivity();

    let mut trace = TraceBuilder::new(cfg.history_stride);
    let mut v = offset.v_tilde.clone();
    let mut q_g = DVector::zeros(n);
    trace.record(0, &v, &q_g, true);

    let mut outcome = LoopOutcome::MaxSteps;
    let mut steps = 0;
    for t in 1..=cfg.max_steps {
        steps = t;
        q_g = next_q(cfg, k, &v, v_ref, &q_g);
        let v_new = sens * &q_g + &offset.v_tilde;
        trace.record(t, &v_new, &q_g, false);
        let excursion = (0..n).any(|i| {
            !(v_new[i]).is_finite() || (v_new[i] - v_ref[i]).abs() > cfg.divergence_v_limit
        });
        let step_change = (&v_new - &v).amax();
        v = v_new;
        if excursion {
            trace.record(t, &v, &q_g, true);
            outcome = LoopOutcome::Diverged;
            break;
        }
        if step_change <= cfg.conv_tol {
            trace.record(t, &v, &q_g, true);
            outcome = LoopOutcome::Converged;
            break;
        }
    }
    if outcome == LoopOutcome::MaxSteps {
        trace.record(steps, &v, &q_g, true);
    }

    let metrics = deviation_metrics(&v, v_ref);
    Ok(ClosedLoopTrace {
        history_steps: trace.steps,
        v_history: trace.v,
        q_history: trace.q,
        outcome,
        steps,
        v_final: v,
        q_final: q_g,
        metrics,
    })
}
