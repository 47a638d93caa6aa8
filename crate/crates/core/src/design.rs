//! Optimal VVC slope design.
//!
//! Minimizes steady-state voltage deviation plus a scaled slope penalty,
//!
//! ```text
//!   min_k  || v*(k) - v_r ||_2^2 + (beta / n_g) ||k||_2^2
//!   s.t.   value(criterion, S K) <= 1 - epsilon,   k <= 0 on generators,
//!          k = 0 elsewhere,
//! ```
//!
//! where `v* = (I - S K)^-1 (v~ - S K v_r)` is the closed-loop equilibrium.
//! The problem is non-convex (matrix inverse, bilinear terms, and a possibly
//! non-convex spectral-radius constraint), so it is attacked by a log-barrier
//! interior method run from multiple deterministic starts; the best feasible
//! local solution wins. No global-optimality claim is made — start 0 sits at
//! k = 0, so a feasible (if conservative) design always exists.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linmodels::{LinearPlant, ScenarioOffset};
use crate::math;
use crate::stability::{
    check_stability, criterion_value, Criterion, GainVector, StabilityError, StabilityVerdict,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DesignError {
    #[error("invalid design problem: {0}")]
    Invalid(String),
    #[error("equilibrium system is singular for the supplied gains")]
    SingularEquilibrium,
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("no feasible start outcome; k = 0 should always be feasible")]
    NoFeasiblePoint,
}

/// Everything one slope optimization needs.
#[derive(Debug, Clone)]
pub struct DesignProblem<'a> {
    pub plant: &'a LinearPlant,
    /// Generator positions, ascending; fixes the reduced vector ordering.
    pub gens: Vec<usize>,
    /// The design scenario's `v~`.
    pub offset: ScenarioOffset,
    pub v_ref: DVector<f64>,
    pub beta: f64,
    pub epsilon: f64,
    pub criterion: Criterion,
    pub multistart: usize,
    pub seed: u64,
}

impl<'a> DesignProblem<'a> {
    pub fn validate(&self) -> Result<(), DesignError> {
        let n = self.plant.n();
        if self.offset.v_tilde.len() != n || self.v_ref.len() != n {
            return Err(DesignError::Invalid(String::from(
                "offset / v_ref length does not match the plant",
            )));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(DesignError::Invalid(String::from("beta must be >= 0")));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(DesignError::Invalid(String::from("epsilon must lie in (0, 1)")));
        }
        if self.v_ref.iter().any(|&v| !(0.9..=1.1).contains(&v)) {
            return Err(DesignError::Invalid(String::from(
                "reference voltages must lie in [0.9, 1.1]",
            )));
        }
        if self.multistart == 0 {
            return Err(DesignError::Invalid(String::from("multistart must be >= 1")));
        }
        if self.gens.windows(2).any(|w| w[0] >= w[1]) || self.gens.iter().any(|&g| g >= n) {
            return Err(DesignError::Invalid(String::from(
                "generator set must be ascending, unique, and in range",
            )));
        }
        Ok(())
    }

    fn n_g(&self) -> usize {
        self.gens.len()
    }

    fn scatter(&self, slopes: &DVector<f64>) -> DVector<f64> {
        let mut k = DVector::zeros(self.plant.n());
        for (g, &i) in self.gens.iter().enumerate() {
            k[i] = slopes[g];
        }
        k
    }
}

/// Closed-loop equilibrium `v* = (I - S K)^-1 (v~ - S K v_r)`, solved as a
/// linear system (never by explicit inversion).
pub fn equilibrium_voltage(
    sens: &DMatrix<f64>,
    k: &GainVector,
    v_tilde: &DVector<f64>,
    v_ref: &DVector<f64>,
) -> Result<DVector<f64>, DesignError> {
    equilibrium_from_slopes(sens, k.as_vector(), v_tilde, v_ref)
}

fn equilibrium_from_slopes(
    sens: &DMatrix<f64>,
    k_full: &DVector<f64>,
    v_tilde: &DVector<f64>,
    v_ref: &DVector<f64>,
) -> Result<DVector<f64>, DesignError> {
    let n = sens.nrows();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - sens[(i, j)] * k_full[j]
    });
    let kv = DVector::from_fn(n, |j, _| k_full[j] * v_ref[j]);
    let rhs = v_tilde - sens * kv;
    a.lu().solve(&rhs).ok_or(DesignError::SingularEquilibrium)
}

/// (deviation term, regularization term) at per-generator slopes.
fn objective_terms(
    problem: &DesignProblem,
    slopes: &DVector<f64>,
) -> Result<(f64, f64), DesignError> {
    let k_full = problem.scatter(slopes);
    let v_star = equilibrium_from_slopes(
        problem.plant.q_sensitivity(),
        &k_full,
        &problem.offset.v_tilde,
        &problem.v_ref,
    )?;
    let dev = (v_star - &problem.v_ref).norm_squared();
    let reg = if problem.gens.is_empty() {
        0.0
    } else {
        problem.beta / problem.n_g() as f64 * slopes.norm_squared()
    };
    Ok((dev, reg))
}

/// Eq-13a objective for a full gain vector (validated against the problem's
/// generator set).
pub fn design_objective(k: &GainVector, problem: &DesignProblem) -> Result<f64, DesignError> {
    problem.validate()?;
    let k = GainVector::new(k.as_vector().clone(), &problem.gens)?;
    let (dev, reg) = objective_terms(problem, &k.gathered(&problem.gens))?;
    Ok(dev + reg)
}

/// Outcome of one local solve, kept for audit.
#[derive(Debug, Clone)]
pub struct StartOutcome {
    pub start_index: usize,
    /// Full-length gain vector of the best candidate this start produced.
    pub slopes: DVector<f64>,
    pub objective: f64,
    pub feasible: bool,
    pub criterion_value: f64,
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub k: GainVector,
    pub objective: f64,
    pub deviation_term: f64,
    pub regularization_term: f64,
    pub verdict: StabilityVerdict,
    pub starts_tried: usize,
    pub best_start_index: usize,
    pub start_outcomes: Vec<StartOutcome>,
}

/// Initialization box lower bound: inside the rho set by the
/// diagonal-dominance heuristic.
pub fn start_lower_bound(problem: &DesignProblem) -> f64 {
    let sens = problem.plant.q_sensitivity();
    let max_diag = (0..sens.nrows())
        .map(|i| sens[(i, i)])
        .fold(0.0f64, f64::max)
        .max(1e-9);
    -0.9 * (1.0 - problem.epsilon) / max_diag
}

/// Deterministic start points: start 0 at k = 0, the rest uniform in
/// `[k_lb, 0]^{n_g}` from a ChaCha stream seeded by the problem.
pub fn generate_starts(problem: &DesignProblem) -> Vec<DVector<f64>> {
    let n_g = problem.n_g();
    let mut starts = Vec::with_capacity(problem.multistart);
    starts.push(DVector::zeros(n_g));
    let k_lb = start_lower_bound(problem);
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    for _ in 1..problem.multistart {
        starts.push(DVector::from_fn(n_g, |_, _| rng.random_range(k_lb..=0.0)));
    }
    starts
}

struct Barrier<'p, 'a> {
    problem: &'p DesignProblem<'a>,
    limit: f64,
}

impl Barrier<'_, '_> {
    fn constraint_value(&self, slopes: &DVector<f64>) -> Option<f64> {
        criterion_value(
            self.problem.plant.q_sensitivity(),
            &self.problem.gens,
            slopes,
            self.problem.criterion,
        )
        .ok()
    }

    /// Barrier objective; +inf outside the strictly feasible domain.
    fn phi(&self, slopes: &DVector<f64>, mu: f64) -> f64 {
        if slopes.iter().any(|&v| v >= 0.0 || !v.is_finite()) {
            return f64::INFINITY;
        }
        let Some(g) = self.constraint_value(slopes) else {
            return f64::INFINITY;
        };
        let slack = self.limit - g;
        if slack <= 0.0 {
            return f64::INFINITY;
        }
        let Ok((dev, reg)) = objective_terms(self.problem, slopes) else {
            return f64::INFINITY;
        };
        let sign_barrier: f64 = slopes.iter().map(|&v| -math::ln(-v)).sum();
        dev + reg + mu * (sign_barrier - math::ln(slack))
    }

    /// Analytic objective gradient (adjoint solve) plus barrier terms; the
    /// constraint gradient uses forward finite differences over the free
    /// variables.
    fn grad_phi(&self, slopes: &DVector<f64>, mu: f64) -> Option<DVector<f64>> {
        let problem = self.problem;
        let sens = problem.plant.q_sensitivity();
        let n = sens.nrows();
        let k_full = problem.scatter(slopes);
        let a = DMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - sens[(i, j)] * k_full[j]
        });
        let kv = DVector::from_fn(n, |j, _| k_full[j] * problem.v_ref[j]);
        let rhs = &problem.offset.v_tilde - sens * kv;
        let lu = a.clone().lu();
        let v_star = lu.solve(&rhs)?;
        let residual = v_star - &problem.v_ref;
        let y = a.transpose().lu().solve(&residual)?;
        let sty = sens.transpose() * y;

        let n_g = problem.n_g();
        let mut grad = DVector::zeros(n_g);
        for (g, &j) in problem.gens.iter().enumerate() {
            grad[g] = 2.0 * residual[j] * sty[j];
        }
        grad += slopes * (2.0 * problem.beta / n_g as f64);

        // -ln(-k) barrier
        for g in 0..n_g {
            grad[g] += mu * (-1.0 / slopes[g]);
        }

        // stability barrier
        let g0 = self.constraint_value(slopes)?;
        let slack = self.limit - g0;
        if slack <= 0.0 {
            return None;
        }
        let mut cgrad = DVector::zeros(n_g);
        for g in 0..n_g {
            let h = 1e-7 * slopes[g].abs().max(1.0);
            let mut probe = slopes.clone();
            probe[g] += h;
            cgrad[g] = (self.constraint_value(&probe)? - g0) / h;
        }
        grad += cgrad * (mu / slack);
        Some(grad)
    }
}

/// Quasi-Newton descent with backtracking line search. The barrier returns
/// +inf outside its domain, so the search can never step across a boundary.
fn bfgs_minimize(barrier: &Barrier, mu: f64, x0: DVector<f64>, max_iter: usize) -> DVector<f64> {
    let n = x0.len();
    let mut x = x0;
    let mut fx = barrier.phi(&x, mu);
    if !fx.is_finite() {
        return x;
    }
    let Some(mut g) = barrier.grad_phi(&x, mu) else {
        return x;
    };
    let mut h = DMatrix::identity(n, n);
    for _ in 0..max_iter {
        if g.amax() <= 1e-9 * (1.0 + fx.abs()) {
            break;
        }
        let mut d = -(&h * &g);
        let mut slope = d.dot(&g);
        if slope >= 0.0 {
            h = DMatrix::identity(n, n);
            d = -g.clone();
            slope = -g.norm_squared();
            if slope >= -1e-300 {
                break;
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &x + &d * t;
            let fc = barrier.phi(&cand, mu);
            if fc <= fx + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let Some(g_new) = barrier.grad_phi(&x_new, mu) else {
            x = x_new;
            break;
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += &s * s.transpose() * ((sy + yhy) * rho * rho);
            h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
        } else {
            h = DMatrix::identity(n, n);
        }
        let stalled = s.amax() <= 1e-14 * (1.0 + x_new.amax())
            || (fx - f_new) <= 1e-16 * (1.0 + fx.abs());
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalled {
            break;
        }
    }
    x
}

/// Run the barrier solver from one start point. Pure and deterministic;
/// starts are independent, so drivers may run them concurrently.
pub fn solve_from_start(
    problem: &DesignProblem,
    start_index: usize,
    start: &DVector<f64>,
) -> StartOutcome {
    let n_g = problem.n_g();
    let limit = 1.0 - problem.epsilon;
    let barrier = Barrier { problem, limit };
    let k_lb = start_lower_bound(problem);
    let snap_tol = 1e-3 * k_lb.abs().max(1.0);

    // Candidate gains judged by the exact objective at the end; the raw start
    // itself competes so exact boundary points (like k = 0) survive.
    let mut candidates: Vec<DVector<f64>> = Vec::new();
    candidates.push(start.clone());

    // Move into the strict interior for the barrier: pull onto the negative
    // orthant, then shrink toward 0 until strictly inside the criterion
    // (all criteria are positively homogeneous in k, so shrinking works).
    let delta = 1e-6 * k_lb.abs().max(1.0);
    let mut interior = start.map(|v| v.min(-delta));
    let mut interior_ok = false;
    for _ in 0..100 {
        match barrier.constraint_value(&interior) {
            Some(g) if g < limit * (1.0 - 1e-9) => {
                interior_ok = true;
                break;
            }
            Some(_) => interior *= 0.5,
            None => break,
        }
    }

    if interior_ok {
        let f0 = objective_terms(problem, &interior)
            .map(|(d, r)| d + r)
            .unwrap_or(1.0);
        let mut mu = 1e-2 * (1.0 + f0.abs());
        let mu_min = 1e-9;
        let mut x = interior;
        while mu > mu_min {
            x = bfgs_minimize(&barrier, mu, x, 200);
            mu /= 10.0;
        }
        let snapped = x.map(|v| if v >= -snap_tol { 0.0 } else { v });
        candidates.push(x);
        candidates.push(snapped);
    }

    let mut best: Option<(DVector<f64>, f64, f64)> = None; // slopes, obj, gval
    for cand in candidates {
        if cand.iter().any(|&v| v > 0.0 || !v.is_finite()) {
            continue;
        }
        let Some(gval) = barrier.constraint_value(&cand) else {
            continue;
        };
        if gval > limit {
            continue;
        }
        let Ok((dev, reg)) = objective_terms(problem, &cand) else {
            continue;
        };
        let obj = dev + reg;
        let better = match &best {
            None => true,
            Some((bk, bobj, _)) => {
                obj < *bobj || (obj == *bobj && cand.norm() < bk.norm())
            }
        };
        if better {
            best = Some((cand, obj, gval));
        }
    }

    match best {
        Some((slopes, objective, gval)) => StartOutcome {
            start_index,
            slopes: problem.scatter(&slopes),
            objective,
            feasible: true,
            criterion_value: gval,
        },
        None => StartOutcome {
            start_index,
            slopes: problem.scatter(&DVector::zeros(n_g)),
            objective: f64::INFINITY,
            feasible: false,
            criterion_value: f64::INFINITY,
        },
    }
}

/// Pick the winner across starts and assemble the result. Best feasible
/// objective wins; ties break by smaller ||k|| then lower start index.
pub fn merge_outcomes(
    problem: &DesignProblem,
    outcomes: Vec<StartOutcome>,
) -> Result<DesignResult, DesignError> {
    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if !o.feasible {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &outcomes[b];
                o.objective < cur.objective
                    || (o.objective == cur.objective && o.slopes.norm() < cur.slopes.norm())
            }
        };
        if better {
            best = Some(i);
        }
    }
    let best = best.ok_or(DesignError::NoFeasiblePoint)?;
    let winner = &outcomes[best];
    let k = GainVector::new(winner.slopes.clone(), &problem.gens)?;
    let (dev, reg) = objective_terms(problem, &k.gathered(&problem.gens))?;
    let verdict = check_stability(problem.plant, &k, problem.criterion, problem.epsilon)?;
    if !verdict.feasible {
        return Err(DesignError::NoFeasiblePoint);
    }
    Ok(DesignResult {
        k,
        objective: dev + reg,
        deviation_term: dev,
        regularization_term: reg,
        verdict,
        starts_tried: outcomes.len(),
        best_start_index: winner.start_index,
        start_outcomes: outcomes,
    })
}

/// Multi-start constrained local optimization of the VVC slopes.
/// Deterministic given the seed.
pub fn optimize_slopes(problem: &DesignProblem) -> Result<DesignResult, DesignError> {
    problem.validate()?;
    if problem.gens.is_empty() {
        // Nothing to control: report the uncontrolled deviation.
        let k = GainVector::zeros(problem.plant.n());
        let v_star = equilibrium_from_slopes(
            problem.plant.q_sensitivity(),
            k.as_vector(),
            &problem.offset.v_tilde,
            &problem.v_ref,
        )?;
        let dev = (v_star - &problem.v_ref).norm_squared();
        let verdict = check_stability(problem.plant, &k, problem.criterion, problem.epsilon)?;
        return Ok(DesignResult {
            k,
            objective: dev,
            deviation_term: dev,
            regularization_term: 0.0,
            verdict,
            starts_tried: 0,
            best_start_index: 0,
            start_outcomes: Vec::new(),
        });
    }
    let starts = generate_starts(problem);
    let outcomes = starts
        .iter()
        .enumerate()
        .map(|(i, s)| solve_from_start(problem, i, s))
        .collect();
    merge_outcomes(problem, outcomes)
}
