//! Loading-condition data sets.
//!
//! A scenario is one hour of feeder loading: demand vectors plus available
//! active generation. Controlled reactive output `q_g` is never stored here —
//! it is the variable the VVC loop sets. The module covers the train/test
//! split, the average operating point used as the linearization anchor,
//! worst-case and exemplary-hour selection, and a synthetic-year generator
//! for the bundled feeders.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::network::{NetworkModel, NodeRole};
use crate::powerflow::{solve_pf, Injection, PfConfig, PfError};

/// One loading condition. All vectors are per-unit, length `n`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    /// Available active generation (non-negative, only at generator nodes).
    pub p_g: DVector<f64>,
    pub p_d: DVector<f64>,
    pub q_d: DVector<f64>,
}

impl Scenario {
    pub fn zero(n: usize) -> Self {
        Scenario {
            id: String::from("zero"),
            p_g: DVector::zeros(n),
            p_d: DVector::zeros(n),
            q_d: DVector::zeros(n),
        }
    }

    /// Net active injection p = p_g - p_d.
    pub fn net_p(&self) -> DVector<f64> {
        &self.p_g - &self.p_d
    }

    /// Injections seen by the power flow for a given controlled q_g.
    pub fn injection_with(&self, q_g: &DVector<f64>) -> Injection {
        Injection::new(self.net_p(), q_g - &self.q_d)
    }

    /// Injections with inverters idle (q_g = 0).
    pub fn open_loop_injection(&self) -> Injection {
        Injection::new(self.net_p(), -self.q_d.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    /// Fingerprint of the feeder the vectors are indexed against.
    pub fingerprint: Option<u64>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<Scenario>, fingerprint: Option<u64>) -> Self {
        ScenarioSet { scenarios, fingerprint }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn find(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    /// Check every scenario against the feeder: vector lengths, non-negative
    /// demands, and generation confined to generator nodes.
    pub fn validate_against(&self, net: &NetworkModel) -> Result<(), ScenarioError> {
        let n = net.n();
        for s in &self.scenarios {
            if s.p_g.len() != n || s.p_d.len() != n || s.q_d.len() != n {
                return Err(ScenarioError::LengthMismatch {
                    id: s.id.clone(),
                    expected: n,
                });
            }
            for i in 0..n {
                if s.p_d[i] < 0.0 || s.q_d[i] < 0.0 {
                    return Err(ScenarioError::NegativeDemand {
                        id: s.id.clone(),
                        node: net.node(i).id.clone(),
                    });
                }
                if s.p_g[i] < 0.0 {
                    return Err(ScenarioError::NegativeGeneration {
                        id: s.id.clone(),
                        node: net.node(i).id.clone(),
                    });
                }
                if s.p_g[i] > 0.0 && net.node(i).role != NodeRole::Generator {
                    return Err(ScenarioError::GenerationAtNonGenerator {
                        id: s.id.clone(),
                        node: net.node(i).id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario set is empty")]
    EmptySet,
    #[error("split fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("scenario `{id}` has vectors not matching network size {expected}")]
    LengthMismatch { id: String, expected: usize },
    #[error("scenario `{id}` has negative demand at node `{node}`")]
    NegativeDemand { id: String, node: String },
    #[error("scenario `{id}` has negative generation at node `{node}`")]
    NegativeGeneration { id: String, node: String },
    #[error("scenario `{id}` has generation at non-generator node `{node}`")]
    GenerationAtNonGenerator { id: String, node: String },
    #[error("invalid synthesis config: {0}")]
    BadConfig(String),
    #[error("no scenario in the set could be solved")]
    NoSolvableScenario,
    #[error(transparent)]
    Pf(#[from] PfError),
}

#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: ScenarioSet,
    pub test: ScenarioSet,
    pub seed: u64,
    pub fraction: f64,
}

/// Seeded shuffle then partition; both subsets keep the input ordering.
pub fn split_train_test(
    set: &ScenarioSet,
    fraction: f64,
    seed: u64,
) -> Result<SplitResult, ScenarioError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ScenarioError::BadFraction(fraction));
    }
    let n = set.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let train_count = math::floor(fraction * n as f64) as usize;
    let mut train_idx: Vec<usize> = indices[..train_count].to_vec();
    let mut test_idx: Vec<usize> = indices[train_count..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idx: &[usize]| ScenarioSet {
        scenarios: idx.iter().map(|&i| set.scenarios[i].clone()).collect(),
        fingerprint: set.fingerprint,
    };
    Ok(SplitResult {
        train: pick(&train_idx),
        test: pick(&test_idx),
        seed,
        fraction,
    })
}

/// Mean net injections over a training set: p0_i = mean(p_g - p_d),
/// q0_i = mean(-q_d). Historical data carries no controlled VArs, so the
/// reactive operating point is pure demand.
pub fn average_operating_point(
    train: &ScenarioSet,
) -> Result<(DVector<f64>, DVector<f64>), ScenarioError> {
    let m = train.len();
    if m == 0 {
        return Err(ScenarioError::EmptySet);
    }
    let n = train.scenarios[0].p_d.len();
    let mut p0 = DVector::zeros(n);
    let mut q0 = DVector::zeros(n);
    for s in &train.scenarios {
        p0 += s.net_p();
        q0 -= &s.q_d;
    }
    Ok((p0 / m as f64, q0 / m as f64))
}

/// A selected scenario plus the metric that selected it.
#[derive(Debug, Clone)]
pub struct ScenarioPick {
    pub index: usize,
    pub id: String,
    pub metric: f64,
}

/// Open-loop voltage deviation from nominal, `|| v - 1 ||_2`, with q_g = 0.
pub fn open_loop_dev2(
    net: &NetworkModel,
    scen: &Scenario,
    pf: &PfConfig,
) -> Result<Option<f64>, PfError> {
    let prof = solve_pf(net, &scen.open_loop_injection(), pf)?;
    if !prof.converged {
        return Ok(None);
    }
    let dev = prof.v.map(|v| v - 1.0);
    Ok(Some(dev.norm()))
}

/// Scenario with the largest open-loop 2-norm voltage deviation from nominal;
/// the standard design loading condition. Unsolvable scenarios are skipped
/// with a warning. Ties break toward the smaller id.
pub fn select_worst_case(
    train: &ScenarioSet,
    net: &NetworkModel,
    pf: &PfConfig,
) -> Result<ScenarioPick, ScenarioError> {
    if train.is_empty() {
        return Err(ScenarioError::EmptySet);
    }
    let mut best: Option<ScenarioPick> = None;
    for (index, s) in train.scenarios.iter().enumerate() {
        let Some(dev2) = open_loop_dev2(net, s, pf)? else {
            log::warn!("worst-case scan: power flow failed for `{}`, skipped", s.id);
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => dev2 > b.metric || (dev2 == b.metric && s.id < b.id),
        };
        if better {
            best = Some(ScenarioPick {
                index,
                id: s.id.clone(),
                metric: dev2,
            });
        }
    }
    best.ok_or(ScenarioError::NoSolvableScenario)
}

/// The four exemplary hours of the case studies.
#[derive(Debug, Clone)]
pub struct ExemplaryHours {
    /// Maximum total active power demand.
    pub a: ScenarioPick,
    /// Maximum total active power generation.
    pub b: ScenarioPick,
    /// Minimum single-node open-loop voltage.
    pub c: ScenarioPick,
    /// Maximum single-node open-loop voltage.
    pub d: ScenarioPick,
}

pub fn select_exemplary_hours(
    test: &ScenarioSet,
    net: &NetworkModel,
    pf: &PfConfig,
) -> Result<ExemplaryHours, ScenarioError> {
    if test.is_empty() {
        return Err(ScenarioError::EmptySet);
    }
    let mut a: Option<ScenarioPick> = None;
    let mut b: Option<ScenarioPick> = None;
    let mut c: Option<ScenarioPick> = None;
    let mut d: Option<ScenarioPick> = None;
    let prefer_high = |cand: f64, cand_id: &str, cur: &Option<ScenarioPick>| match cur {
        None => true,
        Some(p) => cand > p.metric || (cand == p.metric && *cand_id < *p.id),
    };
    let prefer_low = |cand: f64, cand_id: &str, cur: &Option<ScenarioPick>| match cur {
        None => true,
        Some(p) => cand < p.metric || (cand == p.metric && *cand_id < *p.id),
    };
    for (index, s) in test.scenarios.iter().enumerate() {
        let pick = |metric: f64| ScenarioPick {
            index,
            id: s.id.clone(),
            metric,
        };
        let total_pd = s.p_d.sum();
        if prefer_high(total_pd, &s.id, &a) {
            a = Some(pick(total_pd));
        }
        let total_pg = s.p_g.sum();
        if prefer_high(total_pg, &s.id, &b) {
            b = Some(pick(total_pg));
        }
        let prof = solve_pf(net, &s.open_loop_injection(), pf)?;
        if !prof.converged {
            log::warn!("exemplary-hour scan: power flow failed for `{}`, skipped", s.id);
            continue;
        }
        let vmin = prof.v.min();
        let vmax = prof.v.max();
        if prefer_low(vmin, &s.id, &c) {
            c = Some(pick(vmin));
        }
        if prefer_high(vmax, &s.id, &d) {
            d = Some(pick(vmax));
        }
    }
    match (a, b, c, d) {
        (Some(a), Some(b), Some(c), Some(d)) => Ok(ExemplaryHours { a, b, c, d }),
        _ => Err(ScenarioError::NoSolvableScenario),
    }
}

/// Knobs for the synthetic-year generator.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Peak active demand per node, p.u.
    pub peak_demand: DVector<f64>,
    /// q_d / p_d per node (constant power factor).
    pub reactive_ratio: DVector<f64>,
    /// PV capacity per node, p.u.; nonzero only at generator nodes.
    pub pv_capacity: DVector<f64>,
    /// Relative hourly jitter in [0, 1).
    pub noise: f64,
}

pub const HOURS_PER_YEAR: usize = 8760;

/// Seasonal demand multiplier; peaks mid-January.
pub fn season_load_factor(day: usize) -> f64 {
    0.85 + 0.15 * math::cos(core::f64::consts::TAU * (day as f64 - 15.0) / 365.0)
}

const DAILY_LOAD_SHAPE: [f64; 24] = [
    0.55, 0.50, 0.47, 0.45, 0.45, 0.48, 0.55, 0.65, 0.72, 0.74, 0.75, 0.76, 0.77, 0.76, 0.75,
    0.76, 0.82, 0.92, 1.00, 0.97, 0.90, 0.80, 0.70, 0.60,
];

/// Intra-day demand multiplier with morning ramp and evening peak.
pub fn daily_load_factor(hour: usize) -> f64 {
    DAILY_LOAD_SHAPE[hour % 24]
}

/// Seasonal irradiance multiplier; peaks at the summer solstice.
pub fn season_pv_factor(day: usize) -> f64 {
    0.7 + 0.3 * math::cos(core::f64::consts::TAU * (day as f64 - 172.0) / 365.0)
}

/// Clear-sky solar shape: zero outside 06:00-18:00, unity at noon.
pub fn solar_bell(hour: usize) -> f64 {
    let h = hour as f64;
    if !(6.0..=18.0).contains(&h) {
        return 0.0;
    }
    let s = libm::sin(core::f64::consts::PI * (h - 6.0) / 12.0);
    s.max(0.0)
}

/// Generate 8760 hourly scenarios from daily/seasonal load shapes and solar
/// bell curves with seeded noise. Deterministic per seed.
pub fn synthesize_year(
    net: &NetworkModel,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<ScenarioSet, ScenarioError> {
    let n = net.n();
    if cfg.peak_demand.len() != n || cfg.reactive_ratio.len() != n || cfg.pv_capacity.len() != n {
        return Err(ScenarioError::BadConfig(String::from(
            "config vectors must match network size",
        )));
    }
    if !(0.0..1.0).contains(&cfg.noise) {
        return Err(ScenarioError::BadConfig(String::from("noise must lie in [0, 1)")));
    }
    for i in 0..n {
        if cfg.peak_demand[i] < 0.0 || cfg.reactive_ratio[i] < 0.0 || cfg.pv_capacity[i] < 0.0 {
            return Err(ScenarioError::BadConfig(String::from(
                "peaks, ratios, and capacities must be non-negative",
            )));
        }
        if cfg.pv_capacity[i] > 0.0 && net.node(i).role != NodeRole::Generator {
            return Err(ScenarioError::BadConfig(alloc::format!(
                "pv capacity at non-generator node `{}`",
                net.node(i).id
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenarios = Vec::with_capacity(HOURS_PER_YEAR);
    for day in 0..365 {
        // One irradiance attenuation per day: cloudy days scale the whole bell.
        let u_day: f64 = rng.random_range(0.0..1.0);
        let weather = 1.0 - (2.0 * cfg.noise).min(0.85) * u_day;
        for hour in 0..24 {
            let t = day * 24 + hour;
            let load_level = season_load_factor(day) * daily_load_factor(hour);
            let sun = season_pv_factor(day) * solar_bell(hour) * weather;
            let mut p_d = DVector::zeros(n);
            let mut q_d = DVector::zeros(n);
            let mut p_g = DVector::zeros(n);
            for i in 0..n {
                if cfg.peak_demand[i] > 0.0 {
                    let jitter: f64 = 1.0 + cfg.noise * rng.random_range(-1.0..1.0);
                    let pd = (cfg.peak_demand[i] * load_level * jitter).max(0.0);
                    p_d[i] = pd;
                    q_d[i] = cfg.reactive_ratio[i] * pd;
                }
                if cfg.pv_capacity[i] > 0.0 && sun > 0.0 {
                    let jitter: f64 = 1.0 + 0.5 * cfg.noise * rng.random_range(-1.0..1.0);
                    p_g[i] = (cfg.pv_capacity[i] * sun * jitter).max(0.0);
                }
            }
            scenarios.push(Scenario {
                id: alloc::format!("h{t:04}"),
                p_g,
                p_d,
                q_d,
            });
        }
    }
    Ok(ScenarioSet::new(scenarios, Some(net.fingerprint())))
}
