//! Linear closed-loop consistency with the algebraic equilibrium, and the
//! incremental filter's stabilizing effect.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vvc_core::cases;
use vvc_core::design::equilibrium_voltage;
use vvc_core::linmodels::{build_ldf, LdfModel, LinearPlant, ScenarioOffset};
use vvc_core::simloop::{simulate_linear_loop, LoopConfig, LoopOutcome};
use vvc_core::stability::{check_stability, two_node_fixture, Criterion, GainVector};

fn tight_config() -> LoopConfig {
    let mut cfg = LoopConfig::nonincremental();
    cfg.conv_tol = 1e-12;
    cfg.max_steps = 100_000;
    cfg.history_stride = 1000;
    cfg
}

#[test]
fn linear_loop_settles_on_the_algebraic_equilibrium() {
    let plant = LinearPlant::Ldf(build_ldf(&cases::feeder33()));
    let net = cases::feeder33();
    let gens = net.generator_set().to_vec();
    let n = net.n();
    let v_ref = DVector::from_element(n, 1.0);
    let offset = ScenarioOffset {
        v_tilde: DVector::from_fn(n, |i, _| 1.0 - 0.002 * (i as f64 % 7.0)),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut tested = 0;
    while tested < 20 {
        let slopes = DVector::from_fn(gens.len(), |_, _| -rng.random_range(0.0..0.25));
        let k = GainVector::from_generator_slopes(n, &gens, &slopes).unwrap();
        let verdict = check_stability(&plant, &k, Criterion::Rho, 1e-3).unwrap();
        if !verdict.feasible || verdict.value > 0.95 {
            continue;
        }
        tested += 1;
        let trace = simulate_linear_loop(&plant, &k, &offset, &v_ref, &tight_config()).unwrap();
        assert_eq!(trace.outcome, LoopOutcome::Converged);
        let v_star =
            equilibrium_voltage(plant.q_sensitivity(), &k, &offset.v_tilde, &v_ref).unwrap();
        let gap = (&trace.v_final - &v_star).amax();
        assert!(gap <= 1e-8, "loop/equilibrium gap {gap}");
    }
}

#[test]
fn filter_stabilizes_far_beyond_the_rho_boundary() {
    let plant = LinearPlant::Ldf(LdfModel {
        x: two_node_fixture(),
        r: DMatrix::zeros(2, 2),
        v_flat: DVector::from_element(2, 1.0),
    });
    let gens = vec![0usize, 1];
    let v_ref = DVector::from_element(2, 1.0);
    let offset = ScenarioOffset {
        v_tilde: DVector::from_vec(vec![1.04, 1.03]),
    };

    // normalize a slope direction onto the rho boundary, then go 25x past it
    let base = GainVector::from_generator_slopes(2, &gens, &DVector::from_vec(vec![-0.3, -0.2]))
        .unwrap();
    let rho = check_stability(&plant, &base, Criterion::Rho, 1e-3).unwrap().value;
    let boundary = base.scaled((1.0 - 1e-3) / rho);
    let wild = boundary.scaled(25.0);

    let mut non_inc = LoopConfig::nonincremental();
    non_inc.max_steps = 20_000;
    let diverged = simulate_linear_loop(&plant, &wild, &offset, &v_ref, &non_inc).unwrap();
    assert_eq!(diverged.outcome, LoopOutcome::Diverged);

    let mut inc = LoopConfig::incremental(0.05);
    inc.max_steps = 5000;
    let stabilized = simulate_linear_loop(&plant, &wild, &offset, &v_ref, &inc).unwrap();
    assert_eq!(stabilized.outcome, LoopOutcome::Converged);

    // and the filtered high-gain loop beats the boundary design on step count
    let slow = simulate_linear_loop(&plant, &boundary, &offset, &v_ref, &non_inc).unwrap();
    assert_eq!(slow.outcome, LoopOutcome::Converged);
    assert!(
        stabilized.steps < slow.steps,
        "incremental {} vs nonincremental {}",
        stabilized.steps,
        slow.steps
    );
}
