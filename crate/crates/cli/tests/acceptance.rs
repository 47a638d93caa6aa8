//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its key numbers and asserting its stated tolerances and runtime budget.
//! Run with `cargo test -p vvc-cli --test acceptance -- --nocapture`.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vvc_cli::{feeder, parallel, scenarios};
use vvc_core::design::{equilibrium_voltage, DesignProblem, DesignResult};
use vvc_core::linmodels::{build_ldf, lpf_offset, LinearPlant, LpfModel};
use vvc_core::network::NetworkModel;
use vvc_core::powerflow::{solve_pf, Injection, PfConfig};
use vvc_core::scenario::{
    average_operating_point, select_worst_case, split_train_test, synthesize_year, Scenario,
    ScenarioSet,
};
use vvc_core::simloop::{
    simulate_closed_loop, simulate_linear_loop, LoopConfig, LoopOutcome,
};
use vvc_core::stability::{criterion_value, spectral_radius, Criterion, GainVector};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

struct Fixture {
    net: NetworkModel,
    pf: PfConfig,
    train: ScenarioSet,
    worst: Scenario,
    model: LpfModel,
    plant: LinearPlant,
    v_ref: DVector<f64>,
    designs: [DesignResult; 3],
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let pf = PfConfig::default();
        let net = feeder::load_feeder(&data_dir().join("feeder33.json")).unwrap();
        let cfg =
            scenarios::load_synth_config(&data_dir().join("feeder33_synth.json"), &net).unwrap();
        let year = synthesize_year(&net, &cfg, 42).unwrap();
        let split = split_train_test(&year, 0.9, 42).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (7884, 876));
        let (p0, q0) = average_operating_point(&split.train).unwrap();
        let model = parallel::build_jacobians_parallel(&net, &p0, &q0, 1e-6, &pf).unwrap();
        let plant = LinearPlant::Lpf(model.clone());
        let worst_pick = select_worst_case(&split.train, &net, &pf).unwrap();
        let worst = split.train.scenarios[worst_pick.index].clone();
        let v_ref = DVector::from_element(net.n(), 1.0);
        let offset = lpf_offset(&model, &worst).unwrap();
        let design_for = |criterion| {
            let problem = DesignProblem {
                plant: &plant,
                gens: net.generator_set().to_vec(),
                offset: offset.clone(),
                v_ref: v_ref.clone(),
                beta: 0.06,
                epsilon: 1e-3,
                criterion,
                multistart: 8,
                seed: 42,
            };
            parallel::optimize_slopes_parallel(&problem).unwrap()
        };
        let designs = [
            design_for(Criterion::Rho),
            design_for(Criterion::Norm2),
            design_for(Criterion::Holder),
        ];
        Fixture {
            net,
            pf,
            train: split.train,
            worst,
            model,
            plant,
            v_ref,
            designs,
        }
    })
}

/// Per-node +-20% warp of the training mean, the Fig. 5 scenario generator.
fn perturbed_scenarios(fx: &Fixture, count: usize, seed: u64) -> ScenarioSet {
    let n = fx.net.n();
    let m = fx.train.len() as f64;
    let mut mean = Scenario::zero(n);
    for s in &fx.train.scenarios {
        mean.p_d += &s.p_d;
        mean.q_d += &s.q_d;
        mean.p_g += &s.p_g;
    }
    mean.p_d /= m;
    mean.q_d /= m;
    mean.p_g /= m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios = (0..count)
        .map(|i| {
            let mut warp = |v: f64| v * (1.0 + 0.2 * rng.random_range(-1.0..1.0f64));
            Scenario {
                id: format!("r{i:03}"),
                p_g: mean.p_g.map(&mut warp),
                p_d: mean.p_d.map(&mut warp),
                q_d: mean.q_d.map(&mut warp),
            }
        })
        .collect();
    ScenarioSet::new(scenarios, Some(fx.net.fingerprint()))
}

fn loop_cfg(conv_tol: f64, max_steps: usize) -> LoopConfig {
    let mut cfg = LoopConfig::nonincremental();
    cfg.conv_tol = conv_tol;
    cfg.max_steps = max_steps;
    cfg.history_stride = usize::MAX;
    cfg
}

#[test]
fn criterion_1_lpf_beats_ldf_on_perturbed_scenarios() {
    let t0 = Instant::now();
    let fx = fixture();
    let set = perturbed_scenarios(fx, 500, 7);
    let ldf = build_ldf(&fx.net);
    let report =
        vvc_core::linmodels::model_error_report(&fx.net, &fx.model, &ldf, &set, &fx.pf, 50)
            .unwrap();
    assert!(report.skipped.is_empty());
    assert!(
        report.lpf_max_abs_error <= report.ldf_max_abs_error,
        "LPF {} vs LDF {}",
        report.lpf_max_abs_error,
        report.ldf_max_abs_error
    );
    assert!(report.lpf_max_abs_error <= 0.005);
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "runtime {elapsed:.1}s");
    println!(
        "ACCEPTANCE 1 lpf-vs-ldf-accuracy: PASS (LPF {:.2e} <= LDF {:.2e}, LPF <= 5e-3) [{elapsed:.1}s]",
        report.lpf_max_abs_error, report.ldf_max_abs_error
    );
}

#[test]
fn criterion_2_stability_region_nesting_on_published_fixture() {
    let t0 = Instant::now();
    let jq = vvc_core::stability::two_node_fixture();
    let grid = 200usize;
    let kmin = -1.5f64;
    let limit = 1.0 - 1e-3;

    // independent oracle for the 2x2 spectral radius
    let rho_oracle = |m: &DMatrix<f64>| -> f64 {
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = tr * tr - 4.0 * det;
        if disc >= 0.0 {
            let r = disc.sqrt();
            ((tr + r) / 2.0).abs().max(((tr - r) / 2.0).abs())
        } else {
            det.sqrt()
        }
    };

    let mut counts = [0usize; 3]; // rho, norm2, holder
    for a in 0..grid {
        let k1 = kmin * a as f64 / (grid as f64 - 1.0);
        for b in 0..grid {
            let k2 = kmin * b as f64 / (grid as f64 - 1.0);
            let slopes = DVector::from_vec(vec![k1, k2]);
            let value =
                |c: Criterion| criterion_value(&jq, &[0, 1], &slopes, c).unwrap();
            let rho = value(Criterion::Rho);
            let m = &jq * DMatrix::from_diagonal(&slopes);
            assert!(
                (rho - rho_oracle(&m)).abs() <= 1e-10,
                "eigensolve vs characteristic polynomial at ({k1}, {k2})"
            );
            let feasible = [
                rho <= limit,
                value(Criterion::Norm2) <= limit,
                value(Criterion::Holder) <= limit,
            ];
            // nesting per cell: holder => norm2 => rho
            assert!(!feasible[2] || feasible[1], "holder outside norm2 at ({k1}, {k2})");
            assert!(!feasible[1] || feasible[0], "norm2 outside rho at ({k1}, {k2})");
            for (slot, &f) in feasible.iter().enumerate() {
                counts[slot] += f as usize;
            }
        }
    }
    assert!(
        counts[0] >= counts[1] + 1 && counts[1] >= counts[2] + 1,
        "containment not strict: {counts:?}"
    );
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "runtime {elapsed:.1}s");
    println!(
        "ACCEPTANCE 2 stability-region-nesting: PASS (cells rho {} > norm2 {} > holder {}) [{elapsed:.1}s]",
        counts[0], counts[1], counts[2]
    );
}

#[test]
fn criterion_3_ten_percent_overgain_destabilizes() {
    let t0 = Instant::now();
    let fx = fixture();
    let rho_design = &fx.designs[0];
    assert!(rho_design.verdict.feasible);

    let stable = simulate_closed_loop(
        &fx.net,
        &rho_design.k,
        &fx.worst,
        &fx.v_ref,
        &loop_cfg(1e-4, 20_000),
        &fx.pf,
    )
    .unwrap();
    assert_eq!(stable.outcome, LoopOutcome::Converged, "x1.0 must converge");

    let mut cfg = loop_cfg(1e-4, 20_000);
    cfg.history_stride = 1;
    let wild = simulate_closed_loop(
        &fx.net,
        &rho_design.k.scaled(1.1),
        &fx.worst,
        &fx.v_ref,
        &cfg,
        &fx.pf,
    )
    .unwrap();
    assert_eq!(wild.outcome, LoopOutcome::Diverged, "x1.1 must diverge");

    // growing oscillation: sign-alternating voltage increments at >= 1 generator
    let h = &wild.v_history;
    assert!(h.len() >= 8, "trace too short to judge oscillation");
    let window = 6.min(h.len() - 1);
    let alternating = fx.net.generator_set().iter().any(|&g| {
        let start = h.len() - 1 - window;
        (start..h.len() - 2).all(|t| {
            let d1 = h[t + 1][g] - h[t][g];
            let d2 = h[t + 2][g] - h[t + 1][g];
            d1 * d2 < 0.0
        })
    });
    assert!(alternating, "no generator shows sign-alternating increments");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "runtime {elapsed:.1}s");
    println!(
        "ACCEPTANCE 3 overgain-destabilization: PASS (x1.0 converged in {} steps, x1.1 diverged in {} with oscillation) [{elapsed:.1}s]",
        stable.steps, wild.steps
    );
}

#[test]
fn criterion_4_constraint_conservatism_ordering() {
    let t0 = Instant::now();
    let fx = fixture();
    let [rho, norm2, holder] = &fx.designs;
    assert!(
        rho.objective <= norm2.objective + 1e-6,
        "rho {} vs norm2 {}",
        rho.objective,
        norm2.objective
    );
    assert!(
        norm2.objective <= holder.objective + 1e-6,
        "norm2 {} vs holder {}",
        norm2.objective,
        holder.objective
    );

    let run = |design: &DesignResult| {
        simulate_closed_loop(
            &fx.net,
            &design.k,
            &fx.worst,
            &fx.v_ref,
            &loop_cfg(1e-4, 20_000),
            &fx.pf,
        )
        .unwrap()
    };
    let rho_trace = run(rho);
    let holder_trace = run(holder);
    assert_eq!(rho_trace.outcome, LoopOutcome::Converged);
    assert_eq!(holder_trace.outcome, LoopOutcome::Converged);
    assert!(
        rho_trace.metrics.dev2 <= holder_trace.metrics.dev2 + 1e-9,
        "post-control dev2: rho {} vs holder {}",
        rho_trace.metrics.dev2,
        holder_trace.metrics.dev2
    );
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "runtime {elapsed:.1}s");
    println!(
        "ACCEPTANCE 4 conservatism-ordering: PASS (objectives {:.4e} <= {:.4e} <= {:.4e}; dev2 {:.4} <= {:.4}) [{elapsed:.1}s]",
        rho.objective, norm2.objective, holder.objective,
        rho_trace.metrics.dev2, holder_trace.metrics.dev2
    );
}

#[test]
fn criterion_5_incremental_stabilization_and_speedup() {
    let t0 = Instant::now();
    let fx = fixture();
    let k = &fx.designs[0].k;

    let non_x1 = simulate_closed_loop(
        &fx.net,
        k,
        &fx.worst,
        &fx.v_ref,
        &loop_cfg(1e-4, 200_000),
        &fx.pf,
    )
    .unwrap();
    assert_eq!(non_x1.outcome, LoopOutcome::Converged);

    let non_x25 = simulate_closed_loop(
        &fx.net,
        &k.scaled(25.0),
        &fx.worst,
        &fx.v_ref,
        &loop_cfg(1e-4, 200_000),
        &fx.pf,
    )
    .unwrap();
    assert_eq!(non_x25.outcome, LoopOutcome::Diverged, "x25 without filter must diverge");

    let mut inc = LoopConfig::incremental(0.05);
    inc.conv_tol = 1e-4;
    inc.max_steps = 200_000;
    inc.history_stride = usize::MAX;
    let inc_x25 =
        simulate_closed_loop(&fx.net, &k.scaled(25.0), &fx.worst, &fx.v_ref, &inc, &fx.pf)
            .unwrap();
    assert_eq!(inc_x25.outcome, LoopOutcome::Converged, "x25 with filter must converge");
    assert!(
        10 * inc_x25.steps <= non_x1.steps,
        "step ratio too small: incremental {} vs nonincremental {}",
        inc_x25.steps,
        non_x1.steps
    );
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "runtime {elapsed:.1}s");
    println!(
        "ACCEPTANCE 5 incremental-stabilization: PASS (x25 filtered {} steps vs x1 unfiltered {} steps, x25 unfiltered diverged) [{elapsed:.1}s]",
        inc_x25.steps, non_x1.steps
    );
}

#[test]
fn criterion_6_equilibrium_oracle() {
    let t0 = Instant::now();
    let fx = fixture();
    let sens = fx.plant.q_sensitivity();
    let gens = fx.net.generator_set().to_vec();
    let max_diag = (0..fx.net.n())
        .map(|i| sens[(i, i)])
        .fold(0.0f64, f64::max);
    let k_lb = -0.9 * (1.0 - 1e-3) / max_diag;
    let offset = lpf_offset(&fx.model, &fx.worst).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut tested = 0;
    let mut worst_linear_gap = 0.0f64;
    let mut worst_nonlinear_gap = 0.0f64;
    while tested < 50 {
        let slopes = DVector::from_fn(gens.len(), |_, _| rng.random_range(k_lb..=0.0));
        let rho = criterion_value(sens, &gens, &slopes, Criterion::Rho).unwrap();
        if rho > 0.9 {
            continue;
        }
        tested += 1;
        let k = GainVector::from_generator_slopes(fx.net.n(), &gens, &slopes).unwrap();
        let v_star = equilibrium_voltage(sens, &k, &offset.v_tilde, &fx.v_ref).unwrap();

        let mut lin_cfg = loop_cfg(1e-12, 200_000);
        lin_cfg.divergence_v_limit = 1.0;
        let lin = simulate_linear_loop(&fx.plant, &k, &offset, &fx.v_ref, &lin_cfg).unwrap();
        assert_eq!(lin.outcome, LoopOutcome::Converged);
        let lin_gap = (&lin.v_final - &v_star).amax();
        assert!(lin_gap <= 1e-8, "linear loop off equilibrium by {lin_gap}");
        worst_linear_gap = worst_linear_gap.max(lin_gap);

        let nl = simulate_closed_loop(
            &fx.net,
            &k,
            &fx.worst,
            &fx.v_ref,
            &loop_cfg(1e-6, 50_000),
            &fx.pf,
        )
        .unwrap();
        assert_eq!(nl.outcome, LoopOutcome::Converged);
        let nl_gap = (&nl.v_final - &v_star).amax();
        assert!(nl_gap <= 5e-3, "nonlinear loop off equilibrium by {nl_gap}");
        worst_nonlinear_gap = worst_nonlinear_gap.max(nl_gap);
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "runtime {elapsed:.1}s");
    println!(
        "ACCEPTANCE 6 equilibrium-oracle: PASS (50 gains; linear gap <= {worst_linear_gap:.1e}, nonlinear gap <= {worst_nonlinear_gap:.1e}) [{elapsed:.1}s]"
    );
}

#[test]
fn criterion_7_jacobian_property_suite() {
    let t0 = Instant::now();
    let fx = fixture();
    let pf = PfConfig::default();

    // dense random probe on every bundled feeder
    let probe = |net: &NetworkModel, p0: &DVector<f64>, q0: &DVector<f64>, seed: u64| -> f64 {
        let model = parallel::build_jacobians_parallel(net, p0, q0, 1e-6, &pf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dq: DVector<f64> = DVector::from_fn(net.n(), |_, _| rng.random_range(-1.0..1.0));
        dq *= 1e-4 / dq.amax();
        let truth = solve_pf(net, &Injection::new(p0.clone(), q0 + &dq), &pf).unwrap();
        assert!(truth.converged);
        (&truth.v - (&model.v_base + &model.jq * &dq)).amax()
    };

    let two_bus = feeder::load_feeder(&data_dir().join("two_bus.json")).unwrap();
    let g1 = probe(
        &two_bus,
        &DVector::from_element(1, -0.05),
        &DVector::from_element(1, -0.02),
        1,
    );
    assert!(g1 <= 1e-6, "two-bus probe error {g1}");
    let g2 = probe(&fx.net, &fx.model.p0, &fx.model.q0, 2);
    assert!(g2 <= 1e-6, "feeder33 probe error {g2}");

    // spectral reduction vs full-matrix eigensolve, 100 random gains
    let gens = fx.net.generator_set().to_vec();
    let sens = fx.plant.q_sensitivity();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let slopes: DVector<f64> =
            DVector::from_fn(gens.len(), |_, _| -rng.random_range(0.0..0.2f64));
        let r_block = criterion_value(sens, &gens, &slopes, Criterion::Rho).unwrap();
        let k = GainVector::from_generator_slopes(fx.net.n(), &gens, &slopes).unwrap();
        let full = sens * DMatrix::from_diagonal(k.as_vector());
        let r_full = spectral_radius(&full).unwrap();
        worst = worst.max((r_block - r_full).abs());
    }
    assert!(worst <= 1e-10, "reduction mismatch {worst}");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "runtime {elapsed:.1}s");
    println!(
        "ACCEPTANCE 7 jacobian-property-suite: PASS (probe errors {g1:.1e}, {g2:.1e}; reduction gap {worst:.1e}) [{elapsed:.1}s]"
    );
}

#[test]
fn criterion_8_uniform_slope_baseline() {
    let t0 = Instant::now();
    let fx = fixture();
    let gens = fx.net.generator_set().to_vec();
    let sens = fx.plant.q_sensitivity();

    // a uniform guaranteed-stable slope: half the Hölder bound, which implies
    // the spectral-radius condition with margin
    let unit = DVector::from_element(gens.len(), -1.0);
    let holder_unit = criterion_value(sens, &gens, &unit, Criterion::Holder).unwrap();
    let uniform_slope = -0.5 * (1.0 - 1e-3) / holder_unit;
    let k_uniform = GainVector::from_generator_slopes(
        fx.net.n(),
        &gens,
        &DVector::from_element(gens.len(), uniform_slope),
    )
    .unwrap();

    let open = solve_pf(&fx.net, &fx.worst.open_loop_injection(), &fx.pf).unwrap();
    assert!(open.converged);
    let open_dev2 = vvc_core::simloop::deviation_metrics(&open.v, &fx.v_ref).dev2;

    let run = |k: &GainVector| {
        let trace = simulate_closed_loop(
            &fx.net,
            k,
            &fx.worst,
            &fx.v_ref,
            &loop_cfg(1e-4, 20_000),
            &fx.pf,
        )
        .unwrap();
        assert_eq!(trace.outcome, LoopOutcome::Converged);
        trace.metrics.dev2
    };
    let uniform_dev2 = run(&k_uniform);
    let optimized_dev2 = run(&fx.designs[0].k);

    assert!(
        uniform_dev2 < open_dev2,
        "uniform slope failed to improve: {uniform_dev2} vs open {open_dev2}"
    );
    assert!(
        optimized_dev2 <= uniform_dev2,
        "optimized design worse than uniform: {optimized_dev2} vs {uniform_dev2}"
    );
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "runtime {elapsed:.1}s");
    println!(
        "ACCEPTANCE 8 uniform-slope-baseline: PASS (dev2 open {open_dev2:.4} > uniform {uniform_dev2:.4} >= optimized {optimized_dev2:.4}) [{elapsed:.1}s]"
    );
}
