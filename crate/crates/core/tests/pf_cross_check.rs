//! Two-solver cross-checks and physical sanity properties of the sweep.

mod common;

use nalgebra::DVector;
use vvc_core::cases;
use vvc_core::linmodels::build_ldf;
use vvc_core::powerflow::{solve_pf, Injection, PfConfig};

fn feeder33_loading(load_scale: f64, pv_scale: f64) -> Injection {
    let net = cases::feeder33();
    let (p_d, q_d) = cases::feeder33_nominal_demand();
    let cfg = cases::feeder33_synth();
    let mut p = -p_d * load_scale;
    for &g in net.generator_set() {
        p[g] += cfg.pv_capacity[g] * pv_scale;
    }
    Injection::new(p, -q_d * load_scale)
}

#[test]
fn sweep_matches_newton_on_bundled_feeders() {
    let pf = PfConfig::default();

    let cases_to_check: Vec<(vvc_core::NetworkModel, Injection)> = vec![
        (
            cases::two_bus(),
            Injection::new(DVector::from_element(1, -0.1), DVector::from_element(1, -0.05)),
        ),
        (
            cases::chain(&[(0.01, 0.02), (0.03, 0.05), (0.02, 0.08)]),
            Injection::new(
                DVector::from_vec(vec![-0.1, 0.05, -0.2]),
                DVector::from_vec(vec![-0.04, 0.0, -0.08]),
            ),
        ),
        (cases::feeder33(), feeder33_loading(1.0, 0.0)),
        (cases::feeder33(), feeder33_loading(0.4, 1.0)),
    ];

    for (net, inj) in &cases_to_check {
        let sweep = solve_pf(net, inj, &pf).unwrap();
        assert!(sweep.converged, "sweep failed on n={}", net.n());
        let newton = common::newton_solve(net, inj).expect("newton oracle converged");
        let diff = (&sweep.v - &newton).amax();
        assert!(diff <= 1e-8, "solver disagreement {diff} on n={}", net.n());
    }
}

#[test]
fn reactive_support_never_lowers_path_voltages() {
    let net = cases::feeder33();
    let pf = PfConfig::default();
    let base_inj = feeder33_loading(1.0, 0.0);
    let base = solve_pf(&net, &base_inj, &pf).unwrap();
    assert!(base.converged);

    for &g in net.generator_set() {
        let mut inj = base_inj.clone();
        inj.q[g] += 0.002; // extra q_g at one node
        let bumped = solve_pf(&net, &inj, &pf).unwrap();
        assert!(bumped.converged);
        for i in net.path_to_head(g) {
            assert!(
                bumped.v[i] >= base.v[i] - 1e-12,
                "voltage at {} dropped when q_g rose at {}",
                net.node(i).id,
                net.node(g).id
            );
        }
    }
}

#[test]
fn lossless_small_injection_limit_matches_ldf() {
    let pf = PfConfig::default();
    let feeders = [
        (cases::lossless_variant(&cases::two_bus()), 0.01),
        (
            cases::lossless_variant(&cases::chain(&[(0.01, 0.02), (0.0, 0.05), (0.02, 0.08)])),
            0.01,
        ),
        // the 33-node feeder aggregates injections over long X paths, so the
        // per-node magnitude must stay small for the linear regime to hold
        (cases::lossless_variant(&cases::feeder33()), 6e-4),
    ];
    for (net, scale) in &feeders {
        let ldf = build_ldf(net);
        let n = net.n();
        let p = DVector::from_fn(n, |i, _| if i % 3 == 0 { -*scale } else { *scale / 2.0 });
        let q = DVector::from_fn(n, |i, _| if i % 2 == 0 { -*scale } else { *scale / 2.0 });
        let ac = solve_pf(net, &Injection::new(p.clone(), q.clone()), &pf).unwrap();
        assert!(ac.converged);
        let v_ldf = &ldf.v_flat + &ldf.r * &p + &ldf.x * &q;
        let err = (&ac.v - &v_ldf).amax();
        assert!(err <= 1e-4, "lossless-limit error {err} on n={n}");
    }
}
