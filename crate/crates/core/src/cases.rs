//! Bundled test feeders.
//!
//! `feeder33` is the classic 33-bus radial benchmark (12.66 kV) with the
//! original substation bus kept as a junction node and a new head node
//! attached through a short series regulator branch, giving 33 non-head
//! nodes. Six of its nodes host PV inverters. The same data ships as JSON
//! next to the CLI; the two must stay bit-identical.

use nalgebra::DVector;

use crate::network::{FeederBuilder, NetworkModel, NodeRole};
use crate::scenario::SynthConfig;

pub const FEEDER33_BASE_MVA: f64 = 100.0;
pub const FEEDER33_BASE_KV: f64 = 12.66;

/// (from bus, to bus, r ohm, x ohm, P kW, Q kvar) for buses 2..=33.
/// Bus 1 is the old substation, fed from the head through REGULATOR_OHM.
const FEEDER33_BRANCHES: [(usize, usize, f64, f64, f64, f64); 32] = [
    (1, 2, 0.0922, 0.0470, 100.0, 60.0),
    (2, 3, 0.4930, 0.2511, 90.0, 40.0),
    (3, 4, 0.3660, 0.1864, 120.0, 80.0),
    (4, 5, 0.3811, 0.1941, 60.0, 30.0),
    (5, 6, 0.8190, 0.7070, 60.0, 20.0),
    (6, 7, 0.1872, 0.6188, 200.0, 100.0),
    (7, 8, 0.7114, 0.2351, 200.0, 100.0),
    (8, 9, 1.0300, 0.7400, 60.0, 20.0),
    (9, 10, 1.0440, 0.7400, 60.0, 20.0),
    (10, 11, 0.1966, 0.0650, 45.0, 30.0),
    (11, 12, 0.3744, 0.1238, 60.0, 35.0),
    (12, 13, 1.4680, 1.1550, 60.0, 35.0),
    (13, 14, 0.5416, 0.7129, 120.0, 80.0),
    (14, 15, 0.5910, 0.5260, 60.0, 10.0),
    (15, 16, 0.7463, 0.5450, 60.0, 20.0),
    (16, 17, 1.2890, 1.7210, 60.0, 20.0),
    (17, 18, 0.7320, 0.5740, 90.0, 40.0),
    (2, 19, 0.1640, 0.1565, 90.0, 40.0),
    (19, 20, 1.5042, 1.3554, 90.0, 40.0),
    (20, 21, 0.4095, 0.4784, 90.0, 40.0),
    (21, 22, 0.7089, 0.9373, 90.0, 40.0),
    (3, 23, 0.4512, 0.3083, 90.0, 50.0),
    (23, 24, 0.8980, 0.7091, 420.0, 200.0),
    (24, 25, 0.8960, 0.7011, 420.0, 200.0),
    (6, 26, 0.2030, 0.1034, 60.0, 25.0),
    (26, 27, 0.2842, 0.1447, 60.0, 25.0),
    (27, 28, 1.0590, 0.9337, 60.0, 20.0),
    (28, 29, 0.8042, 0.7006, 120.0, 70.0),
    (29, 30, 0.5075, 0.2585, 200.0, 600.0),
    (30, 31, 0.9744, 0.9630, 150.0, 70.0),
    (31, 32, 0.3105, 0.3619, 210.0, 100.0),
    (32, 33, 0.3410, 0.5302, 60.0, 40.0),
];

/// Head-to-bus-1 regulator branch, series impedance only (ohm).
const REGULATOR_OHM: (f64, f64) = (0.01, 0.04);

/// (bus, PV capacity kW) — inverter nodes.
const FEEDER33_PV: [(usize, f64); 6] = [
    (14, 300.0),
    (18, 400.0),
    (22, 200.0),
    (25, 350.0),
    (30, 300.0),
    (33, 250.0),
];

/// Hourly demand peaks as a fraction of the nominal bus loads. Sized so the
/// synthetic year spans both under- and over-voltage hours while staying in
/// the regime where the year-mean linearization certifies the closed loop.
const FEEDER33_PEAK_FRACTION: f64 = 0.35;

fn bus_id(bus: usize) -> alloc::string::String {
    alloc::format!("n{bus:02}")
}

/// Smallest legal feeder: head "source" plus one load node, z = 0.01 + j0.02 p.u.
pub fn two_bus() -> NetworkModel {
    FeederBuilder::new(1.0, 1.0)
        .node("load", NodeRole::Load)
        .branch("source", "load", 0.01, 0.02)
        .build()
        .expect("two_bus is valid")
}

/// Straight chain head -> c1 -> c2 -> ... with given per-unit impedances.
pub fn chain(impedances: &[(f64, f64)]) -> NetworkModel {
    let mut b = FeederBuilder::new(1.0, 1.0);
    let mut prev = alloc::string::String::from("head");
    for (i, &(r, x)) in impedances.iter().enumerate() {
        let id = alloc::format!("c{}", i + 1);
        b = b.node(&id, NodeRole::Load).branch(&prev, &id, r, x);
        prev = id;
    }
    b.build().expect("chain is valid")
}

/// The bundled 33-node feeder (n = 33, n_g = 6).
pub fn feeder33() -> NetworkModel {
    let z_base = FEEDER33_BASE_KV * FEEDER33_BASE_KV / FEEDER33_BASE_MVA;
    let mut b = FeederBuilder::new(FEEDER33_BASE_MVA, 1.0);
    b = b.node_kv("n01", NodeRole::Junction, FEEDER33_BASE_KV);
    for &(_, to, _, _, _, _) in &FEEDER33_BRANCHES {
        let role = if FEEDER33_PV.iter().any(|&(g, _)| g == to) {
            NodeRole::Generator
        } else {
            NodeRole::Load
        };
        b = b.node_kv(&bus_id(to), role, FEEDER33_BASE_KV);
    }
    b = b.branch("sub", "n01", REGULATOR_OHM.0 / z_base, REGULATOR_OHM.1 / z_base);
    for &(from, to, r, x, _, _) in &FEEDER33_BRANCHES {
        b = b.branch(&bus_id(from), &bus_id(to), r / z_base, x / z_base);
    }
    b.build().expect("feeder33 is valid")
}

/// Synthetic-year generator config matched to [`feeder33`]: nominal bus loads
/// as demand peaks, PV capacities at the six inverter nodes.
pub fn feeder33_synth() -> SynthConfig {
    let net = feeder33();
    let n = net.n();
    let kw_to_pu = 1.0e-3 / FEEDER33_BASE_MVA;
    let mut peak = DVector::zeros(n);
    let mut ratio = DVector::zeros(n);
    for &(_, to, _, _, p_kw, q_kvar) in &FEEDER33_BRANCHES {
        let i = net.index_of(&bus_id(to)).expect("bus exists");
        peak[i] = p_kw * FEEDER33_PEAK_FRACTION * kw_to_pu;
        ratio[i] = if p_kw > 0.0 { q_kvar / p_kw } else { 0.0 };
    }
    let mut pv = DVector::zeros(n);
    for &(bus, cap_kw) in &FEEDER33_PV {
        let i = net.index_of(&bus_id(bus)).expect("pv bus exists");
        pv[i] = cap_kw * kw_to_pu;
    }
    SynthConfig {
        peak_demand: peak,
        reactive_ratio: ratio,
        pv_capacity: pv,
        noise: 0.15,
    }
}

/// Same topology with all series resistance removed; used for lossless-limit
/// studies where the sweep and LinDistFlow must agree.
pub fn lossless_variant(net: &NetworkModel) -> NetworkModel {
    let mut b = FeederBuilder::new(net.base_mva(), net.head_voltage());
    for rec in net.nodes() {
        b.nodes.push(rec.clone());
    }
    for (i, rec) in net.nodes().iter().enumerate() {
        let from: alloc::string::String = match net.parent(i) {
            Some(p) => net.node(p).id.clone(),
            None => alloc::string::String::from(net.head_id()),
        };
        let z = net.branch_into(i);
        b = b.branch(&from, &rec.id, 0.0, z.x);
    }
    b.build().expect("lossless variant preserves validity")
}

/// Total nominal demand of [`feeder33`] in per-unit, demand-weighted.
pub fn feeder33_nominal_demand() -> (DVector<f64>, DVector<f64>) {
    let net = feeder33();
    let kw_to_pu = 1.0e-3 / FEEDER33_BASE_MVA;
    let mut p = DVector::zeros(net.n());
    let mut q = DVector::zeros(net.n());
    for &(_, to, _, _, p_kw, q_kvar) in &FEEDER33_BRANCHES {
        let i = net.index_of(&bus_id(to)).expect("bus exists");
        p[i] = p_kw * kw_to_pu;
        q[i] = q_kvar * kw_to_pu;
    }
    (p, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feeder33_totals() {
        let (p, q) = feeder33_nominal_demand();
        // 3715 kW / 2300 kvar on a 100 MVA base
        assert!((p.sum() - 0.03715).abs() < 1e-12);
        assert!((q.sum() - 0.02300).abs() < 1e-12);
    }

    #[test]
    fn generator_positions_ascend() {
        let net = feeder33();
        let gens: alloc::vec::Vec<usize> = net.generator_set().to_vec();
        assert_eq!(gens.len(), 6);
        assert!(gens.windows(2).all(|w| w[0] < w[1]));
        for &g in &gens {
            assert_eq!(net.node(g).role, NodeRole::Generator);
        }
    }

    #[test]
    fn lossless_variant_zeroes_resistance() {
        let net = feeder33();
        let ll = lossless_variant(&net);
        assert_eq!(ll.n(), net.n());
        for i in 0..ll.n() {
            assert_eq!(ll.branch_into(i).r, 0.0);
            assert_eq!(ll.branch_into(i).x, net.branch_into(i).x);
        }
        assert_eq!(ll.generator_set(), net.generator_set());
    }
}
