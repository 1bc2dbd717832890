//! Random instances for property tests.

#![allow(dead_code)]

use moegf::instance::{
    average_pressure, compute_pipe_constants, GasConstants, GeneratorKind, SiBranch, SiBus, SiGenerator, SiHorizon, SiNode,
    SiNonPipe, SiPipe, SiSupply,
};
use moegf::SiInstance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Chain networks with one compressor, one gas-powered unit and one supply.
pub fn random_si(buses: usize, nodes: usize, periods: usize, seed: u64) -> SiInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (0..periods).map(|_| rng.gen_range(lo..hi)).collect::<Vec<f64>>();
    let bus_id = |i: usize| format!("B{i}");
    let node_id = |i: usize| format!("N{i}");
    let buses_v: Vec<SiBus> = (0..buses)
        .map(|i| SiBus { id: bus_id(i), shunt_conductance_pu: 0.0, demand_mw: series(&mut rng, 10.0, 50.0) })
        .collect();
    let branches = (0..buses - 1)
        .map(|i| SiBranch {
            id: format!("L{i}"),
            from: bus_id(i),
            to: bus_id(i + 1),
            admittance_pu: [rng.gen_range(0.5..2.0), -rng.gen_range(5.0..15.0)],
            tap_ratio: 1.0,
            tap_shift_deg: 0.0,
            limit_mw: 250.0,
            angle_min_deg: -30.0,
            angle_max_deg: 30.0,
        })
        .collect();
    let mut generators = vec![SiGenerator {
        id: "G0".into(),
        bus: bus_id(0),
        kind: GeneratorKind::NonGpg,
        p_min_mw: 0.0,
        p_max_mw: 300.0,
        ramp_down_mw_per_h: 300.0,
        ramp_up_mw_per_h: 300.0,
        c2: rng.gen_range(0.0..0.03),
        c1: rng.gen_range(20.0..50.0),
        c0: 100.0,
        efficiency: None,
        gas_node: None,
        initial_mw: 50.0,
    }];
    generators.push(SiGenerator {
        id: "G1".into(),
        bus: bus_id(buses - 1),
        kind: GeneratorKind::Gpg,
        p_min_mw: 5.0,
        p_max_mw: 100.0,
        ramp_down_mw_per_h: 100.0,
        ramp_up_mw_per_h: 100.0,
        c2: rng.gen_range(0.0..0.01),
        c1: rng.gen_range(2.0..10.0),
        c0: 50.0,
        efficiency: Some(rng.gen_range(0.35..0.55)),
        gas_node: Some(node_id(nodes - 1)),
        initial_mw: 40.0,
    });
    let nodes_v: Vec<SiNode> = (0..nodes)
        .map(|i| SiNode {
            id: node_id(i),
            pressure_min_pa: rng.gen_range(3.0e6..3.5e6),
            pressure_max_pa: rng.gen_range(6.0e6..7.0e6),
            demand_m3s: series(&mut rng, 1.0, 5.0),
        })
        .collect();
    let c = GasConstants::default();
    let pipes = (0..nodes - 1)
        .map(|i| {
            let (a, b) = (&nodes_v[i], &nodes_v[i + 1]);
            let (d, l) = (rng.gen_range(0.4..0.8), rng.gen_range(1.0e4..5.0e4));
            let k = compute_pipe_constants(d, l, (a.pressure_min_pa, a.pressure_max_pa), (b.pressure_min_pa, b.pressure_max_pa), &c)
                .unwrap();
            let mid = |n: &SiNode| 0.5 * (n.pressure_min_pa + n.pressure_max_pa);
            SiPipe {
                id: format!("P{i}"),
                from: node_id(i),
                to: node_id(i + 1),
                diameter_m: d,
                length_m: l,
                flow_max_m3s: 60.0,
                initial_linepack_m3: k.psi * average_pressure(mid(a), mid(b)),
            }
        })
        .collect();
    SiInstance {
        name: format!("random-{seed}"),
        schema_version: 1,
        horizon: SiHorizon { periods, dt_hours: 1.0 },
        buses: buses_v,
        branches,
        generators,
        nodes: nodes_v,
        pipes,
        compressors: vec![SiNonPipe {
            id: "C0".into(),
            from: node_id(0),
            to: node_id(1),
            flow_max_m3s: 50.0,
            ratio_min: 1.0,
            ratio_max: 1.5,
            consumption: 0.01,
        }],
        regulators: Vec::new(),
        supplies: vec![SiSupply { id: "S0".into(), node: node_id(0), flow_min_m3s: 0.0, flow_max_m3s: 80.0, cost_per_m3: 0.05 }],
        constants: None,
        final_linepack_min_m3: None,
    }
}
