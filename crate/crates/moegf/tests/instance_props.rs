mod common;

use std::collections::BTreeMap;

use moegf::formulation::{linearize_at, VarFamily};
use moegf::instance::{compressibility, compute_pipe_constants, GasConstants};
use moegf::lp::RowTag;
use moegf::{build_moegf, Instance, SiInstance};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn numbers(si: &SiInstance) -> Vec<f64> {
    let mut v = vec![si.horizon.dt_hours];
    for b in &si.buses {
        v.push(b.shunt_conductance_pu);
        v.extend(&b.demand_mw);
    }
    for b in &si.branches {
        v.extend(b.admittance_pu);
        v.extend([b.tap_ratio, b.tap_shift_deg, b.limit_mw, b.angle_min_deg, b.angle_max_deg]);
    }
    for g in &si.generators {
        v.extend([g.p_min_mw, g.p_max_mw, g.ramp_down_mw_per_h, g.ramp_up_mw_per_h, g.c2, g.c1, g.c0, g.initial_mw]);
        v.push(g.efficiency.unwrap_or(-1.0));
    }
    for n in &si.nodes {
        v.extend([n.pressure_min_pa, n.pressure_max_pa]);
        v.extend(&n.demand_m3s);
    }
    for p in &si.pipes {
        v.extend([p.diameter_m, p.length_m, p.flow_max_m3s, p.initial_linepack_m3]);
    }
    for c in si.compressors.iter().chain(&si.regulators) {
        v.extend([c.flow_max_m3s, c.ratio_min, c.ratio_max, c.consumption]);
    }
    for s in &si.supplies {
        v.extend([s.flow_min_m3s, s.flow_max_m3s, s.cost_per_m3]);
    }
    v.push(si.final_linepack_min_m3.unwrap_or(-1.0));
    v
}

fn expected_census(inst: &Instance) -> BTreeMap<RowTag, usize> {
    let h = inst.periods;
    let gpg = inst.generators.iter().filter(|g| g.gpg.is_some()).count();
    let c = inst.num_compressors();
    let e = inst.nonpipes.len();
    let p = inst.pipes.len();
    let mut m = BTreeMap::new();
    let mut put = |t: RowTag, n: usize| {
        if n > 0 {
            m.insert(t, n);
        }
    };
    put(RowTag::Ramp, 2 * inst.generators.len() * h);
    put(RowTag::AngleDiff, inst.branches.len() * h);
    put(RowTag::Kcl, inst.buses.len() * h);
    put(RowTag::GpgCoupling, gpg * h);
    put(RowTag::GasNodal, inst.nodes.len() * h);
    put(RowTag::AvgFlow, p * h);
    put(RowTag::Linepack, p * h);
    put(RowTag::Continuity, p * h);
    for t in [RowTag::CompSplit, RowTag::CompTrap, RowTag::CompPlus, RowTag::CompMinus] {
        put(t, c * h);
    }
    put(RowTag::NonPipeFlow, 2 * e * h);
    for t in [RowTag::BoostUpper, RowTag::BoostLower, RowTag::NoBoostUpper, RowTag::NoBoostLower] {
        put(t, e * h);
    }
    put(RowTag::FinalLinepack, usize::from(inst.final_linepack_min.is_some()));
    m
}

fn interior_point(lower: &[f64], upper: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lower.iter().zip(upper).map(|(&lo, &hi)| lo + rng.gen_range(0.05..0.95) * (hi - lo)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn per_unit_round_trip(b in 2usize..6, n in 2usize..6, h in 1usize..4, seed in any::<u64>()) {
        let si = common::random_si(b, n, h, seed);
        let back = Instance::from_si(&si).unwrap().to_si();
        let (x, y) = (numbers(&si), numbers(&back));
        prop_assert_eq!(x.len(), y.len());
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn pipe_length_scaling(d in 0.2f64..1.2, l in 1e3f64..1e5, lo in 2e6f64..4e6, span in 1e6f64..4e6) {
        let c = GasConstants::default();
        let bounds = (lo, lo + span);
        let a = compute_pipe_constants(d, l, bounds, bounds, &c).unwrap();
        let b = compute_pipe_constants(d, 2.0 * l, bounds, bounds, &c).unwrap();
        prop_assert!((b.phi - 0.5 * a.phi).abs() <= 1e-12 * a.phi);
        prop_assert!((b.psi - 2.0 * a.psi).abs() <= 1e-12 * b.psi);
        prop_assert_eq!(a, compute_pipe_constants(d, l, bounds, bounds, &c).unwrap());
    }

    #[test]
    fn compressibility_decreases_with_pressure(p in 1e5f64..1e7, dp in 1e3f64..1e6) {
        let c = GasConstants::default();
        let (z1, z2) = (compressibility(p, p, &c), compressibility(p + dp, p + dp, &c));
        prop_assert!(z2 < z1 && z1 < 1.0 && z2 > 0.0);
    }

    #[test]
    fn census_matches_closed_form(b in 2usize..6, n in 2usize..6, h in 1usize..4, seed in any::<u64>(), final_lp in any::<bool>()) {
        let mut si = common::random_si(b, n, h, seed);
        if final_lp {
            si.final_linepack_min_m3 = Some(si.pipes.iter().map(|p| p.initial_linepack_m3).sum());
        }
        let inst = Instance::from_si(&si).unwrap();
        let model = build_moegf(&inst);
        prop_assert_eq!(model.census(), expected_census(&inst));
        prop_assert_eq!(model.residuals.len(), h * (2 * inst.branches.len() + 2 * inst.pipes.len()));
        prop_assert_eq!(model.binaries.len(), h * inst.nonpipes.len());
    }

    #[test]
    fn variable_space_is_a_bijection_with_finite_bounds(b in 2usize..5, n in 2usize..5, h in 1usize..4, seed in any::<u64>()) {
        let inst = Instance::from_si(&common::random_si(b, n, h, seed)).unwrap();
        let model = build_moegf(&inst);
        for j in 0..model.num_vars() {
            let (f, e, t) = model.vars.locate(j).unwrap();
            prop_assert_eq!(model.idx(f, e, t), j);
            prop_assert!(model.lower[j].is_finite() && model.upper[j].is_finite() && model.lower[j] <= model.upper[j]);
        }
        prop_assert!(model.vars.locate(model.num_vars()).is_none());
        for &f in VarFamily::all() {
            prop_assert!(model.vars.count(f) > 0, "family {:?} is empty", f);
        }
    }

    #[test]
    fn tangent_rows_hold_at_expansion_point(b in 2usize..5, n in 2usize..5, h in 1usize..3, seed in any::<u64>()) {
        let inst = Instance::from_si(&common::random_si(b, n, h, seed)).unwrap();
        let model = build_moegf(&inst);
        let xk = interior_point(&model.lower, &model.upper, seed);
        let nv = model.num_vars();
        let rows = linearize_at(&model, &xk, 3, nv).unwrap();
        let mut x = xk.clone();
        x.resize(nv + model.num_electric, 0.0);
        for (r, res) in rows.iter().zip(&model.residuals) {
            let scale = r.coeffs.iter().map(|&(j, c)| (c * x[j]).abs()).fold(r.rhs.abs(), f64::max).max(1.0);
            // The linear model reproduces h at the expansion point.
            let gap = r.activity(&x) - r.rhs - res.eval(&xk).unwrap();
            prop_assert!(gap.abs() <= 1e-12 * scale, "{:?}: {}", res.kind, gap);
            prop_assert_eq!(r.stamp, Some(3));
        }
    }

    #[test]
    fn gradients_match_central_differences(seed in any::<u64>()) {
        let inst = Instance::from_si(&common::random_si(3, 3, 2, seed)).unwrap();
        let model = build_moegf(&inst);
        let x = interior_point(&model.lower, &model.upper, seed);
        let h = 1e-6;
        for r in &model.residuals {
            for (j, g) in r.gradient(&x).unwrap() {
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let fd = (r.eval(&xp).unwrap() - r.eval(&xm).unwrap()) / (2.0 * h);
                prop_assert!((g - fd).abs() <= 1e-6 * g.abs().max(1.0), "{:?}: {} vs {}", r.kind, g, fd);
            }
        }
    }
}

#[test]
fn rejects_compressor_ratio_below_one() {
    let mut si = common::random_si(2, 2, 1, 1);
    si.compressors[0].ratio_max = 0.9;
    let err = Instance::from_si(&si).unwrap_err();
    assert!(err.to_string().contains("compressor ratio bound"), "{err}");
}
