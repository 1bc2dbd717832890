//! Brute-force bracket of the global optimum of a two-bus, two-node instance
//! with one line, one pipe, one compressor in parallel and one supply.
//!
//! Lower end: the electric side separates per period into a function of the
//! line angle; gas cost is bounded below through the summed nodal balances.
//! Upper end: a grid over (pressures, compressor ratio, z) per period, with
//! flows recovered exactly from the physics, linked across periods through
//! the feasible linepack interval.

use moegf::formulation::VarFamily as F;
use moegf::{Instance, ProblemModel};

pub const GRID: usize = 200;

#[derive(Debug, Clone)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    /// Feasible point attaining `upper`, in model variable order.
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Period {
    theta: f64,
    pa: f64,
    pb: f64,
    gas_gpg: f64,
}

fn avg_pressure(x: f64, y: f64) -> f64 {
    2.0 / 3.0 * (x + y - x * y / (x + y))
}

fn gen_cost(inst: &Instance, g: usize, p: f64) -> f64 {
    let gen = &inst.generators[g];
    let mwh = p * inst.bases.power_mva * inst.dt;
    gen.c2 * mwh * mwh + gen.c1 * mwh + gen.c0 * inst.dt
}

fn supply_cost(inst: &Instance, s: f64) -> f64 {
    inst.supplies[0].cost_per_m3 * s * inst.bases.flow_m3s * 3600.0 * inst.dt
}

/// Electric dispatch at angle `theta` in period `t`, or `None` if a bound fails.
fn electric(inst: &Instance, t: usize, theta: f64) -> Option<Period> {
    let br = &inst.branches[0];
    let pij = 0.5 * br.g_ij * theta * theta + br.b_ij * theta;
    let pji = 0.5 * br.g_ji * theta * theta - br.b_ji * theta;
    if pij.abs() > br.limit || pji.abs() > br.limit {
        return None;
    }
    let (ga, gb) = (&inst.generators[0], &inst.generators[1]);
    let b0 = &inst.buses[ga.bus];
    let b1 = &inst.buses[gb.bus];
    let pa = b0.demand[t] + b0.g_sh + pij;
    let pb = b1.demand[t] + b1.g_sh + pji;
    if pa < ga.p_min || pa > ga.p_max || pb < gb.p_min || pb > gb.p_max {
        return None;
    }
    let eta = gb.gpg.unwrap().1;
    Some(Period { theta, pa, pb, gas_gpg: pb / (inst.hhv_pu() * eta) })
}

/// Electric cost plus the gas bought for the gas-powered unit.
fn period_cost(inst: &Instance, p: &Period) -> f64 {
    gen_cost(inst, 0, p.pa) + gen_cost(inst, 1, p.pb) + supply_cost(inst, p.gas_gpg)
}

fn best_angle(inst: &Instance, t: usize) -> Period {
    let br = &inst.branches[0];
    let (lo, hi) = (br.theta_min, br.theta_max);
    let at = |i: usize| lo + (hi - lo) * i as f64 / (GRID - 1) as f64;
    let f = |th: f64| electric(inst, t, th).map(|p| period_cost(inst, &p)).unwrap_or(f64::INFINITY);
    let mut bi = 0;
    for i in 0..GRID {
        if f(at(i)) < f(at(bi)) {
            bi = i;
        }
    }
    assert!(f(at(bi)).is_finite(), "no feasible angle in period {t}");
    // Golden-section refinement inside the neighbouring grid cells, keeping
    // the best feasible evaluation since the optimum may sit on a bound.
    let mut best = (f(at(bi)), at(bi));
    let mut eval = |th: f64| {
        let v = f(th);
        if v < best.0 {
            best = (v, th);
        }
        v
    };
    let (mut a, mut b) = (at(bi.saturating_sub(1)), at((bi + 1).min(GRID - 1)));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if eval(c) <= eval(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let th = best.1;
    electric(inst, t, th).unwrap()
}

#[derive(Debug, Clone, Copy)]
struct GasState {
    z: f64,
    pm: f64,
    pn: f64,
    phi: f64,
    linepack: f64,
}

/// Pressure configurations of one period, flows from the motion equation.
fn gas_states(inst: &Instance) -> Vec<GasState> {
    let pipe = &inst.pipes[0];
    let comp = &inst.nonpipes[0];
    let (n0, n1) = (&inst.nodes[pipe.from], &inst.nodes[pipe.to]);
    let mut out = Vec::new();
    let mut push = |z: f64, pm: f64, pn: f64| {
        if pn < n1.p_min - 1e-12 || pn > n1.p_max + 1e-12 {
            return;
        }
        let d = pm * pm - pn * pn;
        let phi = d.signum() * (pipe.phi * d.abs()).sqrt();
        if phi.abs() > pipe.flow_max {
            return;
        }
        out.push(GasState { z, pm, pn, phi, linepack: pipe.psi * avg_pressure(pm, pn) });
    };
    let grid = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (GRID - 1) as f64;
    let (clo, chi) = (n0.p_min.max(n1.p_min), n0.p_max.min(n1.p_max));
    for i in 0..GRID {
        let p = grid(clo, chi, i);
        push(0.0, p, p);
    }
    for i in 0..GRID {
        let pm = grid(n0.p_min, n0.p_max, i);
        for j in 0..GRID {
            push(1.0, pm, pm * grid(comp.ratio_min, comp.ratio_max, j));
        }
    }
    out
}

/// Interval of `u = fin - fout` admissible for a state in period `t`.
fn flow_change_interval(inst: &Instance, t: usize, s: &GasState, gas_gpg: f64) -> (f64, f64) {
    let pipe = &inst.pipes[0];
    let comp = &inst.nonpipes[0];
    let sup = &inst.supplies[0];
    let d0 = inst.nodes[pipe.from].demand[t];
    let d1 = inst.nodes[pipe.to].demand[t];
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut clamp = |a: f64, b: f64| {
        lo = lo.max(a);
        hi = hi.min(b);
    };
    // fin = phi + u/2, fout = phi - u/2 within the pipe limit.
    clamp(2.0 * (-pipe.flow_max - s.phi), 2.0 * (pipe.flow_max - s.phi));
    clamp(2.0 * (s.phi - pipe.flow_max), 2.0 * (s.phi + pipe.flow_max));
    // Compressor flow fc = d1 + gpg - fout.
    let base = d1 + gas_gpg - s.phi;
    let (fc_lo, fc_hi) = if s.z > 0.5 { (0.0, comp.flow_max) } else { (-comp.flow_max, 0.0) };
    clamp(2.0 * (fc_lo - base), 2.0 * (fc_hi - base));
    // Supply s = d0 + d1 + gpg + u.
    let total = d0 + d1 + gas_gpg;
    clamp(sup.flow_min - total, sup.flow_max - total);
    (lo, hi)
}

fn assemble(model: &ProblemModel, periods: &[Period], states: &[GasState], linepack0: f64) -> Vec<f64> {
    let inst = &model.instance;
    let mut x = vec![0.0; model.num_vars()];
    let mut prev = linepack0;
    let comp = &inst.nonpipes[0];
    let pipe = &inst.pipes[0];
    for (t, (p, s)) in periods.iter().zip(states).enumerate() {
        let br = &inst.branches[0];
        x[model.idx(F::ThetaBr, 0, t)] = p.theta;
        x[model.idx(F::Theta, br.from, t)] = p.theta;
        x[model.idx(F::Pij, 0, t)] = 0.5 * br.g_ij * p.theta * p.theta + br.b_ij * p.theta;
        x[model.idx(F::Pji, 0, t)] = 0.5 * br.g_ji * p.theta * p.theta - br.b_ji * p.theta;
        x[model.idx(F::Pg, 0, t)] = p.pa;
        x[model.idx(F::Pg, 1, t)] = p.pb;
        x[model.idx(F::GpgFlow, 0, t)] = p.gas_gpg;
        let u = (s.linepack - prev) / inst.dt;
        let fin = s.phi + 0.5 * u;
        let fout = s.phi - 0.5 * u;
        let fc = inst.nodes[pipe.to].demand[t] + p.gas_gpg - fout;
        x[model.idx(F::Pressure, pipe.from, t)] = s.pm;
        x[model.idx(F::Pressure, pipe.to, t)] = s.pn;
        x[model.idx(F::AvgPressure, 0, t)] = avg_pressure(s.pm, s.pn);
        x[model.idx(F::Linepack, 0, t)] = s.linepack;
        x[model.idx(F::PipeFlow, 0, t)] = s.phi;
        x[model.idx(F::FlowIn, 0, t)] = fin;
        x[model.idx(F::FlowOut, 0, t)] = fout;
        x[model.idx(F::Z, 0, t)] = s.z;
        x[model.idx(F::NonPipeFlow, 0, t)] = fc;
        x[model.idx(F::CompPlus, 0, t)] = fc.max(0.0);
        x[model.idx(F::CompMinus, 0, t)] = fc.min(0.0);
        x[model.idx(F::CompConsumed, 0, t)] = comp.consumption * fc.max(0.0);
        x[model.idx(F::Supply, 0, t)] = inst.nodes[pipe.from].demand[t] + fin + fc;
        prev = s.linepack;
    }
    x
}

/// Cost of a point computed from its dispatch and supply values.
pub fn point_cost(model: &ProblemModel, x: &[f64]) -> f64 {
    let inst = &model.instance;
    (0..inst.periods)
        .map(|t| {
            gen_cost(inst, 0, x[model.idx(F::Pg, 0, t)])
                + gen_cost(inst, 1, x[model.idx(F::Pg, 1, t)])
                + supply_cost(inst, x[model.idx(F::Supply, 0, t)])
        })
        .sum()
}

/// Brackets the optimum of a two-period instance of the supported shape.
pub fn bracket(model: &ProblemModel) -> Bracket {
    let inst = &model.instance;
    assert_eq!(inst.periods, 2);
    assert_eq!((inst.buses.len(), inst.branches.len(), inst.generators.len()), (2, 1, 2));
    assert_eq!((inst.nodes.len(), inst.pipes.len(), inst.nonpipes.len(), inst.supplies.len()), (2, 1, 1, 1));
    assert!(inst.generators[0].gpg.is_none() && inst.generators[1].gpg.is_some());
    let pipe = &inst.pipes[0];
    let l0 = pipe.initial_linepack;
    let lmin = inst.final_linepack_min.unwrap_or(f64::NEG_INFINITY).max(pipe.psi * inst.avg_pressure_bounds(0).0);

    let periods: Vec<Period> = (0..2).map(|t| best_angle(inst, t)).collect();
    let demand: f64 = (0..2).map(|t| inst.nodes.iter().map(|n| n.demand[t]).sum::<f64>()).sum();
    // Summed balances: total supply = demand + gpg gas + (final - initial linepack) / dt.
    let k = supply_cost(inst, 1.0);
    let lower = periods.iter().map(|p| period_cost(inst, p)).sum::<f64>()
        + k * demand
        + k * (lmin - l0) / inst.dt;

    let states = gas_states(inst);
    let mut first: Vec<(f64, usize)> = states
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            let (a, b) = flow_change_interval(inst, 0, s, periods[0].gas_gpg);
            let u = (s.linepack - l0) / inst.dt;
            a <= u && u <= b
        })
        .map(|(i, s)| (s.linepack, i))
        .collect();
    first.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best: Option<(f64, usize, usize)> = None;
    for (j, s) in states.iter().enumerate() {
        if s.linepack < lmin || best.is_some_and(|b| s.linepack >= b.0) {
            continue;
        }
        let (a, b) = flow_change_interval(inst, 1, s, periods[1].gas_gpg);
        if a > b {
            continue;
        }
        // u = (l2 - l1) / dt in [a, b]  <=>  l1 in [l2 - b dt, l2 - a dt].
        let (lo, hi) = (s.linepack - b * inst.dt, s.linepack - a * inst.dt);
        let pos = first.partition_point(|e| e.0 < lo);
        if let Some(&(l1, i)) = first.get(pos) {
            if l1 <= hi {
                best = Some((s.linepack, i, j));
            }
        }
    }
    let (_, i, j) = best.expect("grid found no feasible gas trajectory");
    let x = assemble(model, &periods, &[states[i], states[j]], l0);
    let upper = point_cost(model, &x);
    Bracket { lower, upper, x }
}
