//! Polyhedral warm start and a cutting-plane lower bound from the
//! mixed-integer convex relaxation.

use alloc::vec::Vec;

use crate::envelopes::{
    avg_pressure_term, avg_pressure_term_grad, envelope_avg_pressure, envelope_signed_square, envelope_square,
    EnvelopeError,
};
use crate::formulation::{halfspace_row, ProblemModel, PwlLp, VarFamily};
use crate::lp::{bnb_solve_warm, lp_solve, lp_solve_warm, BnbOptions, LinearRow, LpStatus, RowTag, Sense, WarmStart};
use crate::math::{abs, sqrt};

/// Errors of the relaxation solves.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelaxationError {
    #[error("envelope construction failed: {0}")]
    Envelope(#[from] EnvelopeError),
    #[error("relaxation is infeasible: physical bounds are inconsistent")]
    Infeasible,
    #[error("relaxation solve stopped with status {0:?}")]
    Solver(LpStatus),
}

/// Variables added by the envelope substitutions.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeVars {
    /// `v_ij^t` for `theta_ij^2`, indexed `[t * |L| + l]`.
    pub theta_sq: Vec<usize>,
    /// `v_m^t` for `p_m^2`, indexed `[t * |N| + m]`.
    pub pressure_sq: Vec<usize>,
    /// `u_mn^t` for `phi|phi|`, indexed `[t * |P| + k]`.
    pub signed_sq: Vec<usize>,
    /// `w_mn^t` for `-pm pn / (pm + pn)`, indexed `[t * |P| + k]`.
    pub avg_term: Vec<usize>,
}

/// Adds the envelope substitutions to a base LP.
pub fn add_envelopes(model: &ProblemModel, base: &mut PwlLp, l: usize) -> Result<EnvelopeVars, RelaxationError> {
    let inst = &model.instance;
    let lp = &mut base.lp;
    let mut ev = EnvelopeVars { theta_sq: Vec::new(), pressure_sq: Vec::new(), signed_sq: Vec::new(), avg_term: Vec::new() };
    let sq_env: Vec<_> = inst.branches.iter().map(|b| envelope_square(b.theta_min, b.theta_max, l)).collect::<Result<_, _>>()?;
    let pr_env: Vec<_> = inst.nodes.iter().map(|n| envelope_square(n.p_min, n.p_max, l)).collect::<Result<_, _>>()?;
    let ss_env: Vec<_> = inst.pipes.iter().map(|p| envelope_signed_square(-p.flow_max, p.flow_max)).collect::<Result<_, _>>()?;
    let avg_env: Vec<_> = inst
        .pipes
        .iter()
        .map(|p| {
            let (a, b) = (&inst.nodes[p.from], &inst.nodes[p.to]);
            envelope_avg_pressure(a.p_min, a.p_max, b.p_min, b.p_max)
        })
        .collect::<Result<_, _>>()?;
    for t in 0..inst.periods {
        for (l_, br) in inst.branches.iter().enumerate() {
            let th = model.idx(VarFamily::ThetaBr, l_, t);
            let env = &sq_env[l_];
            let hi = crate::math::abs(br.theta_min).max(crate::math::abs(br.theta_max));
            let v = lp.add_var(0.0, hi * hi, 0.0);
            ev.theta_sq.push(v);
            for h in &env.halfspaces {
                lp.add_row(halfspace_row(h, [Some(th), None], v, RowTag::EnvelopeSquare));
            }
            lp.add_row(LinearRow::new(
                alloc::vec![(model.idx(VarFamily::Pij, l_, t), 1.0), (v, -0.5 * br.g_ij), (th, -br.b_ij)],
                Sense::Eq,
                0.0,
                RowTag::EnvelopeLink,
            ));
            lp.add_row(LinearRow::new(
                alloc::vec![(model.idx(VarFamily::Pji, l_, t), 1.0), (v, -0.5 * br.g_ji), (th, br.b_ji)],
                Sense::Eq,
                0.0,
                RowTag::EnvelopeLink,
            ));
        }
        for (m, node) in inst.nodes.iter().enumerate() {
            let p = model.idx(VarFamily::Pressure, m, t);
            let v = lp.add_var(node.p_min * node.p_min, node.p_max * node.p_max, 0.0);
            ev.pressure_sq.push(v);
            for h in &pr_env[m].halfspaces {
                lp.add_row(halfspace_row(h, [Some(p), None], v, RowTag::EnvelopeSquare));
            }
        }
        for (k, pipe) in inst.pipes.iter().enumerate() {
            let phi = model.idx(VarFamily::PipeFlow, k, t);
            let fm = pipe.flow_max;
            let u = lp.add_var(-fm * fm, fm * fm, 0.0);
            ev.signed_sq.push(u);
            for h in &ss_env[k].halfspaces {
                lp.add_row(halfspace_row(h, [Some(phi), None], u, RowTag::EnvelopeSignedSquare));
            }
            let vm = ev.pressure_sq[t * inst.nodes.len() + pipe.from];
            let vn = ev.pressure_sq[t * inst.nodes.len() + pipe.to];
            lp.add_row(LinearRow::new(
                alloc::vec![(u, 1.0), (vm, -pipe.phi), (vn, pipe.phi)],
                Sense::Eq,
                0.0,
                RowTag::EnvelopeLink,
            ));
            let pm = model.idx(VarFamily::Pressure, pipe.from, t);
            let pn = model.idx(VarFamily::Pressure, pipe.to, t);
            let (a, b) = (&inst.nodes[pipe.from], &inst.nodes[pipe.to]);
            let w = lp.add_var(avg_pressure_term(a.p_max, b.p_max), avg_pressure_term(a.p_min, b.p_min), 0.0);
            ev.avg_term.push(w);
            for h in &avg_env[k].halfspaces {
                lp.add_row(halfspace_row(h, [Some(pm), Some(pn)], w, RowTag::EnvelopeAvgPressure));
            }
            lp.add_row(LinearRow::new(
                alloc::vec![(model.idx(VarFamily::AvgPressure, k, t), 1.0), (pm, -2.0 / 3.0), (pn, -2.0 / 3.0), (w, -2.0 / 3.0)],
                Sense::Eq,
                0.0,
                RowTag::EnvelopeLink,
            ));
        }
    }
    Ok(ev)
}

/// Result of the polyhedral relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxResult {
    /// Point over the model variables.
    pub x: Vec<f64>,
    /// LP objective in $.
    pub objective: f64,
    pub iterations: usize,
}

/// Solves the polyhedral relaxation with `l` tangent points per square envelope.
pub fn solve_polyhedral_relaxation(model: &ProblemModel, l: usize, segments: usize) -> Result<RelaxResult, RelaxationError> {
    let mut base = model.base_lp(segments);
    add_envelopes(model, &mut base, l)?;
    let sol = lp_solve(&base.lp);
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(RelaxationError::Infeasible),
        s => return Err(RelaxationError::Solver(s)),
    }
    Ok(RelaxResult {
        x: sol.x[..model.num_vars()].to_vec(),
        objective: sol.objective * model.instance.bases.cost,
        iterations: sol.iterations,
    })
}

/// Settings of the lower-bound solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundOptions {
    /// Cut rounds on the continuous relaxation, then the same number with branch-and-bound.
    pub max_cut_rounds: usize,
    /// Tangent points of the square envelopes.
    pub l: usize,
    pub segments: usize,
    /// Violation below which no cut is added.
    pub cut_tol: f64,
    /// Integer rounds stop once the bound gains less than this, relative.
    pub stall_tol: f64,
    pub bnb: BnbOptions,
}

impl Default for LowerBoundOptions {
    fn default() -> Self {
        LowerBoundOptions {
            max_cut_rounds: 20,
            l: 10,
            segments: 32,
            cut_tol: 1e-7,
            stall_tol: 1e-7,
            bnb: BnbOptions { max_nodes: 400, ..BnbOptions::default() },
        }
    }
}

/// Outcome of the lower-bound solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    /// Valid lower bound in $.
    pub objective: f64,
    /// Model-variable part of the final solution.
    pub x: Vec<f64>,
    /// Cuts added in total.
    pub cuts: usize,
    /// Rounds executed (continuous and integer).
    pub rounds: usize,
    /// Largest remaining conic or convex violation at the returned point.
    pub residual_violation: f64,
    /// False when the round limit stopped cut generation with violation left.
    pub converged: bool,
    /// Lower bound after each integer round, in $.
    pub bound_trace: Vec<f64>,
    pub lp_solves: usize,
    /// False if branch-and-bound hit its node limit.
    pub search_complete: bool,
}

struct LbVars {
    y: Vec<usize>,
    xi: Vec<usize>,
    zeta: Vec<usize>,
}

fn pipe_rows(model: &ProblemModel, base: &mut PwlLp) -> LbVars {
    let inst = &model.instance;
    let lp = &mut base.lp;
    let mut out = LbVars { y: Vec::new(), xi: Vec::new(), zeta: Vec::new() };
    for t in 0..inst.periods {
        for (k, p) in inst.pipes.iter().enumerate() {
            let (a, b) = (&inst.nodes[p.from], &inst.nodes[p.to]);
            let phi = model.idx(VarFamily::PipeFlow, k, t);
            let pm = model.idx(VarFamily::Pressure, p.from, t);
            let pn = model.idx(VarFamily::Pressure, p.to, t);
            let y = lp.add_var(0.0, 1.0, 0.0);
            let lo = a.p_min.min(b.p_min);
            let hi = a.p_max.max(b.p_max);
            let xi = lp.add_var(lo, hi, 0.0);
            let zeta = lp.add_var(lo, hi, 0.0);
            out.y.push(y);
            out.xi.push(xi);
            out.zeta.push(zeta);
            let fm = p.flow_max;
            let r = |c: Vec<(usize, f64)>, s: Sense, rhs: f64, tag: RowTag| LinearRow::new(c, s, rhs, tag);
            lp.add_row(r(alloc::vec![(phi, 1.0), (y, -fm)], Sense::Le, 0.0, RowTag::PipeDirection));
            lp.add_row(r(alloc::vec![(phi, 1.0), (y, -fm)], Sense::Ge, -fm, RowTag::PipeDirection));
            // pm - pn <= y (pm_max - pn_min)
            let d1 = a.p_max - b.p_min;
            lp.add_row(r(alloc::vec![(pm, 1.0), (pn, -1.0), (y, -d1)], Sense::Le, 0.0, RowTag::PipePressureDirection));
            // pm - pn >= (1 - y)(pm_min - pn_max)
            let d2 = a.p_min - b.p_max;
            lp.add_row(r(alloc::vec![(pm, 1.0), (pn, -1.0), (y, d2)], Sense::Ge, d2, RowTag::PipePressureDirection));
            // xi - pm within (1 - y)[pn_min - pm_max, pn_max - pm_min]
            let (up, dn) = (b.p_max - a.p_min, b.p_min - a.p_max);
            lp.add_row(r(alloc::vec![(xi, 1.0), (pm, -1.0), (y, up)], Sense::Le, up, RowTag::AuxPressure));
            lp.add_row(r(alloc::vec![(xi, 1.0), (pm, -1.0), (y, dn)], Sense::Ge, dn, RowTag::AuxPressure));
            // xi - pn within y [pm_min - pn_max, pm_max - pn_min]
            let (up, dn) = (a.p_max - b.p_min, a.p_min - b.p_max);
            lp.add_row(r(alloc::vec![(xi, 1.0), (pn, -1.0), (y, -up)], Sense::Le, 0.0, RowTag::AuxPressure));
            lp.add_row(r(alloc::vec![(xi, 1.0), (pn, -1.0), (y, -dn)], Sense::Ge, 0.0, RowTag::AuxPressure));
            // zeta - pn within (1 - y)[pm_min - pn_max, pm_max - pn_min]
            let (up, dn) = (a.p_max - b.p_min, a.p_min - b.p_max);
            lp.add_row(r(alloc::vec![(zeta, 1.0), (pn, -1.0), (y, up)], Sense::Le, up, RowTag::AuxPressure));
            lp.add_row(r(alloc::vec![(zeta, 1.0), (pn, -1.0), (y, dn)], Sense::Ge, dn, RowTag::AuxPressure));
            // zeta - pm within y [pn_min - pm_max, pn_max - pm_min]
            let (up, dn) = (b.p_max - a.p_min, b.p_min - a.p_max);
            lp.add_row(r(alloc::vec![(zeta, 1.0), (pm, -1.0), (y, -up)], Sense::Le, 0.0, RowTag::AuxPressure));
            lp.add_row(r(alloc::vec![(zeta, 1.0), (pm, -1.0), (y, -dn)], Sense::Ge, 0.0, RowTag::AuxPressure));
        }
    }
    out
}

/// Cut `xi >= (zeta0 / g) zeta + (phi0 / (Phi g)) phi` with `g = sqrt(zeta0^2 + phi0^2 / Phi)`.
pub fn soc_cut(xi: usize, zeta: usize, phi: usize, zeta0: f64, phi0: f64, big_phi: f64) -> Option<LinearRow> {
    let g = sqrt(zeta0 * zeta0 + phi0 * phi0 / big_phi);
    (g > 0.0).then(|| {
        LinearRow::new(alloc::vec![(xi, 1.0), (zeta, -zeta0 / g), (phi, -phi0 / (big_phi * g))], Sense::Ge, 0.0, RowTag::SocCut)
    })
}

/// Cut `pavg >= (2/3)(pm + pn + f_x(a, b) pm + f_y(a, b) pn)` with `f = -xy/(x+y)`.
pub fn avg_pressure_cut(pavg: usize, pm: usize, pn: usize, a: f64, b: f64) -> LinearRow {
    let [gx, gy] = avg_pressure_term_grad(a, b);
    let c = 2.0 / 3.0;
    LinearRow::new(alloc::vec![(pavg, 1.0), (pm, -c * (1.0 + gx)), (pn, -c * (1.0 + gy))], Sense::Ge, 0.0, RowTag::AvgPressureCut)
}

/// Cut `p >= g theta0 theta - g theta0^2 / 2 + sb theta` for a convex loss term.
pub fn electric_cut(p: usize, theta: usize, g: f64, sb: f64, theta0: f64) -> LinearRow {
    LinearRow::new(alloc::vec![(p, 1.0), (theta, -(g * theta0 + sb))], Sense::Ge, -0.5 * g * theta0 * theta0, RowTag::ElectricCut)
}

struct CutContext<'a> {
    model: &'a ProblemModel,
    v: &'a LbVars,
    tol: f64,
}

impl CutContext<'_> {
    /// Adds violated cuts at `x` and returns `(cuts added, max violation)`.
    fn separate(&self, x: &[f64], out: &mut Vec<LinearRow>) -> (usize, f64) {
        let inst = &self.model.instance;
        let m = self.model;
        let mut added = 0;
        let mut worst: f64 = 0.0;
        for t in 0..inst.periods {
            for (k, p) in inst.pipes.iter().enumerate() {
                let idx = t * inst.pipes.len() + k;
                let (xi, zeta) = (self.v.xi[idx], self.v.zeta[idx]);
                let phi = m.idx(VarFamily::PipeFlow, k, t);
                let g = sqrt(x[zeta] * x[zeta] + x[phi] * x[phi] / p.phi);
                let viol = g - x[xi];
                worst = worst.max(viol);
                if viol > self.tol {
                    if let Some(c) = soc_cut(xi, zeta, phi, x[zeta], x[phi], p.phi) {
                        out.push(c);
                        added += 1;
                    }
                }
                let pm = m.idx(VarFamily::Pressure, p.from, t);
                let pn = m.idx(VarFamily::Pressure, p.to, t);
                let pavg = m.idx(VarFamily::AvgPressure, k, t);
                let viol = 2.0 / 3.0 * (x[pm] + x[pn] + avg_pressure_term(x[pm], x[pn])) - x[pavg];
                worst = worst.max(viol);
                if viol > self.tol {
                    out.push(avg_pressure_cut(pavg, pm, pn, x[pm], x[pn]));
                    added += 1;
                }
            }
            for (l, br) in inst.branches.iter().enumerate() {
                let th = m.idx(VarFamily::ThetaBr, l, t);
                for (p, g, sb) in [(m.idx(VarFamily::Pij, l, t), br.g_ij, br.b_ij), (m.idx(VarFamily::Pji, l, t), br.g_ji, -br.b_ji)] {
                    if g <= 0.0 {
                        continue;
                    }
                    let viol = 0.5 * g * x[th] * x[th] + sb * x[th] - x[p];
                    worst = worst.max(viol);
                    if viol > self.tol {
                        out.push(electric_cut(p, th, g, sb, x[th]));
                        added += 1;
                    }
                }
            }
        }
        (added, worst)
    }
}

/// Lower bound from the mixed-integer convex relaxation via Kelley cuts.
///
/// Cut rounds first run on the continuous relaxation, then on the
/// mixed-binary problem solved by branch-and-bound. Every cut is valid, so
/// the bound of each integer round is a valid lower bound.
pub fn micp_lower_bound(model: &ProblemModel, opts: &LowerBoundOptions) -> Result<LowerBound, RelaxationError> {
    let mut base = model.base_lp(opts.segments);
    add_envelopes(model, &mut base, opts.l)?;
    let vars = pipe_rows(model, &mut base);
    let cx = CutContext { model, v: &vars, tol: opts.cut_tol };
    let mut binaries: Vec<usize> = model.binaries.clone();
    binaries.extend_from_slice(&vars.y);
    let cost = model.instance.bases.cost;
    let mut lp = base.lp;
    let mut cuts = 0;
    let mut rounds = 0;
    let mut lp_solves = 0;

    let mut warm: Option<WarmStart> = None;
    let mut root_x = Vec::new();
    for _ in 0..opts.max_cut_rounds {
        let (sol, basis) = lp_solve_warm(&lp, &lp.lower, &lp.upper, &opts.bnb.simplex, warm.as_ref());
        warm = basis;
        lp_solves += 1;
        rounds += 1;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(RelaxationError::Infeasible),
            s => return Err(RelaxationError::Solver(s)),
        }
        let mut new = Vec::new();
        let (added, _) = cx.separate(&sol.x, &mut new);
        cuts += added;
        lp.rows.extend(new);
        root_x = sol.x;
        if added == 0 {
            break;
        }
    }

    let mut bound_trace = Vec::new();
    let mut last_x = root_x[..model.num_vars().min(root_x.len())].to_vec();
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut complete = true;
    let mut best: f64 = f64::NEG_INFINITY;
    for _ in 0..opts.max_cut_rounds.max(1) {
        let res = bnb_solve_warm(&lp, &binaries, &opts.bnb, warm.as_ref());
        warm = res.root_basis.clone();
        lp_solves += res.lp_solves;
        rounds += 1;
        complete &= res.complete;
        let prev = best;
        if res.best_bound.is_finite() {
            best = best.max(res.best_bound * cost);
        }
        let stalled = prev.is_finite() && best - prev <= opts.stall_tol * abs(best);
        bound_trace.push(best);
        match res.solution.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible if res.complete => return Err(RelaxationError::Infeasible),
            _ if !res.complete && best.is_finite() => break,
            s => return Err(RelaxationError::Solver(s)),
        }
        let mut new = Vec::new();
        let (added, worst) = cx.separate(&res.solution.x, &mut new);
        residual = worst.max(0.0);
        last_x = res.solution.x[..model.num_vars()].to_vec();
        cuts += added;
        if added == 0 {
            converged = true;
            break;
        }
        if stalled {
            break;
        }
        lp.rows.extend(new);
    }
    Ok(LowerBound {
        objective: best,
        x: last_x,
        cuts,
        rounds,
        residual_violation: residual,
        converged,
        bound_trace,
        lp_solves,
        search_complete: complete,
    })
}
