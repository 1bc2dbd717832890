//! Sequential linear programming: the shared continuous phase, the
//! iterative MILP phase and the LP steering phase.

use alloc::vec::Vec;

use crate::diagnostics::{IterationRecord, SolveStatus};
use crate::formulation::{linearize_at, DomainError, ProblemModel, PwlLp, ResidualKind, VarFamily};
use crate::lp::{add_abs_penalty, bnb_solve_with, lp_solve, BnbOptions, LinearRow, LpProblem, LpStatus, RowTag, Sense};
use crate::math::abs;
use crate::relaxation::{solve_polyhedral_relaxation, RelaxationError};

/// Algorithm parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverParams {
    /// Feasibility tolerance on `C_max`.
    pub epsilon: f64,
    /// Iteration budget per phase.
    pub max_iters: usize,
    /// Electric slack weight, $ per pu.
    pub sigma: f64,
    /// Initial flow step penalty, $ per pu.
    pub alpha_init: f64,
    /// Penalty growth factor.
    pub gamma: f64,
    /// Penalty cap.
    pub alpha_max: f64,
    /// Steering weight, $.
    pub beta: f64,
    /// Steering gate period.
    pub kf: usize,
    /// Segments of the piecewise-linear cost.
    pub segments: usize,
    /// Tangent points of the warm-start envelopes.
    pub envelope_points: usize,
    /// Integrality tolerance of branch-and-bound.
    pub int_tol: f64,
    /// LP solves allowed per branch-and-bound call.
    pub max_nodes: usize,
}

/// Parameter validation failures.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("epsilon must lie in [1e-10, 1e-4], got {0}")]
    Epsilon(f64),
    #[error("gamma must exceed 1, got {0}")]
    Gamma(f64),
    #[error("need 0 < alpha_init < alpha_max, got {0} and {1}")]
    Alpha(f64, f64),
    #[error("sigma must be positive, got {0}")]
    Sigma(f64),
    #[error("beta must be positive, got {0}")]
    Beta(f64),
    #[error("kf must be at least 1")]
    Kf,
    #[error("segments must be at least 1")]
    Segments,
    #[error("envelope points must be at least 2")]
    EnvelopePoints,
}

impl SolverParams {
    /// Defaults with `sigma` and `beta` derived from the instance costs,
    /// taken per pu of power or flow over one hour.
    pub fn for_model(model: &ProblemModel) -> Self {
        let inst = &model.instance;
        let (sb, fb) = (inst.bases.power_mva, inst.bases.flow_m3s * 3600.0);
        let cmax = inst.generators.iter().map(|g| (g.c2 * sb * sb).max(g.c1 * sb)).fold(0.0, f64::max);
        let smax = inst.supplies.iter().map(|s| s.cost_per_m3 * fb).fold(0.0, f64::max);
        SolverParams {
            sigma: if cmax > 0.0 { 0.1 * cmax } else { 1.0 },
            beta: if smax > 0.0 { smax } else { 1e-2 },
            ..Self::default()
        }
    }

    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(1e-10..=1e-4).contains(&self.epsilon) {
            return Err(ParamError::Epsilon(self.epsilon));
        }
        if !(self.gamma > 1.0) {
            return Err(ParamError::Gamma(self.gamma));
        }
        if !(self.alpha_init > 0.0 && self.alpha_init < self.alpha_max) {
            return Err(ParamError::Alpha(self.alpha_init, self.alpha_max));
        }
        if !(self.sigma > 0.0) {
            return Err(ParamError::Sigma(self.sigma));
        }
        if !(self.beta > 0.0) {
            return Err(ParamError::Beta(self.beta));
        }
        if self.kf < 1 {
            return Err(ParamError::Kf);
        }
        if self.segments < 1 {
            return Err(ParamError::Segments);
        }
        if self.envelope_points < 2 {
            return Err(ParamError::EnvelopePoints);
        }
        Ok(())
    }

    fn bnb(&self) -> BnbOptions {
        BnbOptions { int_tol: self.int_tol, max_nodes: self.max_nodes, ..BnbOptions::default() }
    }
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            epsilon: 1e-4,
            max_iters: 40,
            sigma: 1.0,
            alpha_init: 0.1,
            gamma: 10.0,
            alpha_max: 1000.0,
            beta: 1e-2,
            kf: 2,
            segments: 32,
            envelope_points: 10,
            int_tol: 1e-6,
            max_nodes: 20_000,
        }
    }
}

/// Hard failures of an SLP phase.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SlpError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
    #[error("subproblem at iteration {k} is infeasible; the variable bounds are inconsistent")]
    Infeasible { k: usize },
    #[error("no integral assignment admits a feasible subproblem at iteration {k}")]
    InfeasibleIntegral { k: usize },
    #[error("subproblem at iteration {k} stopped with status {status:?}")]
    Solver { k: usize, status: LpStatus },
}

/// Mutable state of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Iteration counter, starting at 1.
    pub k: usize,
    pub x: Vec<f64>,
    /// Step penalties, indexed `t * |P| + pipe`.
    pub alpha: Vec<f64>,
    /// Registered iteration stamps per electric residual.
    pub registry: Vec<Vec<usize>>,
    /// Registered halfspace rows, one per registry entry.
    pub halfspaces: Vec<LinearRow>,
    /// Steering targets, indexed `t * |E| + element`.
    pub targets: Vec<u8>,
    pub k2: usize,
    pub trace: Vec<IterationRecord>,
    /// Total LP relaxations solved.
    pub lp_solves: usize,
    pub phase1_iterations: usize,
    pub phase2_iterations: usize,
    /// LP solves spent in the second phase.
    pub phase2_lp_solves: usize,
    pub status: SolveStatus,
}

impl SolverState {
    /// Fresh state at the initial point.
    pub fn new(model: &ProblemModel, x1: Vec<f64>, params: &SolverParams) -> Self {
        let inst = &model.instance;
        SolverState {
            k: 1,
            x: x1,
            alpha: alloc::vec![params.alpha_init; inst.pipes.len() * inst.periods],
            registry: alloc::vec![Vec::new(); model.num_electric],
            halfspaces: Vec::new(),
            targets: alloc::vec![0; inst.nonpipes.len() * inst.periods],
            k2: 0,
            trace: Vec::new(),
            lp_solves: 0,
            phase1_iterations: 0,
            phase2_iterations: 0,
            phase2_lp_solves: 0,
            status: SolveStatus::NonConvergence,
        }
    }

    /// Total registered halfspaces.
    pub fn num_halfspaces(&self) -> usize {
        self.halfspaces.len()
    }

    /// Largest step penalty.
    pub fn max_alpha(&self) -> f64 {
        self.alpha.iter().copied().fold(0.0, f64::max)
    }
}

/// Cold start: angle differences 0.01 rad, pipe flows at 10% of capacity,
/// pressures at mid-range, every other variable at the point of its box
/// closest to zero.
pub fn cold_start(model: &ProblemModel) -> Vec<f64> {
    let inst = &model.instance;
    let mut x: Vec<f64> = (0..model.num_vars()).map(|j| 0.0f64.clamp(model.lower[j], model.upper[j])).collect();
    for t in 0..inst.periods {
        for l in 0..inst.branches.len() {
            let j = model.idx(VarFamily::ThetaBr, l, t);
            x[j] = 0.01f64.clamp(model.lower[j], model.upper[j]);
        }
        for (m, n) in inst.nodes.iter().enumerate() {
            x[model.idx(VarFamily::Pressure, m, t)] = 0.5 * (n.p_min + n.p_max);
        }
        for (k, p) in inst.pipes.iter().enumerate() {
            x[model.idx(VarFamily::PipeFlow, k, t)] = 0.1 * p.flow_max;
        }
    }
    x
}

/// Warm start from the polyhedral relaxation.
pub fn warm_start(model: &ProblemModel, params: &SolverParams) -> Result<Vec<f64>, SlpError> {
    let mut x = solve_polyhedral_relaxation(model, params.envelope_points, params.segments)?.x;
    model.project(&mut x);
    Ok(x)
}

/// `C_max` and `C_mean` at `x`.
fn violation(model: &ProblemModel, x: &[f64]) -> Result<(f64, f64, Vec<f64>), DomainError> {
    let mut v = Vec::with_capacity(model.residuals.len());
    for r in &model.residuals {
        v.push(abs(r.eval(x)?));
    }
    let cmax = v.iter().copied().fold(0.0, f64::max);
    let cmean = if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok((cmax, cmean, v))
}

/// True when every binary lies within `tol` of 0 or 1.
pub fn is_integral(model: &ProblemModel, x: &[f64], tol: f64) -> bool {
    model.binaries.iter().all(|&j| x[j] <= tol || x[j] >= 1.0 - tol)
}

/// Applies the gated steering flips; returns the number of flipped targets.
///
/// Flips happen only when `k2 mod kf == 0`: a target of 0 becomes 1 when
/// `z > eps`, a target of 1 becomes 0 when `z < 1 - eps`.
pub fn steering_flip(targets: &mut [u8], z: &[f64], k2: usize, kf: usize, eps: f64) -> usize {
    if kf == 0 || !k2.is_multiple_of(kf) {
        return 0;
    }
    let mut flips = 0;
    for (i, zi) in targets.iter_mut().zip(z) {
        if *i == 0 && *zi > eps {
            *i = 1;
            flips += 1;
        } else if *i == 1 && *zi < 1.0 - eps {
            *i = 0;
            flips += 1;
        }
    }
    flips
}

/// Step-penalty update: `min(alpha_max, gamma alpha)`.
pub fn bumped_alpha(alpha: f64, gamma: f64, alpha_max: f64) -> f64 {
    alpha_max.min(gamma * alpha)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Lp,
    Milp,
    Steer,
}

fn slack_upper(model: &ProblemModel, i: usize, row: &LinearRow) -> f64 {
    // r = p - tangent(theta); bound it over the variable boxes.
    let r = &model.residuals[i];
    let (th, p) = (r.vars[0], r.vars[1]);
    let c_th = row.coeffs.iter().find(|e| e.0 == th).map(|e| e.1).unwrap_or(0.0);
    let c_p = row.coeffs.iter().find(|e| e.0 == p).map(|e| e.1).unwrap_or(-1.0);
    // c_th theta + c_p p + r = rhs  =>  r = rhs - c_th theta - c_p p
    let ends = [model.lower[th], model.upper[th]];
    let pends = [model.lower[p], model.upper[p]];
    let mut hi: f64 = 0.0;
    for a in ends {
        for b in pends {
            hi = hi.max(row.rhs - c_th * a - c_p * b);
        }
    }
    hi
}

fn assemble(model: &ProblemModel, base: &PwlLp, st: &SolverState, params: &SolverParams, mode: Mode) -> Result<LpProblem, DomainError> {
    let mut lp = base.lp.clone();
    let scale = 1.0 / model.instance.bases.cost;
    let slack_base = lp.num_vars();
    let rows = linearize_at(model, &st.x, st.k, slack_base)?;
    for i in 0..model.num_electric {
        let ub = slack_upper(model, i, &rows[i]);
        lp.add_var(0.0, ub, params.sigma * scale);
    }
    lp.rows.extend(rows);
    lp.rows.extend(st.halfspaces.iter().cloned());
    let inst = &model.instance;
    let np = inst.pipes.len();
    for t in 0..inst.periods {
        for k in 0..np {
            let j = model.idx(VarFamily::PipeFlow, k, t);
            add_abs_penalty(&mut lp, j, st.x[j], st.alpha[t * np + k] * scale).expect("penalties are non-negative");
        }
    }
    if mode == Mode::Steer {
        let ne = inst.nonpipes.len();
        for t in 0..inst.periods {
            for e in 0..ne {
                let j = model.idx(VarFamily::Z, e, t);
                add_abs_penalty(&mut lp, j, st.targets[t * ne + e] as f64, params.beta * scale).expect("penalties are non-negative");
            }
        }
    }
    Ok(lp)
}

/// One SLP iteration: solve, register halfspaces, update penalties.
fn step(model: &ProblemModel, base: &PwlLp, st: &mut SolverState, params: &SolverParams, mode: Mode, phase: u8) -> Result<(), SlpError> {
    let lp = assemble(model, base, st, params, mode)?;
    let n = model.num_vars();
    let k = st.k;
    let (sol, lps) = if mode == Mode::Milp {
        let res = bnb_solve_with(&lp, &model.binaries, &params.bnb());
        (res.solution, res.lp_solves)
    } else {
        (lp_solve(&lp), 1)
    };
    st.lp_solves += lps;
    if phase == 2 {
        st.phase2_lp_solves += lps;
    }
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible if mode == Mode::Milp => return Err(SlpError::InfeasibleIntegral { k }),
        LpStatus::Infeasible => return Err(SlpError::Infeasible { k }),
        status => return Err(SlpError::Solver { k, status }),
    }
    let mut xn = sol.x[..n].to_vec();
    model.project(&mut xn);
    let (_, _, old) = violation(model, &st.x)?;
    let (cmax, cmean, new) = violation(model, &xn)?;

    // Register tangents whose flow variable fell below a convex loss curve.
    for i in 0..model.num_electric {
        let r = &model.residuals[i];
        if r.coef[0] < 0.0 {
            continue;
        }
        if r.eval(&xn)? > 0.0 && !st.registry[i].contains(&k) {
            let (c, rhs) = r.tangent(&st.x)?;
            st.registry[i].push(k);
            st.halfspaces.push(LinearRow::new(c, Sense::Le, rhs, RowTag::HalfspaceElectric).stamped(k));
        }
    }
    // Grow step penalties of gas residuals that did not improve.
    let np = model.instance.pipes.len();
    for i in model.num_electric..model.residuals.len() {
        if new[i] >= old[i] && new[i] > params.epsilon {
            let r = &model.residuals[i];
            let a = &mut st.alpha[r.period * np + r.element];
            *a = bumped_alpha(*a, params.gamma, params.alpha_max);
        }
    }
    st.x = xn;
    st.trace.push(IterationRecord {
        k,
        phase,
        objective: model.objective(&st.x),
        c_max: cmax,
        c_mean: cmean,
        halfspaces: st.num_halfspaces(),
        max_alpha: st.max_alpha(),
        lp_solves: lps,
    });
    st.k += 1;
    Ok(())
}

/// Continuous SLP phase from `x1`.
pub fn phase1_slp(model: &ProblemModel, x1: Vec<f64>, params: &SolverParams) -> Result<(Vec<f64>, SolverState), SlpError> {
    params.validate()?;
    let mut x1 = x1;
    model.project(&mut x1);
    let mut st = SolverState::new(model, x1, params);
    phase1_continue(model, &mut st, params)?;
    Ok((st.x.clone(), st))
}

fn phase1_continue(model: &ProblemModel, st: &mut SolverState, params: &SolverParams) -> Result<(), SlpError> {
    let base = model.base_lp(params.segments);
    let mut iters = 0;
    loop {
        let (cmax, _, _) = violation(model, &st.x)?;
        if cmax <= params.epsilon {
            st.status = SolveStatus::Converged;
            break;
        }
        if iters >= params.max_iters {
            st.status = SolveStatus::NonConvergence;
            break;
        }
        step(model, &base, st, params, Mode::Lp, 1)?;
        iters += 1;
    }
    st.phase1_iterations += iters;
    Ok(())
}

/// Iterative MILP phase continuing from a phase-one state.
pub fn phase2_milp(model: &ProblemModel, state: SolverState, params: &SolverParams) -> Result<(Vec<f64>, SolverState), SlpError> {
    params.validate()?;
    let mut st = state;
    let base = model.base_lp(params.segments);
    let mut iters = 0;
    loop {
        let (cmax, _, _) = violation(model, &st.x)?;
        if cmax <= params.epsilon && is_integral(model, &st.x, params.int_tol) {
            st.status = SolveStatus::Converged;
            break;
        }
        if iters >= params.max_iters {
            st.status = SolveStatus::NonConvergence;
            break;
        }
        step(model, &base, &mut st, params, Mode::Milp, 2)?;
        iters += 1;
    }
    st.phase2_iterations += iters;
    Ok((st.x.clone(), st))
}

/// Sets steering targets from the flow directions of the non-pipe elements.
pub fn init_targets(model: &ProblemModel, st: &mut SolverState) {
    let inst = &model.instance;
    let ne = inst.nonpipes.len();
    for t in 0..inst.periods {
        for e in 0..ne {
            let f = st.x[model.idx(VarFamily::NonPipeFlow, e, t)];
            st.targets[t * ne + e] = u8::from(f > 0.0);
        }
    }
}

/// LP steering phase continuing from a phase-one state.
pub fn phase2_steering(model: &ProblemModel, state: SolverState, params: &SolverParams) -> Result<(Vec<f64>, SolverState), SlpError> {
    params.validate()?;
    let mut st = state;
    init_targets(model, &mut st);
    let base = model.base_lp(params.segments);
    let ne = model.instance.nonpipes.len();
    let mut iters = 0;
    st.status = SolveStatus::NonConvergence;
    while iters < params.max_iters {
        step(model, &base, &mut st, params, Mode::Steer, 2)?;
        iters += 1;
        let (cmax, _, _) = violation(model, &st.x)?;
        if cmax <= params.epsilon && is_integral(model, &st.x, params.epsilon) {
            st.status = SolveStatus::Converged;
            break;
        }
        let z: Vec<f64> = (0..model.instance.periods)
            .flat_map(|t| (0..ne).map(move |e| (t, e)))
            .map(|(t, e)| st.x[model.idx(VarFamily::Z, e, t)])
            .collect();
        steering_flip(&mut st.targets, &z, st.k2, params.kf, params.epsilon);
        st.k2 += 1;
    }
    st.phase2_iterations += iters;
    Ok((st.x.clone(), st))
}

/// Algorithm with the MILP second phase.
pub fn run_alg1(model: &ProblemModel, x1: Vec<f64>, params: &SolverParams) -> Result<(Vec<f64>, SolverState), SlpError> {
    let (_, st) = phase1_slp(model, x1, params)?;
    phase2_milp(model, st, params)
}

/// Algorithm with the steering second phase.
pub fn run_alg2(model: &ProblemModel, x1: Vec<f64>, params: &SolverParams) -> Result<(Vec<f64>, SolverState), SlpError> {
    let (_, st) = phase1_slp(model, x1, params)?;
    phase2_steering(model, st, params)
}

/// Residual kinds that may register halfspaces.
pub fn registers_halfspaces(kind: ResidualKind) -> bool {
    kind.is_electric()
}
