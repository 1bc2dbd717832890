//! Feasibility and optimality metrics, linepack trajectories and reports.

use alloc::string::String;
use alloc::vec::Vec;

use crate::envelopes::pwl_max_error;
use crate::formulation::{ProblemModel, ResidualKind, VarFamily};
use crate::instance::Instance;
use crate::math::abs;

/// One nonlinear residual at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResidualEntry {
    pub kind: ResidualKind,
    pub element: usize,
    pub period: usize,
    /// `|h(x)|`, or infinity outside the residual domain.
    pub abs_value: f64,
    pub domain_error: bool,
}

/// Feasibility of a point with respect to the nonlinear equalities.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    /// Largest `|h_i(x)|`.
    pub c_max: f64,
    /// Mean `|h_i(x)|`.
    pub c_mean: f64,
    pub residuals: Vec<ResidualEntry>,
    /// Largest linear-row or bound violation, reported separately.
    pub linear_violation: f64,
}

impl Feasibility {
    /// Number of residuals evaluated outside their domain.
    pub fn domain_errors(&self) -> usize {
        self.residuals.iter().filter(|r| r.domain_error).count()
    }

    /// Largest residual of one kind.
    pub fn max_of_kind(&self, kind: ResidualKind) -> f64 {
        self.residuals.iter().filter(|r| r.kind == kind).map(|r| r.abs_value).fold(0.0, f64::max)
    }
}

/// Exact nonlinear residuals at `x`; domain violations are flagged as infinite.
pub fn evaluate_feasibility(model: &ProblemModel, x: &[f64]) -> Feasibility {
    let mut residuals = Vec::with_capacity(model.residuals.len());
    let mut c_max: f64 = 0.0;
    let mut sum = 0.0;
    for r in &model.residuals {
        let (abs_value, domain_error) = match r.eval(x) {
            Ok(v) => (abs(v), false),
            Err(_) => (f64::INFINITY, true),
        };
        c_max = c_max.max(abs_value);
        sum += abs_value;
        residuals.push(ResidualEntry { kind: r.kind, element: r.element, period: r.period, abs_value, domain_error });
    }
    let c_mean = if residuals.is_empty() { 0.0 } else { sum / residuals.len() as f64 };
    Feasibility { c_max, c_mean, residuals, linear_violation: model.linear_violation(x) }
}

/// `C_max` only.
pub fn c_max(model: &ProblemModel, x: &[f64]) -> f64 {
    model.residuals.iter().map(|r| r.eval(x).map(abs).unwrap_or(f64::INFINITY)).fold(0.0, f64::max)
}

/// Optimality gaps in percent; `None` marks an undefined gap.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Gaps {
    pub ogap: Option<f64>,
    pub rogap: Option<f64>,
}

/// `Ogap = (f* - f_cvx) / f* x 100`, `ROgap = (f_dagger - f*) / f_dagger x 100`.
pub fn compute_gaps(f_star: f64, f_cvx: f64, f_dagger: Option<f64>) -> Gaps {
    let ogap = (f_star != 0.0 && f_star.is_finite() && f_cvx.is_finite()).then(|| (f_star - f_cvx) / f_star * 100.0);
    let rogap = f_dagger.filter(|d| *d != 0.0 && d.is_finite()).map(|d| (d - f_star) / d * 100.0);
    Gaps { ogap, rogap }
}

/// Linepack per pipe and in total.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinepackTrajectory {
    pub pipe_ids: Vec<String>,
    /// `per_pipe_m3[k][t]`.
    pub per_pipe_m3: Vec<Vec<f64>>,
    pub total_m3: Vec<f64>,
    /// Total energy in TJ.
    pub total_tj: Vec<f64>,
    /// Largest `|l^t - l^(t-1) - dtau (phi_in - phi_out)|` in m^3.
    pub continuity_residual_m3: f64,
}

/// Energy in TJ of a gas volume in m^3.
pub fn volume_to_tj(m3: f64, hhv_mj_per_m3: f64) -> f64 {
    m3 * hhv_mj_per_m3 * 1e-6
}

/// Linepack change in m^3 from a net inflow in m^3/s held for `dt_hours`.
pub fn linepack_change_m3(net_inflow_m3s: f64, dt_hours: f64) -> f64 {
    3600.0 * dt_hours * net_inflow_m3s
}

/// Linepack series of a solved point.
pub fn linepack_trajectory(model: &ProblemModel, x: &[f64]) -> LinepackTrajectory {
    let inst = &model.instance;
    let lb = inst.bases.linepack_m3();
    let h = inst.periods;
    let mut per_pipe = Vec::with_capacity(inst.pipes.len());
    let mut total = alloc::vec![0.0; h];
    let mut cont: f64 = 0.0;
    for (k, p) in inst.pipes.iter().enumerate() {
        let mut series = Vec::with_capacity(h);
        let mut prev = p.initial_linepack;
        for (t, tot) in total.iter_mut().enumerate() {
            let l = x[model.idx(VarFamily::Linepack, k, t)];
            let fin = x[model.idx(VarFamily::FlowIn, k, t)];
            let fout = x[model.idx(VarFamily::FlowOut, k, t)];
            cont = cont.max(abs(l - prev - inst.dt * (fin - fout)) * lb);
            prev = l;
            series.push(l * lb);
            *tot += l * lb;
        }
        per_pipe.push(series);
    }
    let total_tj = total.iter().map(|&v| volume_to_tj(v, inst.constants.hhv)).collect();
    LinepackTrajectory {
        pipe_ids: inst.pipes.iter().map(|p| p.id.clone()).collect(),
        per_pipe_m3: per_pipe,
        total_m3: total,
        total_tj,
        continuity_residual_m3: cont,
    }
}

/// Upper bound in $ on the total under-approximation of the piecewise-linear
/// generation cost over all generators and periods.
pub fn pwl_error_bound(instance: &Instance, segments: usize) -> f64 {
    let e = instance.bases.power_mva * instance.dt;
    let per_period: f64 = instance
        .generators
        .iter()
        .map(|g| pwl_max_error(g.c2.max(0.0), e, g.p_min, g.p_max, segments.max(1)))
        .sum();
    per_period * instance.periods as f64
}

/// Method that produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    PolyRelax,
    Phase1,
    Alg1,
    Alg2,
    MicpLb,
}

impl Method {
    /// Display label.
    pub fn label(self) -> &'static str {
        match self {
            Method::PolyRelax => "poly-relax",
            Method::Phase1 => "phase1",
            Method::Alg1 => "alg1",
            Method::Alg2 => "alg2",
            Method::MicpLb => "micp-lb",
        }
    }
}

/// Termination status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SolveStatus {
    Converged,
    NonConvergence,
    /// Lower bound returned with remaining cut violation.
    ResidualViolation,
    Infeasible,
    InfeasibleIntegral,
}

/// One iteration of an SLP phase.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationRecord {
    pub k: usize,
    /// 1 or 2.
    pub phase: u8,
    /// Exact objective in $ at the new iterate.
    pub objective: f64,
    pub c_max: f64,
    pub c_mean: f64,
    /// Registered electric halfspaces.
    pub halfspaces: usize,
    pub max_alpha: f64,
    /// LP relaxations solved in this iteration.
    pub lp_solves: usize,
}

/// Outcome of one method run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveReport {
    pub instance: String,
    pub method: Method,
    pub status: SolveStatus,
    /// Objective in $.
    pub objective: f64,
    pub c_max: f64,
    pub c_mean: f64,
    pub iterations: usize,
    pub lp_solves: usize,
    pub trace: Vec<IterationRecord>,
    pub ogap: Option<f64>,
    pub rogap: Option<f64>,
    pub wall_time_s: f64,
    /// Largest under-approximation of the piecewise-linear cost, $.
    pub pwl_max_error: f64,
    /// Remaining conic violation of a lower-bound solve.
    pub residual_violation: Option<f64>,
    /// Non-pipe direction binaries, `z[t][e]`.
    pub z: Vec<Vec<f64>>,
    pub linepack: LinepackTrajectory,
    pub x: Vec<f64>,
}

impl SolveReport {
    /// Assembles a report for a point.
    #[allow(clippy::too_many_arguments)]
    pub fn new(model: &ProblemModel, method: Method, status: SolveStatus, objective: f64, x: &[f64], iterations: usize, lp_solves: usize, trace: Vec<IterationRecord>) -> Self {
        let feas = evaluate_feasibility(model, x);
        let inst = &model.instance;
        let z = (0..inst.periods)
            .map(|t| (0..inst.nonpipes.len()).map(|e| x[model.idx(VarFamily::Z, e, t)]).collect())
            .collect();
        SolveReport {
            instance: inst.name.clone(),
            method,
            status,
            objective,
            c_max: feas.c_max,
            c_mean: feas.c_mean,
            iterations,
            lp_solves,
            trace,
            ogap: None,
            rogap: None,
            wall_time_s: 0.0,
            pwl_max_error: 0.0,
            residual_violation: None,
            z,
            linepack: linepack_trajectory(model, x),
            x: x[..model.num_vars()].to_vec(),
        }
    }
}
