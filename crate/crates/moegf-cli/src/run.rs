//! Method dispatch.

use std::collections::BTreeMap;
use std::time::Instant;

use moegf::diagnostics::{pwl_error_bound, Method, SolveReport, SolveStatus};
use moegf::relaxation::micp_lower_bound;
use moegf::slp::{cold_start, phase1_slp, phase2_milp, phase2_steering, warm_start, SolverState};
use moegf::{build_moegf, compute_gaps, solve_polyhedral_relaxation, Instance, ProblemModel, SolverParams};
use serde::Serialize;

use crate::check::{gradient_check, GradientCheck};
use crate::config::{RunConfig, RunMethod, StartStrategy};
use crate::error::{exit, CliError};
use crate::io::{load_instance, write_json, write_report_files, ReportFiles};

/// Result of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub reports: Vec<SolveReport>,
    pub files: Vec<ReportFiles>,
    /// Text for standard output.
    pub stdout: String,
}

/// Instance summary printed by `validate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub instance: String,
    pub periods: usize,
    pub buses: usize,
    pub branches: usize,
    pub generators: usize,
    pub nodes: usize,
    pub pipes: usize,
    pub nonpipes: usize,
    pub supplies: usize,
    pub variables: usize,
    pub residuals: usize,
    pub binaries: usize,
    pub rows: BTreeMap<String, usize>,
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: &'static str,
    pub cost: f64,
    pub ogap: Option<f64>,
    pub c_max: f64,
    pub c_mean: f64,
    pub iterations: usize,
    pub lp_solves: usize,
    pub wall_time_s: f64,
}

/// Loads the instance and runs the configured method.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let (_, inst) = load_instance(&cfg.instance)?;
    run_instance(cfg, inst)
}

/// Runs the configured method on an already validated instance.
pub fn run_instance(cfg: &RunConfig, inst: Instance) -> Result<RunOutcome, CliError> {
    let model = build_moegf(&inst);
    let params = cfg.solver_params(&model)?;
    let hhv = inst.constants.hhv;
    match cfg.method {
        RunMethod::Validate => {
            let s = validation_summary(&model);
            Ok(RunOutcome { exit_code: exit::SUCCESS, reports: Vec::new(), files: Vec::new(), stdout: to_json(&s) })
        }
        RunMethod::Check => {
            let c: GradientCheck = gradient_check(&model, cfg.seed, cfg.samples);
            let code = if c.passed { exit::SUCCESS } else { exit::HARD_ERROR };
            Ok(RunOutcome { exit_code: code, reports: Vec::new(), files: Vec::new(), stdout: to_json(&c) })
        }
        RunMethod::Compare => {
            let mut reports = Vec::new();
            for m in [RunMethod::Relax, RunMethod::LowerBound, RunMethod::Alg1, RunMethod::Alg2] {
                reports.push(solve(&model, m, cfg, &params)?);
            }
            let lb = reports[1].objective;
            for r in reports.iter_mut().skip(2) {
                r.ogap = compute_gaps(r.objective, lb, None).ogap;
            }
            let mut files = Vec::new();
            for r in &reports {
                files.push(write_report_files(&cfg.out, r.method.label(), r, hhv)?);
            }
            let rows = compare_rows(&reports);
            let csv_path = cfg.out.join(format!("{}.compare.csv", inst.name));
            let mut w = csv::Writer::from_path(&csv_path)?;
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
            write_json(&cfg.out.join(format!("{}.compare.json", inst.name)), &rows)?;
            Ok(RunOutcome { exit_code: exit_code(&reports), stdout: format_table(&rows), reports, files })
        }
        m => {
            let report = solve(&model, m, cfg, &params)?;
            let files = vec![write_report_files(&cfg.out, report.method.label(), &report, hhv)?];
            let stdout = summary_line(&report);
            let reports = vec![report];
            Ok(RunOutcome { exit_code: exit_code(&reports), stdout, reports, files })
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("summary serializes")
}

fn exit_code(reports: &[SolveReport]) -> i32 {
    if reports.iter().any(|r| r.status == SolveStatus::NonConvergence) {
        exit::NON_CONVERGENCE
    } else {
        exit::SUCCESS
    }
}

/// Counts of the built model.
pub fn validation_summary(model: &ProblemModel) -> ValidationSummary {
    let inst = &model.instance;
    ValidationSummary {
        instance: inst.name.clone(),
        periods: inst.periods,
        buses: inst.buses.len(),
        branches: inst.branches.len(),
        generators: inst.generators.len(),
        nodes: inst.nodes.len(),
        pipes: inst.pipes.len(),
        nonpipes: inst.nonpipes.len(),
        supplies: inst.supplies.len(),
        variables: model.num_vars(),
        residuals: model.residuals.len(),
        binaries: model.binaries.len(),
        rows: model.census().into_iter().map(|(k, v)| (format!("{k:?}"), v)).collect(),
    }
}

fn initial_point(model: &ProblemModel, start: StartStrategy, params: &SolverParams) -> Result<Vec<f64>, CliError> {
    Ok(match start {
        StartStrategy::Cold => cold_start(model),
        StartStrategy::Warm => warm_start(model, params)?,
    })
}

fn slp_report(model: &ProblemModel, method: Method, x: &[f64], st: SolverState) -> SolveReport {
    SolveReport::new(
        model,
        method,
        st.status,
        model.objective(x),
        x,
        st.phase1_iterations + st.phase2_iterations,
        st.lp_solves,
        st.trace,
    )
}

/// Runs one solving method and returns its report.
pub fn solve(model: &ProblemModel, method: RunMethod, cfg: &RunConfig, params: &SolverParams) -> Result<SolveReport, CliError> {
    let t0 = Instant::now();
    let mut report = match method {
        RunMethod::Relax => {
            let r = solve_polyhedral_relaxation(model, params.envelope_points, params.segments)?;
            let mut rep = SolveReport::new(model, Method::PolyRelax, SolveStatus::Converged, r.objective, &r.x, 1, 1, Vec::new());
            rep.pwl_max_error = pwl_error_bound(&model.instance, params.segments);
            rep
        }
        RunMethod::Phase1 => {
            let x1 = initial_point(model, cfg.start, params)?;
            let (x, st) = phase1_slp(model, x1, params)?;
            slp_report(model, Method::Phase1, &x, st)
        }
        RunMethod::Alg1 | RunMethod::Alg2 => {
            let x1 = initial_point(model, cfg.start, params)?;
            let (_, st) = phase1_slp(model, x1, params)?;
            if method == RunMethod::Alg1 {
                let (x, st) = phase2_milp(model, st, params)?;
                slp_report(model, Method::Alg1, &x, st)
            } else {
                let (x, st) = phase2_steering(model, st, params)?;
                slp_report(model, Method::Alg2, &x, st)
            }
        }
        RunMethod::LowerBound => {
            let opts = cfg.lower_bound_options(params)?;
            let lb = micp_lower_bound(model, &opts)?;
            let status = if lb.converged { SolveStatus::Converged } else { SolveStatus::ResidualViolation };
            let mut rep = SolveReport::new(model, Method::MicpLb, status, lb.objective, &lb.x, lb.rounds, lb.lp_solves, Vec::new());
            rep.residual_violation = Some(lb.residual_violation);
            rep.pwl_max_error = pwl_error_bound(&model.instance, opts.segments);
            rep
        }
        other => return Err(CliError::hard(format!("method {other} produces no report"))),
    };
    report.wall_time_s = t0.elapsed().as_secs_f64();
    Ok(report)
}

/// Rows of the comparison table, in report order.
pub fn compare_rows(reports: &[SolveReport]) -> Vec<CompareRow> {
    reports
        .iter()
        .map(|r| CompareRow {
            method: r.method.label(),
            cost: r.objective,
            ogap: r.ogap,
            c_max: r.c_max,
            c_mean: r.c_mean,
            iterations: r.iterations,
            lp_solves: r.lp_solves,
            wall_time_s: r.wall_time_s,
        })
        .collect()
}

/// Fixed-width text table.
pub fn format_table(rows: &[CompareRow]) -> String {
    let mut s = format!(
        "{:<12} {:>16} {:>9} {:>10} {:>10} {:>6} {:>6} {:>9}\n",
        "method", "cost ($)", "Ogap (%)", "C_max", "C_mean", "iters", "LPs", "time (s)"
    );
    for r in rows {
        let gap = r.ogap.map(|g| format!("{g:.4}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<12} {:>16.4} {:>9} {:>10.3e} {:>10.3e} {:>6} {:>6} {:>9.3}\n",
            r.method, r.cost, gap, r.c_max, r.c_mean, r.iterations, r.lp_solves, r.wall_time_s
        ));
    }
    s
}

/// One-line summary of a single report.
pub fn summary_line(r: &SolveReport) -> String {
    format!(
        "{} {}: status {:?}, cost {:.4} $, C_max {:.3e}, C_mean {:.3e}, {} iterations, {} LPs, {:.3} s",
        r.instance,
        r.method.label(),
        r.status,
        r.objective,
        r.c_max,
        r.c_mean,
        r.iterations,
        r.lp_solves,
        r.wall_time_s
    )
}
