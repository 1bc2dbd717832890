//! Instance loading and report files.

use std::fs;
use std::path::{Path, PathBuf};

use moegf::diagnostics::{volume_to_tj, IterationRecord, LinepackTrajectory, SolveReport};
use moegf::{Instance, SiInstance};
use serde::Serialize;

use crate::error::CliError;

/// Reads and validates an instance file.
pub fn load_instance(path: &Path) -> Result<(SiInstance, Instance), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::hard(format!("cannot read {}: {e}", path.display())))?;
    parse_instance(&text)
}

/// Parses and validates instance JSON.
pub fn parse_instance(text: &str) -> Result<(SiInstance, Instance), CliError> {
    let si: SiInstance = serde_json::from_str(text)?;
    let inst = Instance::from_si(&si)?;
    Ok((si, inst))
}

/// Writes `value` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::hard(format!("json: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes one CSV row per iteration.
pub fn write_trace_csv(path: &Path, trace: &[IterationRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    if trace.is_empty() {
        w.write_record(["k", "phase", "objective", "c_max", "c_mean", "halfspaces", "max_alpha", "lp_solves"])?;
    }
    for r in trace {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LinepackRow<'a> {
    t: usize,
    pipe: &'a str,
    m3: f64,
    tj: f64,
}

/// Writes the linepack series, one row per period and pipe.
pub fn write_linepack_csv(path: &Path, lp: &LinepackTrajectory, hhv_mj_per_m3: f64) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let periods = lp.total_m3.len();
    if lp.pipe_ids.is_empty() || periods == 0 {
        w.write_record(["t", "pipe", "m3", "tj"])?;
    }
    for t in 0..periods {
        for (k, id) in lp.pipe_ids.iter().enumerate() {
            let m3 = lp.per_pipe_m3[k][t];
            w.serialize(LinepackRow { t: t + 1, pipe: id, m3, tj: volume_to_tj(m3, hhv_mj_per_m3) })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Files written for one report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub trace: PathBuf,
    pub linepack: PathBuf,
}

/// Writes the report JSON, trace CSV and linepack CSV into `dir`.
pub fn write_report_files(dir: &Path, tag: &str, report: &SolveReport, hhv: f64) -> Result<ReportFiles, CliError> {
    fs::create_dir_all(dir)?;
    let stem = format!("{}.{}", report.instance, tag);
    let files = ReportFiles {
        report: dir.join(format!("{stem}.json")),
        trace: dir.join(format!("{stem}.trace.csv")),
        linepack: dir.join(format!("{stem}.linepack.csv")),
    };
    write_json(&files.report, report)?;
    write_trace_csv(&files.trace, &report.trace)?;
    write_linepack_csv(&files.linepack, &report.linepack, hhv)?;
    Ok(files)
}
