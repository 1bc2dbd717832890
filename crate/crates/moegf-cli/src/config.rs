//! Run configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use moegf::relaxation::LowerBoundOptions;
use moegf::{ProblemModel, SolverParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMethod {
    Validate,
    Relax,
    Phase1,
    Alg1,
    Alg2,
    LowerBound,
    Compare,
    /// Finite-difference check of the residual gradients at sampled points.
    Check,
}

impl RunMethod {
    pub const ALL: [RunMethod; 8] = [
        RunMethod::Validate,
        RunMethod::Relax,
        RunMethod::Phase1,
        RunMethod::Alg1,
        RunMethod::Alg2,
        RunMethod::LowerBound,
        RunMethod::Compare,
        RunMethod::Check,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunMethod::Validate => "validate",
            RunMethod::Relax => "relax",
            RunMethod::Phase1 => "phase1",
            RunMethod::Alg1 => "alg1",
            RunMethod::Alg2 => "alg2",
            RunMethod::LowerBound => "lower-bound",
            RunMethod::Compare => "compare",
            RunMethod::Check => "check",
        }
    }
}

impl fmt::Display for RunMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunMethod {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RunMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::validation(format!("unknown method '{s}'"), Some("method".into())))
    }
}

/// Initial point of the SLP phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartStrategy {
    Cold,
    #[default]
    Warm,
}

impl FromStr for StartStrategy {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cold" => Ok(StartStrategy::Cold),
            "warm" => Ok(StartStrategy::Warm),
            _ => Err(CliError::validation(format!("unknown start strategy '{s}'"), Some("start".into()))),
        }
    }
}

/// Optional settings that replace the instance-derived defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub kf: Option<usize>,
    pub segments: Option<usize>,
    pub cut_rounds: Option<usize>,
}

/// One CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub instance: PathBuf,
    pub method: RunMethod,
    pub start: StartStrategy,
    pub overrides: Overrides,
    pub out: PathBuf,
    /// Seed of the sampled checks.
    pub seed: u64,
    /// Sample count of the `check` method.
    pub samples: usize,
}

impl RunConfig {
    pub fn new(instance: impl Into<PathBuf>, method: RunMethod) -> Self {
        RunConfig {
            instance: instance.into(),
            method,
            start: StartStrategy::Warm,
            overrides: Overrides::default(),
            out: PathBuf::from("."),
            seed: 0,
            samples: 200,
        }
    }

    /// Solver settings for `model` after applying the overrides.
    pub fn solver_params(&self, model: &ProblemModel) -> Result<SolverParams, CliError> {
        let mut p = SolverParams::for_model(model);
        let o = &self.overrides;
        if let Some(v) = o.epsilon {
            p.epsilon = v;
        }
        if let Some(v) = o.max_iters {
            if v == 0 {
                return Err(CliError::validation("max-iters must be at least 1", Some("max_iters".into())));
            }
            p.max_iters = v;
        }
        if let Some(v) = o.kf {
            p.kf = v;
        }
        if let Some(v) = o.segments {
            p.segments = v;
        }
        p.validate()?;
        Ok(p)
    }

    /// Lower-bound settings consistent with `params`.
    pub fn lower_bound_options(&self, params: &SolverParams) -> Result<LowerBoundOptions, CliError> {
        let mut o = LowerBoundOptions { l: params.envelope_points, segments: params.segments, ..Default::default() };
        if let Some(r) = self.overrides.cut_rounds {
            if r == 0 {
                return Err(CliError::validation("cut-rounds must be at least 1", Some("cut_rounds".into())));
            }
            o.max_cut_rounds = r;
        }
        Ok(o)
    }
}
