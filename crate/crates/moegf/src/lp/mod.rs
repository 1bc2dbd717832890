//! Embedded LP solver and a best-first branch-and-bound layer.

use alloc::vec::Vec;

mod bnb;
mod simplex;

pub use bnb::{bnb_solve, bnb_solve_warm, bnb_solve_with, BnbOptions, BnbSolution};
pub use simplex::{lp_solve, lp_solve_warm, lp_solve_with, lp_solve_with_bounds, SimplexOptions, WarmStart};

/// Row sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// Which constraint family a row encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RowTag {
    Ramp,
    AngleDiff,
    Kcl,
    GpgCoupling,
    GasNodal,
    AvgFlow,
    Linepack,
    Continuity,
    CompSplit,
    CompTrap,
    CompPlus,
    CompMinus,
    NonPipeFlow,
    BoostUpper,
    BoostLower,
    NoBoostUpper,
    NoBoostLower,
    FinalLinepack,
    CostPwl,
    EnvelopeSquare,
    EnvelopeSignedSquare,
    EnvelopeAvgPressure,
    EnvelopeLink,
    TangentElectric,
    HalfspaceElectric,
    TangentGas,
    AbsSplit,
    PipeDirection,
    PipePressureDirection,
    AuxPressure,
    SocCut,
    AvgPressureCut,
    ElectricCut,
    Custom,
}

/// Sparse linear row `coeffs . x (sense) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub sense: Sense,
    pub tag: RowTag,
    /// Iteration that produced the row, for linearizations.
    pub stamp: Option<usize>,
}

impl LinearRow {
    /// Builds a row, merging duplicate indices and dropping zero coefficients.
    pub fn new(coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64, tag: RowTag) -> Self {
        let mut c = coeffs;
        c.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(c.len());
        for (j, v) in c {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        LinearRow { coeffs: merged, rhs, sense, tag, stamp: None }
    }

    /// Same row with an iteration stamp.
    pub fn stamped(mut self, k: usize) -> Self {
        self.stamp = Some(k);
        self
    }

    /// `coeffs . x`.
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 if satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => crate::math::abs(a - self.rhs),
        }
    }
}

/// Minimization LP with bounded variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    /// Constant added to the objective value.
    pub offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LinearRow>,
}

impl LpProblem {
    /// Empty problem.
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of variables.
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    /// Appends a row.
    pub fn add_row(&mut self, row: LinearRow) {
        self.rows.push(row);
    }

    /// Objective value at `x`, including the offset.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest row or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Checks that every row references a valid variable and bounds are ordered.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vector length"));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(LpError::BadBounds(j));
            }
        }
        for r in &self.rows {
            if r.coeffs.iter().any(|&(j, v)| j >= n || !v.is_finite()) || !r.rhs.is_finite() {
                return Err(LpError::Malformed("row references invalid variable or non-finite value"));
            }
        }
        Ok(())
    }
}

/// LP construction errors.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("penalty weight must be non-negative, got {0}")]
    NegativeWeight(f64),
    #[error("variable {0} out of range")]
    BadIndex(usize),
    #[error("variable {0} has inconsistent bounds")]
    BadBounds(usize),
    #[error("malformed problem: {0}")]
    Malformed(&'static str),
}

/// Solver status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Result of an LP or MILP solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals `y` with reduced costs `c - A^T y`.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    /// True for optimal status.
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Adds `weight * abs(x[var] - center)` through split variables `s+`, `s-`.
///
/// Returns the indices of `(s+, s-)`.
pub fn add_abs_penalty(
    problem: &mut LpProblem,
    var: usize,
    center: f64,
    weight: f64,
) -> Result<(usize, usize), LpError> {
    if weight < 0.0 || weight.is_nan() {
        return Err(LpError::NegativeWeight(weight));
    }
    if var >= problem.num_vars() {
        return Err(LpError::BadIndex(var));
    }
    let span = (problem.upper[var] - center).max(center - problem.lower[var]).max(0.0);
    let sp = problem.add_var(0.0, span, weight);
    let sm = problem.add_var(0.0, span, weight);
    problem.add_row(LinearRow::new(alloc::vec![(var, 1.0), (sp, -1.0), (sm, 1.0)], Sense::Eq, center, RowTag::AbsSplit));
    Ok((sp, sm))
}
