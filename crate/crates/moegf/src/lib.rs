//! Multiperiod optimal electricity and gas flow (MOEGF).
//!
//! The crate builds the coupled electricity/gas dispatch problem with
//! quasi-dynamic gas flow, constructs polyhedral envelopes of its
//! nonconvex terms, and solves it with two sequential linear programming
//! methods: an iterative MILP method and an iterative LP method with
//! integer steering. A cutting-plane lower bound from a mixed-integer
//! convex relaxation measures the optimality gap.
//!
//! The crate is `no_std` compatible (it needs `alloc`). All quantities
//! inside [`instance::Instance`] are per-unit.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod diagnostics;
pub mod envelopes;
pub mod formulation;
pub mod instance;
pub mod lp;
pub mod math;
pub mod relaxation;
pub mod slp;

pub use diagnostics::{compute_gaps, evaluate_feasibility, linepack_trajectory, Feasibility, Gaps};
pub use envelopes::{Envelope, EnvelopeError, EnvelopeFamily, Halfspace};
pub use formulation::{build_moegf, ProblemModel, Residual, ResidualKind};
pub use instance::{Instance, InstanceError, SiInstance};
pub use lp::{bnb_solve, lp_solve, LinearRow, LpProblem, LpSolution, LpStatus, RowTag, Sense};
pub use relaxation::{micp_lower_bound, solve_polyhedral_relaxation};
pub use slp::{phase1_slp, phase2_milp, phase2_steering, SolverParams, SolverState};
