//! File formats, reports and the command-line front end of `moegf`.
//!
//! Instances are JSON documents in SI units (see `instances/`). A run
//! writes a JSON report, an iteration trace CSV and a linepack CSV per
//! method into the output directory.

pub mod check;
pub mod config;
pub mod error;
pub mod io;
pub mod run;

pub use config::{Overrides, RunConfig, RunMethod, StartStrategy};
pub use error::{exit, CliError, ErrorKind};
pub use io::{load_instance, parse_instance};
pub use run::{run, RunOutcome};

/// Instances shipped with the crate, as `(name, json)`.
pub const BUNDLED_INSTANCES: [(&str, &str); 3] = [
    ("nano", include_str!("../instances/nano.json")),
    ("case_a", include_str!("../instances/case_a.json")),
    ("case_b", include_str!("../instances/case_b.json")),
];
