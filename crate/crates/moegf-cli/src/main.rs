use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use moegf_cli::{run, CliError, Overrides, RunConfig, RunMethod, StartStrategy};

/// Multiperiod optimal electricity and gas flow solver.
#[derive(Debug, Parser)]
#[command(name = "moegf", version)]
struct Cli {
    /// Instance JSON file.
    #[arg(env = "MOEGF_INSTANCE")]
    instance: PathBuf,
    /// validate | relax | phase1 | alg1 | alg2 | lower-bound | compare | check
    #[arg(long, env = "MOEGF_METHOD", default_value = "alg1")]
    method: String,
    /// Initial point of the SLP phases: cold | warm.
    #[arg(long, env = "MOEGF_START", default_value = "warm")]
    start: String,
    /// Feasibility tolerance on the nonlinear residuals.
    #[arg(long, env = "MOEGF_EPSILON")]
    epsilon: Option<f64>,
    /// Iteration cap per SLP phase.
    #[arg(long, env = "MOEGF_MAX_ITERS")]
    max_iters: Option<usize>,
    /// Steering flip period of alg2.
    #[arg(long, env = "MOEGF_KF")]
    kf: Option<usize>,
    /// Segments of the piecewise-linear generation cost.
    #[arg(long, env = "MOEGF_SEGMENTS")]
    segments: Option<usize>,
    /// Cut rounds of the lower bound.
    #[arg(long, env = "MOEGF_CUT_ROUNDS")]
    cut_rounds: Option<usize>,
    /// Output directory.
    #[arg(long, env = "MOEGF_OUT", default_value = ".")]
    out: PathBuf,
    /// Seed of the sampled checks.
    #[arg(long, env = "MOEGF_SEED", default_value_t = 0)]
    seed: u64,
    /// Points sampled by `check`.
    #[arg(long, env = "MOEGF_SAMPLES", default_value_t = 200)]
    samples: usize,
}

fn config(cli: Cli) -> Result<RunConfig, CliError> {
    Ok(RunConfig {
        method: cli.method.parse::<RunMethod>()?,
        start: cli.start.parse::<StartStrategy>()?,
        overrides: Overrides {
            epsilon: cli.epsilon,
            max_iters: cli.max_iters,
            kf: cli.kf,
            segments: cli.segments,
            cut_rounds: cli.cut_rounds,
        },
        out: cli.out,
        seed: cli.seed,
        samples: cli.samples,
        instance: cli.instance,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config(cli).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            let _ = writeln!(std::io::stdout().lock(), "{}", outcome.stdout.trim_end());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr().lock(), "{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
