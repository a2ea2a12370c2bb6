//! Command-line entry point: configuration, run directories, the pipeline
//! commands, plot export, and the self-test suite.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on usage errors, and 3
//! when a configuration or input fails validation.

pub mod artifacts;
mod commands;
pub mod config;
pub mod plots;
pub mod rundir;
pub mod selftest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
pub use config::{resolve, EvalConfig, Provenance, ResolvedConfig, RunConfig, SweepConfig};
pub use plots::export_plots;
pub use rundir::{Logger, RUN_ROOT_ENV};
pub use selftest::{run_selftest, CheckOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "jerkrom",
    version,
    about = "Jerk-regularized latent autoencoder and latent ODE forecasting",
    long_about = "Generates forced vorticity data, trains the autoencoder (stage I) and the latent \
                  vector field (stage II), forecasts at arbitrary resolution, evaluates, and exports \
                  figures. Each command reads and writes artifacts inside one run directory."
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML file merged over the defaults (and over the run's stored config).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set train.lambda=0.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Run directory. New runs default to a timestamped directory under the
    /// run root; later commands default to the newest run there.
    #[arg(long, global = true, value_name = "DIR")]
    pub run_dir: Option<PathBuf>,

    /// Root for timestamped run directories.
    #[arg(long, global = true, env = "JERKROM_RUN_ROOT", default_value = "runs", value_name = "DIR")]
    pub run_root: PathBuf,

    /// Dataset directory to use instead of `<run-dir>/data`.
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,

    /// Overwrite existing outputs and accept a changed configuration.
    #[arg(long, global = true)]
    pub force: bool,

    /// Load datasets and checkpoints whose config fingerprint differs.
    #[arg(long, global = true)]
    pub allow_mismatch: bool,

    /// Log every n-th training iteration.
    #[arg(long, global = true, default_value_t = 50, value_name = "N")]
    pub log_every: usize,

    /// Only write the log file, not stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the vorticity corpus and store it as `<run>/data`.
    GenData,
    /// Summarize a dataset, checkpoint, latent, or prediction container.
    Inspect {
        /// Container directory.
        path: PathBuf,
    },
    /// Stage I: train encoder and decoder with the jerk penalty.
    TrainAe,
    /// Encode every trajectory's training window with the stage-I model.
    Encode,
    /// Stage II: fit the latent vector field to the encoded trajectories.
    TrainOde,
    /// Forecast one trajectory at any resolution and set of times.
    Predict {
        /// Trajectory index; defaults to the first test trajectory.
        #[arg(long)]
        traj: Option<usize>,
        /// Output lattice size per side; defaults to `eval.predict_resolution` or the data grid.
        #[arg(long)]
        resolution: Option<usize>,
        /// Comma-separated times since the initial snapshot; defaults to both windows.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
    },
    /// Roll out every test trajectory and write `eval_report.json`.
    Eval,
    /// Train stage I once per jerk coefficient and write `sweep.json`.
    SweepLambda {
        /// Comma-separated coefficients; defaults to `sweep.lambdas`.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
    },
    /// Render figures and tables into `<run>/plots`.
    Plot {
        /// Render what is available instead of failing on missing inputs.
        #[arg(long)]
        allow_partial: bool,
    },
    /// Run the analytic-oracle suite.
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Inspect { .. } => "inspect",
            Command::TrainAe => "train-ae",
            Command::Encode => "encode",
            Command::TrainOde => "train-ode",
            Command::Predict { .. } => "predict",
            Command::Eval => "eval",
            Command::SweepLambda { .. } => "sweep-lambda",
            Command::Plot { .. } => "plot",
            Command::Selftest => "selftest",
        }
    }
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. }
        | Error::Shape(_)
        | Error::MissingInputs(_)
        | Error::Corruption { .. }
        | Error::Version { .. } => EXIT_INVALID,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    let mut log = Logger::new(cli.command.name(), cli.common.quiet);
    match commands::dispatch(&cli, &mut log) {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            let mut fields = vec![("error", e.to_string()), ("exit", code.to_string())];
            if let Error::Config { key, .. } = &e {
                fields.push(("key", key.clone()));
            }
            log.error("failed", &fields);
            if cli.common.quiet {
                eprintln!("error: {e}");
            }
            code
        }
    }
}
