//! `wavefront`: travelling fronts and standing pulses from JSON problem files.
//!
//! Exit codes: 0 success, 2 bad config, 3 numerical failure, 4 the solver
//! reports that no connection exists or none was found.

mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::{Command, Context};
use config::{RunConfig, Tolerances};
use error::CliError;
use output::{envelope, Output};

#[derive(Debug, Parser)]
#[command(name = "wavefront", version, about = "Fronts and pulses of gradient reaction-diffusion systems")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Critical points of the potential and their spectra.
    Equilibria(RunArgs),
    /// Solve for a travelling front.
    Front(RunArgs),
    /// Solve for a standing pulse.
    Pulse(RunArgs),
    /// Overshoot indicator on a grid of speeds.
    Scan(RunArgs),
    /// Transversality and tangency of a saved solution.
    Check(RunArgs),
    /// Re-solve a saved front under a ladder of bump amplitudes.
    Perturb(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    config: PathBuf,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mismatch tolerance for the shooting solver.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl Sub {
    fn split(self) -> (Command, RunArgs) {
        match self {
            Self::Equilibria(a) => (Command::Equilibria, a),
            Self::Front(a) => (Command::Front, a),
            Self::Pulse(a) => (Command::Pulse, a),
            Self::Scan(a) => (Command::Scan, a),
            Self::Check(a) => (Command::Check, a),
            Self::Perturb(a) => (Command::Perturb, a),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("WAVEFRONT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::config(format!("WAVEFRONT_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (command, args) = cli.command.split();
    let config = RunConfig::load(&args.config)?;
    if let Some(c) = &config.command {
        if c != command.name() {
            return Err(CliError::config(format!(
                "config is for `{c}` but `{}` was invoked",
                command.name()
            )));
        }
    }
    let flags = Tolerances {
        solve_tol: args.tol,
        max_iter: args.max_iter,
        ..Tolerances::default()
    };
    flags.validate()?;
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out_dir = args
        .out
        .or_else(|| config.out.as_ref().map(|p| base.join(p)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let out = Output::create(&out_dir)?;
    let ctx = Context {
        command,
        tolerances: config.tolerances.overridden_by(flags),
        config,
        base,
        flags,
        out,
    };
    match commands::run(&ctx) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Err(err) => {
            let status = match err {
                CliError::NoConnection { .. } => Some("no_connection"),
                CliError::Numerical(_) => Some("failed"),
                _ => None,
            };
            if let Some(status) = status {
                let body = json!({ "reason": err.reason(), "message": err.to_string() });
                ctx.out.write_json("report.json", &envelope(command.name(), status, body))?;
            }
            Err(err)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("wavefront: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
