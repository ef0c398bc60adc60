//! `lobscale`: simulate the order book models at each scale, calibrate
//! against LOBSTER files and run the cross-scale checks.
//!
//! Exit status: 0 success, 1 a validation ladder that ran but failed,
//! 2 configuration error, 3 data error, 4 numerical failure, 5 I/O.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use commands::{Common, Outcome};
use lobscale::validation::LadderKind;
use lobscale::{Error, ErrorCategory};
use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "lobscale", version, about = "Multi-scale limit order book simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Model configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory, created if absent.
    #[arg(long, default_value = "lobscale-out")]
    out: PathBuf,
    /// Number of independent runs (paths per cell for `validate`).
    #[arg(long, default_value_t = 1)]
    ensemble: usize,
    /// Comma-separated snapshot times, overriding the config.
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
    /// Worker threads; defaults to LOBSCALE_THREADS, then all cores.
    #[arg(long, env = "LOBSCALE_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Event-driven microscopic model from the [micro] section.
    SimulateMicro(CommonArgs),
    /// Reflected SDE system from the [meso] section.
    SimulateMeso(CommonArgs),
    /// Finite-difference scheme from the [scheme] section.
    SimulateMacro(CommonArgs),
    /// Estimate coefficients and price rates from a LOBSTER file pair.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        message: PathBuf,
        #[arg(long)]
        book: PathBuf,
    },
    /// Cross-scale convergence ladder.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "trivial")]
        ladder: LadderKind,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 3)]
        seeds: usize,
    },
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numerical => 4,
        ErrorCategory::Runtime => 5,
    }
}

fn category_name(category: ErrorCategory) -> &'static str {
    match category {
        ErrorCategory::Config => "config",
        ErrorCategory::Data => "data",
        ErrorCategory::Numerical => "numerical",
        ErrorCategory::Runtime => "runtime",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::SimulateMicro(a) => ("simulate-micro", a),
        Command::SimulateMeso(a) => ("simulate-meso", a),
        Command::SimulateMacro(a) => ("simulate-macro", a),
        Command::Calibrate { common, .. } => ("calibrate", common),
        Command::Validate { common, .. } => ("validate", common),
    };
    if args.ensemble == 0 {
        error!("--ensemble must be at least 1");
        return ExitCode::from(2);
    }
    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            error!("thread pool: {e}");
            return ExitCode::from(5);
        }
    }
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        error!("{}: {e}", args.out.display());
        return ExitCode::from(5);
    }
    let common = Common {
        config: args.config.clone(),
        seed: args.seed,
        ensemble: args.ensemble,
        out: args.out.clone(),
        snapshot_times: args.snapshot_times.clone(),
    };
    let mut manifest = Manifest::new(name, args.seed, args.ensemble, args.config.as_deref());

    let result: Result<Outcome, Error> = match &cli.command {
        Command::SimulateMicro(_) => commands::simulate_micro_cmd(&common),
        Command::SimulateMeso(_) => commands::simulate_meso_cmd(&common),
        Command::SimulateMacro(_) => commands::simulate_macro_cmd(&common),
        Command::Calibrate { message, book, .. } => commands::calibrate_cmd(&common, message, book),
        Command::Validate { ladder, seeds, .. } => commands::validate_cmd(&common, *ladder, *seeds),
    };
    let (code, failure) = match result {
        Ok(outcome) => {
            manifest.settings = outcome.settings;
            (outcome.exit as u8, None)
        }
        Err(e) => {
            let category = e.category();
            error!("{e}");
            (exit_code(category), Some((category_name(category), e.to_string())))
        }
    };
    if let Err(e) = manifest.write(&args.out, failure) {
        error!("manifest: {e}");
        return ExitCode::from(5);
    }
    ExitCode::from(code)
}
