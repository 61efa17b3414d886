use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deflect_core::config::RunConfig;
use deflect_core::Error;

mod angle;
mod commands;

#[derive(Parser)]
#[command(name = "deflect", version, about = "Laser-deflection simulation and ground-state tomography")]
struct Cli {
    /// TOML run configuration; the built-in defaults are used when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory receiving every output file.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prepared reference-manifold state and F=1 loss against waveplate angle.
    Prepare {
        /// Waveplate angle in radians (`pi/4` style accepted); repeatable.
        /// Defaults to the scan grid.
        #[arg(long = "theta", value_name = "THETA", value_parser = angle::parse, allow_hyphen_values = true)]
        thetas: Vec<f64>,
    },
    /// Deflection parameters for every polarisation and direction, plus K coefficients.
    Dparams,
    /// Waveplate scan of the orientation signal and the derived L⊥ curve.
    Scan,
    /// Reconstruct the ground-state density matrix from momentum measurements.
    Tomography(TomographyArgs),
}

#[derive(Args)]
struct TomographyArgs {
    /// CSV with columns mode,direction,momentum,uncertainty.
    #[arg(long, value_name = "FILE", required_unless_present = "synthetic", conflicts_with = "synthetic")]
    measurements: Option<PathBuf>,
    /// Simulate measurements of the state prepared at this waveplate angle.
    #[arg(long, value_name = "THETA", value_parser = angle::parse, allow_hyphen_values = true)]
    synthetic: Option<f64>,
    /// Gaussian noise as a fraction of the largest momentum.
    #[arg(long, value_name = "FRACTION", default_value_t = 0.0)]
    noise: f64,
    /// Prepared-state table to score the reconstruction against.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Row of the truth table to use.
    #[arg(long, value_name = "INDEX", default_value_t = 0)]
    truth_row: usize,
    /// Monte-Carlo repetitions for the fidelity interval.
    #[arg(long, value_name = "N", default_value_t = 200)]
    trials: usize,
}

enum Failure {
    Core(Error),
    ScanPoints(Vec<(f64, String)>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical { .. } | Error::Fit(_) | Error::Conditioning(_) => 2,
        Error::InsufficientMeasurements(_) => 3,
        Error::Config(_) | Error::Parse(_) | Error::Spin(_) | Error::Io(_) => 1,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Error::Config(format!("--out {}: {e}", cli.out.display())))?;
    let ctx = commands::Context::new(cfg, cli.out.clone());
    match &cli.command {
        Command::Prepare { thetas } => commands::prepare(&ctx, thetas)?,
        Command::Dparams => commands::dparams(&ctx)?,
        Command::Scan => {
            let failures = commands::scan(&ctx)?;
            if !failures.is_empty() {
                return Err(Failure::ScanPoints(failures));
            }
        }
        Command::Tomography(args) => commands::tomography(
            &ctx,
            &commands::TomographyRequest {
                measurements: args.measurements.clone(),
                synthetic: args.synthetic,
                noise: args.noise,
                truth: args.truth.clone(),
                truth_row: args.truth_row,
                trials: args.trials,
            },
        )?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::ScanPoints(failures)) => {
            eprintln!("error: {} scan point(s) failed:", failures.len());
            for (theta, msg) in &failures {
                eprintln!("  theta = {theta}: {msg}");
            }
            ExitCode::from(2)
        }
    }
}
