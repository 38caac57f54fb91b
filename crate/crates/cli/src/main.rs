use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinphonon::projection::DEFAULT_RANK_TOL;
use spinphonon::rates::DEFAULT_WIDTH_CM1;
use spinphonon_cli::commands::{AnalyzeArgs, EvolveArgs, ProjectArgs, RatesArgs, Temperatures};
use spinphonon_cli::config::{BroadeningConfig, LineshapeName};
use spinphonon_cli::{cmd_analyze, cmd_evolve, cmd_project, cmd_rates, CliError, CliResult};

#[derive(Parser)]
#[command(name = "spinphonon", version, about = "Spin relaxation through projected molecular vibrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the vibrations into primary modes and a residual bath.
    Project {
        /// One frequency (cm^-1) per line.
        #[arg(long)]
        frequencies: PathBuf,
        /// 3 comma-separated rows (x, y, z), one column per mode (cm^-1).
        #[arg(long)]
        coupling: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        rank_tol: f64,
        /// Field (T) at which the couplings were computed.
        #[arg(long, default_value_t = 1.0)]
        reference_field: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relaxation rates of the primary modes from a projection document.
    Rates {
        #[arg(long)]
        projection: PathBuf,
        /// `T` or `start:stop:step` in K.
        #[arg(long)]
        temperature: String,
        #[arg(long, value_enum, default_value_t = Lineshape::Gaussian)]
        lineshape: Lineshape,
        #[arg(long, default_value_t = DEFAULT_WIDTH_CM1)]
        width: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Propagate the spin and primary modes.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory CSV (the state archive goes next to it).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        store_states: bool,
        /// Record every n-th step.
        #[arg(long)]
        stride: Option<usize>,
        /// Rerun at half the step and report the largest observable change.
        #[arg(long)]
        convergence_check: bool,
    },
    /// Detrended populations, mutual information, periods and plot script.
    Analyze {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        states: Option<PathBuf>,
        /// Simulation configuration, for thermal detrending.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mutual_information: bool,
        /// `min:max` period window in ps for the period search.
        #[arg(long)]
        period_band: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Lineshape {
    Gaussian,
    Lorentzian,
}

fn band(s: &str) -> CliResult<(f64, f64)> {
    let parsed: Option<(f64, f64)> =
        s.split_once(':').and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
    match parsed {
        Some((lo, hi)) if lo > 0.0 && hi > lo => Ok((lo, hi)),
        _ => Err(CliError::validation(format!("period band `{s}` is not `min:max` with 0 < min < max"))),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Project { frequencies, coupling, rank_tol, reference_field, out } => {
            let summary =
                cmd_project(&ProjectArgs { frequencies, coupling, rank_tol, reference_field_t: reference_field, out })?;
            println!("{summary}");
        }
        Command::Rates { projection, temperature, lineshape, width, out } => {
            let lineshape = match lineshape {
                Lineshape::Gaussian => LineshapeName::Gaussian,
                Lineshape::Lorentzian => LineshapeName::Lorentzian,
            };
            let args = RatesArgs {
                projection,
                temperatures: Temperatures::parse(&temperature)?,
                broadening: BroadeningConfig { lineshape, width_cm1: width },
                out,
            };
            let table = cmd_rates(&args)?;
            println!("{} temperatures written to {}", table.temperatures_k.len(), args.out.display());
        }
        Command::Evolve { config, out, store_states, stride, convergence_check } => {
            let outcome = cmd_evolve(&EvolveArgs { config, out, store_states, stride, convergence_check })?;
            println!("trajectory: {} ({} records)", outcome.trajectory_csv.display(), outcome.trajectory.len());
            if let Some(a) = &outcome.archive {
                println!("states: {}", a.display());
            }
            if let Some(dev) = outcome.convergence_deviation {
                println!("convergence check: max |observable(dt) - observable(dt/2)| = {dev:.3e}");
            }
        }
        Command::Analyze { trajectory, states, config, mutual_information, period_band, out, plot } => {
            let period_band = period_band.as_deref().map(band).transpose()?;
            let outcome =
                cmd_analyze(&AnalyzeArgs { trajectory, states, config, mutual_information, period_band, out, plot })?;
            print!("{outcome}");
            println!("plot script: {}", outcome.plot_script.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
