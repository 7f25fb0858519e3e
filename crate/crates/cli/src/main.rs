//! Benchmark driver for the boundary element library: spectra, conditioning,
//! GMRES solves, density and frequency sweeps, multiple scattering and field
//! maps, reproducing the acoustic transmission benchmarks at desk scale.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::{CliError, RunContext};
use config::Config;

#[derive(Parser)]
#[command(
    name = "transbem",
    version,
    about = "Acoustic transmission BEM benchmarks",
    after_help = "Exit codes: 0 success, 2 config error, 3 resource guard, 4 numerical failure."
)]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Formulations to run (repeatable; overrides the config list).
    #[arg(long = "formulation", global = true)]
    formulations: Vec<String>,
    /// Frequency override in Hz.
    #[arg(long, global = true)]
    freq: Option<f64>,
    /// Icosphere subdivision level override for sphere geometries.
    #[arg(long, global = true)]
    mesh_level: Option<u32>,
    /// Output directory (default: out).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Dense-memory budget in GB (default: 16).
    #[arg(long, global = true)]
    budget_gb: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue spectra with predicted accumulation points.
    Spectrum,
    /// Condition numbers of the strong-form systems.
    Condition,
    /// GMRES solves with iteration accounting.
    Solve,
    /// Condition number vs density ratio (constant-c or constant-beta).
    SweepDensity,
    /// Condition number and iterations vs frequency on the cube.
    SweepFrequency,
    /// Multiple scattering over a string of interior materials.
    Multi,
    /// Field map on a plane plus surface magnitudes.
    Field,
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::from_path(path)?,
        None => {
            return Err(CliError::Config(config::ConfigError::Invalid(
                "--config <file.json> is required".into(),
            )))
        }
    };
    if !cli.formulations.is_empty() {
        config.formulations = cli.formulations.clone();
    }
    if let Some(f) = cli.freq {
        config.frequency = Some(f);
    }
    if let Some(level) = cli.mesh_level {
        match &mut config.geometry {
            config::GeometrySpec::Icosphere { level: l, .. } => *l = level,
            config::GeometrySpec::SphereRow { level: l, .. } => *l = level,
            _ => {}
        }
    }
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.clone());
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(config::ConfigError::Invalid(e.to_string())))?;
    }
    let config = load_config(cli)?;
    let budget_gb = cli.budget_gb.or(config.budget_gb).unwrap_or(16.0);
    let ctx = RunContext { config, budget_gb };
    match cli.command {
        Command::Spectrum => commands::run_spectrum(&ctx),
        Command::Condition => commands::run_condition(&ctx),
        Command::Solve => commands::run_solve(&ctx),
        Command::SweepDensity => commands::run_density_sweep(&ctx),
        Command::SweepFrequency => commands::run_frequency_sweep(&ctx),
        Command::Multi => commands::run_multi(&ctx),
        Command::Field => commands::run_field(&ctx),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
