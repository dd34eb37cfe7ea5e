use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glocal_cli::{runner, CliError, ExperimentConfig};
use log::{error, info};

#[derive(Parser)]
#[command(name = "glocal", version, about = "Quench dynamics of two coupled harmonic lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML, dotted keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output.dir` from the configuration.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only report warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Full pipeline: trajectory, profiles, GGE, equilibration and energetics.
    Run,
    /// Normal modes and degeneracy report.
    Spectrum,
    /// Generalized temperatures and charge residuals.
    Gge,
    /// Sweep one scalar parameter at a fixed time.
    Scan,
    /// Structural invariant suite on the configured system.
    Validate,
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(dir) = &cli.output_dir {
        config.output.dir = dir.clone();
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let dir = config.output.dir.clone();
    let (out, ok) = match cli.command {
        Command::Run => (runner::run(config)?, true),
        Command::Spectrum => (runner::spectrum(config)?, true),
        Command::Gge => (runner::gge(config)?, true),
        Command::Scan => (runner::scan(config)?, true),
        Command::Validate => runner::validate(config)?,
    };
    out.write_all(&dir)?;
    info!("wrote {} files to {}", out.names().len(), dir.display());
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation("see validate.json".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
