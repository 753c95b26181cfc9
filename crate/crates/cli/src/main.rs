//! `fps`: run simulations, fit SIS curves and report propagation metrics.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fps_core::artifacts::{self, FitArtifact};
use fps_core::error::{ArtifactError, ConfigError, Error};
use fps_core::{parse_config, BackendKind, InterventionSchedule, ProfileKind};

#[derive(Parser)]
#[command(name = "fps", version, about = "Fake news propagation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a run and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        backend: Option<BackendKind>,
        #[arg(long)]
        seed: Option<u64>,
        /// `none`, `on_days(d1,d2,...)` or `every_k(start,k)`.
        #[arg(long)]
        intervention: Option<InterventionSchedule>,
        #[arg(long)]
        profile: Option<ProfileKind>,
    },
    /// Fit the SIS model to a counts file.
    Fit {
        counts: PathBuf,
        /// Defaults to `fit.json` next to the counts file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute `metrics.csv` for a run directory.
    Metrics { run: PathBuf },
    /// Print a metrics table for one or more run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Artifact(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            Error::Artifact(_) => Failure::Artifact(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ArtifactError> for Failure {
    fn from(e: ArtifactError) -> Self {
        Failure::Artifact(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            out,
            backend,
            seed,
            intervention,
            profile,
        } => {
            let mut cfg = parse_config(&config)?;
            if let Some(b) = backend {
                cfg.backend = b;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(i) = intervention {
                cfg.intervention = i;
            }
            if let Some(p) = profile {
                cfg.profile = p;
            }
            cfg.validate()?;
            let (dir, _) = artifacts::run_command(&cfg, &out, &mut |day, c| {
                println!("day {day:>3}  S={:<4} I={:<4} R={}", c.susceptible, c.infected, c.recovered);
            })?;
            println!("artifacts written to {}", dir.dir.display());
        }
        Command::Fit { counts, out } => {
            let out = out.unwrap_or_else(|| {
                counts
                    .parent()
                    .unwrap_or(std::path::Path::new("."))
                    .join(artifacts::FIT_FILE)
            });
            let FitArtifact { fit, .. } = artifacts::fit_command(&counts, &out)?;
            println!(
                "beta={:.6} gamma={:.6} residual={:.6} status={:?} -> {}",
                fit.beta,
                fit.gamma,
                fit.residual,
                fit.status,
                out.display()
            );
        }
        Command::Metrics { run } => {
            let report = artifacts::metrics_command(&run)?;
            print!("{}", report.to_csv());
        }
        Command::Report { runs } => {
            print!("{}", artifacts::report_command(&runs)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Artifact(m)) => {
            eprintln!("artifact error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
