use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use aporo_cli::{fixture, Config, Pipeline, PipelineError, Stage};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aporo", version, about = "Build, annotate and benchmark a labeled social-media corpus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one stage, or `all` of them in order.
    Run {
        /// Stage name or `all`.
        stage: String,
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Check a configuration file and print the resolved values.
    ValidateConfig { path: PathBuf },
    /// Serve the annotation API (and UI assets) over the sampled items.
    Serve {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Write the synthetic fixture corpus and its configuration.
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration.
    DefaultConfig,
}

fn load(path: &Path) -> Result<Pipeline, PipelineError> {
    let (config, warnings) = Config::load(path)?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(Pipeline::new(config))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run { stage, config } => {
            let pipeline = load(&config)?;
            if stage == "all" {
                pipeline.run_all()?;
            } else {
                let stage: Stage = stage
                    .parse()
                    .map_err(|e: String| aporo_cli::ConfigError::Schema(vec![e]))?;
                pipeline.run(stage)?;
            }
        }
        Command::ValidateConfig { path } => {
            let pipeline = load(&path)?;
            print!("{}", toml::to_string(&pipeline.config).expect("config serialises"));
        }
        Command::Serve { config, static_dir } => load(&config)?.serve(static_dir)?,
        Command::Fixture { .. } | Command::DefaultConfig => unreachable!("handled in main"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Fixture { out } => {
            return match fixture::write_fixture(out).with_context(|| format!("writing fixture to {}", out.display())) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            };
        }
        Command::DefaultConfig => {
            print!("{}", Config::default_toml());
            return ExitCode::SUCCESS;
        }
        _ => {}
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
