use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use helibo::commands::{self, CommandError};
use helibo::config::{ConfigError, RunConfig};
use helibo::detector::EnvCondition;

/// Closed-loop landing simulation and augmentation-parameter search.
#[derive(Parser)]
#[command(name = "helibo", version, about)]
struct Cli {
    /// TOML configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the environment: clear_day | clear_night | night_rain.
    #[arg(long, global = true)]
    env: Option<String>,
    /// Override the output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Override any config field, e.g. --set trials.trials_per_eval=20
    /// (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY.PATH=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search (scale, brightness) for the best landing success rate.
    Optimize,
    /// Evaluate fixed augmentation parameters.
    Evaluate {
        #[arg(long, short = 's')]
        scale: f64,
        #[arg(long, short = 'b')]
        brightness: f64,
        /// Evaluate under all three environments instead of the
        /// configured one.
        #[arg(long)]
        all_envs: bool,
    },
    /// Ensemble disagreement of a model evaluated across environments.
    Uncertainty,
    /// Dump the reference quality landscape (and a posterior grid, given
    /// a previous observations file).
    Landscape {
        /// observations.csv from an earlier optimize run.
        #[arg(long)]
        observations: Option<PathBuf>,
    },
    /// Convert corner-format CSV annotations to normalized labels.
    ConvertLabels {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write seeded train/val image lists with this validation
        /// fraction.
        #[arg(long)]
        val_fraction: Option<f64>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CommandError> {
    let mut config = RunConfig::load(cli.config.as_deref())?.apply_overrides(&cli.sets)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(env) = &cli.env {
        config.env = EnvCondition::from_str(env).map_err(|e| ConfigError::Invalid {
            field: "env",
            reason: e.to_string(),
        })?;
    }
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CommandError> {
    match &cli.command {
        Command::Optimize => {
            commands::cmd_optimize(&load_config(cli)?)?;
        }
        Command::Evaluate {
            scale,
            brightness,
            all_envs,
        } => {
            commands::cmd_evaluate(&load_config(cli)?, *scale, *brightness, *all_envs)?;
        }
        Command::Uncertainty => {
            commands::cmd_uncertainty(&load_config(cli)?)?;
        }
        Command::Landscape { observations } => {
            commands::cmd_landscape(&load_config(cli)?, observations.as_deref())?;
        }
        Command::ConvertLabels {
            input,
            output,
            val_fraction,
            split_seed,
        } => {
            commands::cmd_convert_labels(input, output, *val_fraction, *split_seed)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
