use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairpm::commands;
use fairpm::{CliError, Overrides, Settings};

/// Fairness-aware predictive process monitoring.
#[derive(Parser, Debug)]
#[command(name = "fairpm", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Configuration file; relative paths inside it resolve against its directory.
    #[arg(long, short, global = true, default_value = "fairpm.toml")]
    config: PathBuf,
    /// Overrides the configured seed for training, sampling and generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Weight of the adversary term; 0 trains a plain predictor.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// `total_time` or `occurs:<activity>`.
    #[arg(long, global = true)]
    outcome: Option<String>,
    /// Protected attribute names, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    protected: Option<Vec<String>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split `data.input` into the earliest traces for training and the rest for testing.
    Split,
    /// Train predictor and adversary on `data.train`.
    Train {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Accuracy and group fairness of a model on `data.test`.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Shapley attribution of a model's predictions.
    Explain {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Support log; defaults to `data.test`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Model to compare against (typically trained with --lambda 0).
        #[arg(long)]
        baseline_model: Option<PathBuf>,
    },
    /// Write a synthetic log with injected bias.
    Generate {
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let overrides = Overrides {
        seed: cli.global.seed,
        lambda: cli.global.lambda,
        outcome: cli.global.outcome,
        protected: cli.global.protected,
    };
    let settings = Settings::load(&cli.global.config, &overrides)?;
    let out = match cli.command {
        Command::Split => commands::split(&settings)?,
        Command::Train { model } => commands::train(&settings, model.as_deref())?,
        Command::Evaluate { model, log } => {
            commands::evaluate(&settings, model.as_deref(), log.as_deref())?.0
        }
        Command::Explain {
            model,
            log,
            baseline_model,
        } => {
            commands::explain(
                &settings,
                model.as_deref(),
                log.as_deref(),
                baseline_model.as_deref(),
            )?
            .0
        }
        Command::Generate { output } => commands::generate(&settings, output.as_deref())?,
    };
    let mut text = out.summary;
    for f in &out.files {
        text.push_str(&format!("\nwrote {}", f.display()));
    }
    Ok(text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
