use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fednoise::bench::{run_experiment, workers_from_env, write_csv, ExperimentConfig};
use fednoise::Error;

/// Federated training under noisy labels with class-wise centroid exchange.
#[derive(Debug, Parser)]
#[command(name = "fednoise", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment config file (`key = value` lines, `[section]` headers).
    #[arg(long)]
    config: PathBuf,
    /// Override one config key, e.g. `--override noise.epsilon=0.4`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its per-round CSV.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// CSV path; defaults to `experiment.output` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Client worker threads (default: $FEDNOISE_WORKERS, else all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the same experiment for each noise ratio in a list.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated noise ratios.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6])]
        epsilons: Vec<f64>,
        /// Directory receiving one `eps_<ratio>.csv` per run.
        #[arg(long)]
        out_dir: PathBuf,
        /// Same as for `run`.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Parse and validate a config, then print its resolved form.
    ValidateConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::from_file(&args.config, &args.overrides).map_err(|e| match e {
        Error::Io { .. } => Failure::Config(anyhow::Error::from(e)),
        other => Failure::Config(
            anyhow::Error::from(other).context(format!("invalid config {}", args.config.display())),
        ),
    })
}

fn run_one(cfg: &ExperimentConfig, output: &Path, workers: usize) -> Result<String, Failure> {
    let outcome = run_experiment(cfg, workers, |r| {
        log::info!("round {} accuracy {:.4}", r.round, r.test_accuracy)
    })?;
    write_csv(output, &outcome)
        .with_context(|| format!("writing {}", output.display()))
        .map_err(Failure::Runtime)?;
    Ok(outcome.summary_line(cfg))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            cfg,
            output,
            workers,
        } => {
            let config = load(&cfg)?;
            let output = output.or_else(|| config.output.clone()).ok_or_else(|| {
                Failure::Config(anyhow::anyhow!(
                    "no output path: pass --output or set experiment.output"
                ))
            })?;
            let summary = run_one(&config, &output, workers.unwrap_or_else(workers_from_env))?;
            println!("{summary}");
        }
        Command::Sweep {
            cfg,
            epsilons,
            out_dir,
            workers,
        } => {
            let workers = workers.unwrap_or_else(workers_from_env);
            for eps in epsilons {
                let mut overrides = cfg.overrides.clone();
                overrides.push(format!("noise.epsilon={eps}"));
                let config = load(&ConfigArgs {
                    config: cfg.config.clone(),
                    overrides,
                })?;
                let path = out_dir.join(format!("eps_{eps}.csv"));
                println!("{}", run_one(&config, &path, workers)?);
            }
        }
        Command::ValidateConfig { cfg } => {
            let config = load(&cfg)?;
            print!("{}", config.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage mistakes are configuration errors, not runtime failures
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
