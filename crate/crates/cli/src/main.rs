use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use bdcsense_cli::commands;
use bdcsense_cli::config::RunConfig;
use bdcsense_cli::CliError;

/// Sensorless speed, temperature and resistance estimation for brushed DC
/// machines: simulate the machine, generate noisy training data, train a
/// cascade-forward network with resilient backpropagation, and evaluate
/// the steady-state estimation errors.
#[derive(Parser)]
#[command(name = "bdcsense", version, about)]
struct Cli {
    /// Config file with `key = value` lines (defaults < file < --set).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set dataset.sigma_v=0.5`.
    /// Repeatable; applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Master seed; derives the noise, weight-init and fold sub-seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap. Results are independent of this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory (default `bdcsense-out`; `repro` defaults to a
    /// timestamped directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the effective merged configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the machine over the configured drive profile.
    Simulate,
    /// Build the noisy, normalized dataset (simulates inline unless
    /// --trajectory is given).
    Gendata {
        /// Existing trajectory CSV to sample from.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Train the cascade network on an existing dataset.
    Train {
        /// Dataset CSV produced by `gendata`.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Evaluate a checkpoint against a clean trajectory and noisy dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// One-shot pipeline: simulate, gendata, train, evaluate, and check
    /// the run-level acceptance thresholds. Exit code 0 means PASS.
    Repro,
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for kv in &cli.sets {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.apply_kv(key.trim(), value.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    }
    let cfg = build_config(cli)?;
    if cli.print_config {
        cfg.validate()?;
        print!("{}", cfg.to_config_text());
        return Ok(0);
    }
    let command = cli
        .command
        .as_ref()
        .ok_or_else(|| CliError::Validation("no subcommand given (see --help)".into()))?;
    let default_out = |name: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from(name));
    match command {
        Command::Simulate => {
            commands::cmd_simulate(&cfg, &default_out("bdcsense-out"))?;
        }
        Command::Gendata { trajectory } => {
            commands::cmd_gendata(&cfg, &default_out("bdcsense-out"), trajectory.as_deref())?;
        }
        Command::Train { dataset } => {
            commands::cmd_train(&cfg, &default_out("bdcsense-out"), dataset)?;
        }
        Command::Evaluate {
            checkpoint,
            trajectory,
            dataset,
        } => {
            commands::cmd_evaluate(
                &cfg,
                &default_out("bdcsense-out"),
                checkpoint,
                trajectory,
                dataset,
            )?;
        }
        Command::Repro => {
            let out = cli.out.clone().unwrap_or_else(|| {
                let secs = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                PathBuf::from(format!("bdcsense-repro-{secs}"))
            });
            let outcome = commands::cmd_repro(&cfg, &out)?;
            eprintln!("repro artifacts in {}", outcome.out_dir.display());
            if !outcome.pass {
                eprintln!("repro: thresholds not met (numerical failure)");
                return Ok(2);
            }
        }
    }
    Ok(0)
}

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
