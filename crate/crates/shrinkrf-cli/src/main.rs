//! Benchmark CLI: run the shrinking-gradient learner and its baselines from a
//! TOML experiment config, sweep horizons for regret scaling, compare test
//! error across training sizes, or estimate a checkpointed hypothesis at a
//! point.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 invariant
//! violation, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shrinkrf::bench;
use shrinkrf::config::ExperimentConfig;
use shrinkrf::error::Error;

#[derive(Parser)]
#[command(name = "shrinkrf", version, about = "Online kernel regression from sampled random features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the base seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to $SHRINKRF_OUT, then the config value.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent repeats / sweep points.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured algorithms over seeded repeats.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Regret scaling over a list of horizons with theorem-schedule parameters.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated horizons, e.g. 500,2000,8000.
        #[arg(long, value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
    },
    /// Held-out error of all algorithms across training sizes.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// One-off estimate of a checkpointed hypothesis at a point.
    Estimate {
        /// Checkpoint JSON written by `run`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Query point, comma-separated reals, e.g. "0.1,-0.2".
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        point: Vec<f64>,
        #[arg(long, default_value_t = 0.1)]
        eps0: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Clamp the estimate to the label range [-1, 1].
        #[arg(long)]
        clamp: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(common: &CommonArgs) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.learner.seed = seed;
    }
    if let Some(workers) = common.workers {
        if workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        cfg.run.workers = workers;
    }
    let out = bench::resolve_out_dir(common.out.as_deref(), &cfg);
    Ok((cfg, out))
}

fn print_warnings(cfg: &ExperimentConfig) {
    if let Ok(lc) = cfg.learner_config_for(cfg.learner.horizon.max(1), cfg.learner.seed) {
        if let Ok(warnings) = lc.validate() {
            for w in warnings {
                eprintln!("warning: {w}");
            }
        }
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { common } => {
            let (cfg, out) = load_config(&common)?;
            print_warnings(&cfg);
            let artifacts = bench::cmd_run(&cfg, &out)?;
            println!(
                "wrote {} artifacts to {}",
                artifacts.files.len(),
                artifacts.out_dir.display()
            );
            Ok(())
        }
        Command::Sweep { common, horizons } => {
            let (cfg, out) = load_config(&common)?;
            print_warnings(&cfg);
            let (rows, artifacts) = bench::cmd_sweep(&cfg, &horizons, &out)?;
            println!("{}", bench::SWEEP_CSV_HEADER);
            for row in rows {
                println!(
                    "{},{},{},{},{}",
                    row.horizon, row.regret, row.regret_over_b_sqrt_t, row.weight_samples, row.wall_time
                );
            }
            println!("artifacts in {}", artifacts.out_dir.display());
            Ok(())
        }
        Command::Compare { common } => {
            let (cfg, out) = load_config(&common)?;
            print_warnings(&cfg);
            let (rows, artifacts) = bench::cmd_compare(&cfg, &out)?;
            println!("{}", bench::COMPARE_CSV_HEADER);
            for row in rows {
                println!(
                    "{},{},{},{}",
                    row.train_size, row.algorithm, row.test_mse, row.test_mse_sd
                );
            }
            println!("artifacts in {}", artifacts.out_dir.display());
            Ok(())
        }
        Command::Estimate {
            checkpoint,
            point,
            eps0,
            delta,
            clamp,
            seed,
        } => {
            let report = bench::cmd_estimate(&checkpoint, &point, eps0, delta, clamp, seed)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
