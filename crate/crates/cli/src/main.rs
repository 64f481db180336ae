//! `sparse-gof`: moments, predictions, simulations, comparisons and exact
//! oracle checks for grouped goodness-of-fit efficiency experiments.
//!
//! Exit codes: 0 success, 2 validation error, 3 runtime error.
//! Environment overrides (flags win): `SPARSE_GOF_SEED`, `SPARSE_GOF_BUDGET`,
//! `SPARSE_GOF_WORKERS`, `SPARSE_GOF_OUT`.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sparse_gof_cli::commands;
use sparse_gof_cli::config::{self, ExperimentConfig};
use sparse_gof_cli::CliError;

#[derive(Parser)]
#[command(name = "sparse-gof", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOverrides {
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Budget override (statistic evaluations per estimate).
    #[arg(long)]
    budget: Option<u64>,
    /// Worker cap override for concurrent points.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Poisson moment summaries for a kernel over a λ list.
    Moments {
        /// Kernel name: chi2, lr, empty-cells.
        #[arg(long)]
        kernel: String,
        /// Comma-separated λ values.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        /// Cell count entering L_{3,N}.
        #[arg(long, default_value_t = 100)]
        cells: u64,
    },
    /// Theoretical slope and efficiency predictions for a config grid.
    Predict {
        #[arg(long)]
        config: PathBuf,
        /// Output JSON path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Monte Carlo slope / power experiments producing CSV rows.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for rows.csv and the config echo.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue a previous run, skipping finished point indexes.
        #[arg(long)]
        resume: bool,
        /// Record per-row runtimes (breaks byte-determinism).
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Join simulated rows with predictions into summary tables.
    Compare {
        /// rows.csv from `simulate`.
        #[arg(long)]
        simulated: PathBuf,
        /// JSON report from `predict`.
        #[arg(long)]
        predicted: PathBuf,
        /// Directory for plot-ready comparison CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact enumeration of a small-instance tail, optionally checking the
    /// Monte Carlo estimators against it.
    Oracle {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        cells: u64,
        #[arg(long, default_value = "chi2")]
        kernel: String,
        #[arg(long)]
        threshold: f64,
        /// Also run the naive and splitting estimators.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
}

fn env_u64(name: &str) -> Option<u64> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

fn apply_overrides(config: &mut ExperimentConfig, overrides: &CommonOverrides) {
    if let Some(seed) = overrides.seed.or_else(|| env_u64("SPARSE_GOF_SEED")) {
        config.seed = seed;
    }
    if let Some(budget) = overrides.budget.or_else(|| env_u64("SPARSE_GOF_BUDGET")) {
        config.budget = budget;
    }
    if let Some(workers) = overrides
        .workers
        .or_else(|| env_u64("SPARSE_GOF_WORKERS").map(|w| w as usize))
    {
        config.workers = workers;
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var("SPARSE_GOF_OUT").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load(config_path: &PathBuf, overrides: &CommonOverrides) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(config_path).map_err(|e| {
        CliError::Validation(format!("cannot read {}: {e}", config_path.display()))
    })?;
    let mut config = config::parse_config(&text)?;
    apply_overrides(&mut config, overrides);
    Ok(config)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Moments {
            kernel,
            lambda,
            cells,
        } => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            commands::run_moments(&kernel, &lambda, cells, &mut lock)
        }
        Command::Predict {
            config,
            out,
            overrides,
        } => {
            let experiment = config::resolve(load(&config, &overrides)?)?;
            let report = commands::run_predict(&experiment)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Runtime(format!("serializing report: {e}")))?;
            match out {
                Some(path) => fs::write(&path, json)
                    .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display()))),
                None => {
                    println!("{json}");
                    Ok(())
                }
            }
        }
        Command::Simulate {
            config,
            out,
            resume,
            timings,
            overrides,
        } => {
            let experiment = config::resolve(load(&config, &overrides)?)?;
            if experiment.config.workers > 0 {
                // a dedicated pool would also work; the global one is enough
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(experiment.config.workers)
                    .build_global();
            }
            let path = commands::run_simulate(&experiment, &out_dir(out), resume, timings)?;
            eprintln!("rows written to {}", path.display());
            Ok(())
        }
        Command::Compare {
            simulated,
            predicted,
            out,
        } => {
            let rows = commands::read_rows(&simulated)?;
            let text = fs::read_to_string(&predicted).map_err(|e| {
                CliError::Validation(format!("cannot read {}: {e}", predicted.display()))
            })?;
            let report = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("bad prediction JSON: {e}")))?;
            let summary = commands::run_compare(&rows, &report, out.as_deref())?;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            for trend in &summary.trends {
                writeln!(
                    lock,
                    "trend,{},points={},first_ratio={:?},final_ratio={:?},gap_decreasing={:?}",
                    trend.test, trend.points, trend.first_ratio, trend.final_ratio,
                    trend.gap_decreasing
                )
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            for eff in &summary.efficiencies {
                writeln!(
                    lock,
                    "efficiency,point={},empirical={},theoretical={}",
                    eff.point_index, eff.empirical_ratio, eff.theoretical_ratio
                )
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            Ok(())
        }
        Command::Oracle {
            n,
            cells,
            kernel,
            threshold,
            check,
            overrides,
        } => {
            let budget = overrides
                .budget
                .or_else(|| env_u64("SPARSE_GOF_BUDGET"))
                .unwrap_or(100_000);
            let seed = overrides
                .seed
                .or_else(|| env_u64("SPARSE_GOF_SEED"))
                .unwrap_or(0);
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            commands::run_oracle(n, cells, &kernel, threshold, check, budget, seed, &mut lock)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
