use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mha::error::Error;
use mha::harness::{
    compare_strategies, run_experiment, write_comparison_csv, ExperimentConfig, StrategySpec,
};
use mha::oracle::solve_feasible_optimum;

/// Environment variable naming the root under which output directories are
/// created.
const OUT_ROOT_ENV: &str = "MHA_OUT_ROOT";

#[derive(Parser)]
#[command(name = "mha", about = "Constrained online prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the feasible optimum for the configured process and losses.
    Oracle { config: PathBuf },
    /// Run several strategies on the shared sequence and tabulate averages.
    Compare {
        config: PathBuf,
        /// Strategies: mha, const_max, const_zero, grid:K,H, fixed:<y>:<lambda>
        #[arg(long, required = true, num_args = 1..)]
        strategies: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every *.toml config in a directory as independent jobs.
    Sweep {
        config_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output_dir(config: &ExperimentConfig, explicit: Option<PathBuf>, label: &str) -> PathBuf {
    let base = explicit
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(label));
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if base.is_relative() => Path::new(&root).join(base),
        _ => base,
    }
}

fn load(path: &Path, seed: Option<u64>, horizon: Option<usize>) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(horizon) = horizon {
        config.horizon = horizon;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            horizon,
            out,
        } => {
            let config = load(&config, seed, horizon)?;
            let dir = output_dir(&config, out, "mha-run");
            let summary = run_experiment(&config, &dir)?;
            print!("{}", summary.to_key_values(&config));
            println!("output_dir={}", dir.display());
            Ok(())
        }
        Command::Oracle { config } => {
            let config = load(&config, None, None)?;
            let law = config.process.stationary_law()?;
            let spec = config.build_loss_spec()?;
            let result = solve_feasible_optimum(&law, &spec, &config.geometry)?;
            println!("feasible={}", result.feasible);
            println!("v_star={}", result.value);
            println!("lambda_star={}", result.lambda_star);
            for (i, s) in result.per_state.iter().enumerate() {
                println!(
                    "state_{i}: weight={} decision={:?} lambda={} E[u]={} E[c]={}",
                    s.weight, s.decision, s.lambda, s.expected_u, s.expected_c
                );
            }
            Ok(())
        }
        Command::Compare {
            config,
            strategies,
            seed,
            horizon,
            out,
        } => {
            let config = load(&config, seed, horizon)?;
            let specs: Result<Vec<StrategySpec>, Error> =
                strategies.iter().map(|s| StrategySpec::parse(s)).collect();
            let rows = compare_strategies(&config, &specs?)?;
            println!("{:<24} {:>14} {:>14} {:>14}", "strategy", "avg_u", "avg_c", "avg_l");
            for row in &rows {
                println!(
                    "{:<24} {:>14.8} {:>14.8} {:>14.8}",
                    row.name, row.avg_u, row.avg_c, row.avg_l
                );
            }
            if let Some(out) = out {
                let dir = output_dir(&config, Some(out), "mha-compare");
                std::fs::create_dir_all(&dir)?;
                write_comparison_csv(&rows, &dir.join("comparison.csv"))?;
            }
            Ok(())
        }
        Command::Sweep { config_dir, out } => {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(&config_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map(|e| e == "toml").unwrap_or(false))
                .collect();
            entries.sort();
            if entries.is_empty() {
                return Err(Error::Config(format!(
                    "no .toml configs in {}",
                    config_dir.display()
                )));
            }
            use rayon::prelude::*;
            let results: Vec<Result<(), Error>> = entries
                .par_iter()
                .map(|path| {
                    let config = ExperimentConfig::from_file(path)?;
                    let stem = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "job".into());
                    let dir = match &out {
                        Some(root) => root.join(&stem),
                        None => output_dir(&config, None, &stem),
                    };
                    let summary = run_experiment(&config, &dir)?;
                    println!(
                        "{stem}: avg_u={} avg_c={} -> {}",
                        summary.avg_u,
                        summary.avg_c,
                        dir.display()
                    );
                    Ok(())
                })
                .collect();
            for r in results {
                r?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ (Error::Config(_) | Error::UnsupportedLaw(_))) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(3)
        }
    }
}
