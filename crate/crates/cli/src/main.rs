use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aif_games::io::{builtin_experiment, builtin_experiment_names, run_experiment, ExperimentConfig};
use aif_games::validate::OracleSuite;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

/// Active-inference agents in iterated normal-form games.
#[derive(Parser)]
#[command(name = "aif-games", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config file or a builtin name
    /// (`paper-fig2`, `paper-fig3`).
    Run {
        config: String,
        /// Trials per condition, overriding the config.
        #[arg(long)]
        trials: Option<usize>,
        /// Master seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Run the built-in oracle checks.
    Validate,
}

fn load(config: &str) -> Result<ExperimentConfig> {
    if let Some(builtin) = builtin_experiment(config) {
        return Ok(builtin);
    }
    let path = Path::new(config);
    if !path.exists() {
        bail!(
            "`{config}` is neither a config file nor a builtin experiment ({})",
            builtin_experiment_names().join(", ")
        );
    }
    ExperimentConfig::from_path(path).with_context(|| format!("reading {}", path.display()))
}

fn run(config: &str, trials: Option<usize>, seed: Option<u64>, out: Option<PathBuf>, threads: usize) -> Result<bool> {
    let mut cfg = load(config)?;
    if let Some(n) = trials {
        cfg.trials_per_condition = n;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    cfg.validate()?;
    let reports = run_experiment(&cfg, threads.max(1))?;
    let mut clean = true;
    for r in &reports {
        let h = &r.summary.histogram;
        let mean = r.summary.mean_final().map_or("n/a".to_owned(), |m| format!("{m:.4}"));
        println!(
            "{:<10} trials={} PDE={} RDE={} asymmetric={} mixed={} failed={} mean_final_G={}",
            r.summary.condition, r.summary.n_trials, h.payoff_dominant, h.risk_dominant, h.asymmetric, h.mixed, h.failed, mean
        );
        for t in r.summary.trials.iter().filter(|t| t.error.is_some()) {
            eprintln!("  trial {} failed: {}", t.trial, t.error.as_deref().unwrap_or_default());
        }
        clean &= h.failed == 0;
    }
    println!("outputs written to {}", cfg.output_dir.display());
    Ok(clean)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, trials, seed, out, threads } => run(&config, trials, seed, out, threads),
        Command::Validate => {
            let checks = OracleSuite::default().run_all();
            checks.iter().for_each(|c| println!("{c}"));
            Ok(checks.iter().all(|c| c.passed))
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
