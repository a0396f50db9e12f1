//! `gemi`: train, evaluate and sweep graph recommenders from JSON configs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gemi::experiment::{
    parse_sweep_values, real_users_from_files, run_checks, run_experiment, run_sweep, synth_users_from_files,
    write_user_files, ExperimentConfig,
};
use gemi::users::{AugmentConfig, RealUserConfig};
use gemi::Result;

#[derive(Debug, Parser)]
#[command(name = "gemi", version, about = "Graph-based recommendation for multi-label annotated panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train, evaluate and write artifacts for one config.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// One run per value of a scalar config field.
    Sweep {
        config: PathBuf,
        /// Dotted config path or alias (gamma, alpha, edge_dropout, k, k_rec, tau, epochs, lr).
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `0,0.5,1,2,5`.
        #[arg(long)]
        values: String,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Build user preference matrices.
    Users {
        #[command(subcommand)]
        mode: UsersMode,
    },
    /// Gradient checks and loss identities.
    Check {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

#[derive(Debug, Subcommand)]
enum UsersMode {
    /// Monte-Carlo users over training panels.
    Synth {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 50)]
        num: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0.2)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Test share for panels without a split tag.
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Preferences from observed ratings.
    Real {
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Bootstrap this many synthetic users from the real ones.
        #[arg(long)]
        augment: Option<usize>,
        #[arg(long, default_value_t = 5.0)]
        gain: f64,
        #[arg(long, default_value_t = 5.0)]
        pseudo_count: f64,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf, output_dir: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?.with_env_seed()?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, output_dir } => {
            let cfg = load_config(&config, output_dir)?;
            let run = run_experiment(&cfg)?;
            for (i, m) in run.metrics.labels.iter().enumerate() {
                let base = run.metrics.random_baseline.as_ref().map(|b| format!("  (random {:.4})", b[i])).unwrap_or_default();
                println!("{:<10} P@{} = {:.4} ± {:.4}{base}", m.label, run.metrics.k_rec, m.mean, m.std);
            }
            println!("artifacts in {}", cfg.output_dir.display());
        }
        Command::Sweep { config, param, values, output_dir, jobs } => {
            let cfg = load_config(&config, output_dir)?;
            let rows = run_sweep(&cfg, &param, &parse_sweep_values(&values), jobs)?;
            for r in &rows {
                println!("{}={:<8} {:<10} {:.4} ± {:.4}", r.param, r.value, r.label, r.mean, r.std);
            }
            println!("wrote {}", cfg.output_dir.join("sweep.csv").display());
        }
        Command::Users { mode } => {
            let (ids, users, out) = match mode {
                UsersMode::Synth { labels, num, k, tau, seed, test_fraction, out } => {
                    let (ids, users) = synth_users_from_files(&labels, num, k, tau, test_fraction, seed)?;
                    (ids, users, out)
                }
                UsersMode::Real { interactions, labels, augment, gain, pseudo_count, top_k, seed, out } => {
                    let cfg = RealUserConfig { gain, pseudo_count, top_k };
                    let aug = augment.map(|target| AugmentConfig { target, ..AugmentConfig::default() });
                    let (ids, users) = real_users_from_files(&interactions, &labels, &cfg, aug, seed)?;
                    (ids, users, out)
                }
            };
            write_user_files(&users, &ids, &out)?;
            println!("wrote {} users to {}", users.len(), out.display());
        }
        Command::Check { seeds } => {
            let results = run_checks(seeds)?;
            for r in &results {
                println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            return Ok(results.iter().all(|r| r.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
