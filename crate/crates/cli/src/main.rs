use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mer_core::experiment::{run_eval, run_report, run_synth, run_train, ExperimentConfig, Method, RunOptions};

/// Metric-ensemble learning to rank for person re-identification.
#[derive(Parser)]
#[command(name = "mer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset described by the config.
    Synth(Common),
    /// Fit metric banks and learn ensembles for every split.
    Train(Common),
    /// Evaluate trained ensembles on the test individuals.
    Eval(Common),
    /// Tabulate every evaluated method side by side.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split seed (for `synth`, the dataset seed).
    #[arg(long)]
    seed: Option<u64>,
    /// cmc_top, cmc_triplet or uniform.
    #[arg(long)]
    objective: Option<Method>,
    /// Number of random splits.
    #[arg(long)]
    splits: Option<usize>,
    /// Splits processed concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Cache for metric banks and distance tensors; defaults to <out>/cache.
    #[arg(long, env = "MER_CACHE_DIR", hide_env_values = true)]
    cache_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self, synth: bool) -> Result<(ExperimentConfig, PathBuf, RunOptions)> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            match (&mut config.data.synth, synth) {
                (Some(s), true) => s.seed = seed,
                _ => config.seed = seed,
            }
        }
        if let Some(m) = self.objective {
            config.objective = m;
        }
        if let Some(n) = self.splits {
            config.num_splits = n;
        }
        config.validate()?;
        let Some(out) = self.out.clone().or_else(|| config.output.clone()) else {
            bail!("no run directory: pass --out or set `output` in the config");
        };
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let opts = RunOptions { jobs: self.jobs, cache_dir: self.cache_dir.clone() };
        Ok((config, out, opts))
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth(c) => {
            let (config, out, _) = c.load(true)?;
            let path = run_synth(&config, &out)?;
            println!("{}", path.display());
            Ok(true)
        }
        Command::Train(c) => {
            let (config, out, opts) = c.load(false)?;
            let outcome = run_train(&config, &out, &opts)?;
            for f in &outcome.failures {
                eprintln!("error: {f}");
            }
            let ok = outcome.models.len() - outcome.failures.len();
            println!("{}: {ok}/{} splits trained", outcome.method.name(), outcome.models.len());
            Ok(outcome.failures.is_empty())
        }
        Command::Eval(c) => {
            let (config, out, opts) = c.load(false)?;
            let outcome = run_eval(&config, &out, &opts)?;
            for f in &outcome.failures {
                eprintln!("error: {f}");
            }
            print!("{}", outcome.report.rank_table());
            Ok(outcome.failures.is_empty())
        }
        Command::Report(c) => {
            let (config, out, _) = c.load(false)?;
            print!("{}", run_report(&config, &out)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
