use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mthfl::experiment::{cluster_only, run_experiment, truncation_study, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mthfl", version, about = "Data-similarity clustering for multi-task hierarchical FL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster users, train every repetition, write the report.
    Run(Common),
    /// Relevance and partitions for several eigenvector counts.
    Truncate {
        #[command(flatten)]
        common: Common,
        /// Comma separated eigenvector counts; defaults to `truncation.p_values`.
        #[arg(long, value_delimiter = ',')]
        p: Vec<usize>,
    },
    /// Emit the similarity matrix and assignment without training.
    ClusterOnly(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let config = load(&common)?;
            let report = run_experiment(&config)?;
            println!("assignment: {:?}", report.clustering.assignment.as_slice());
            for (c, s) in report.cluster_summary.iter().enumerate() {
                println!("cluster {c}: mean accuracy {:.4}, variance {:.3e}", s.mean, s.variance);
            }
            if let Some(tasks) = &report.task_summary {
                for (t, s) in tasks.iter().enumerate() {
                    println!("task {t}: mean accuracy {:.4}, variance {:.3e}", s.mean, s.variance);
                }
            }
            println!("wrote {}", config.out.display());
        }
        Command::Truncate { common, p } => {
            let config = load(&common)?;
            let p = if p.is_empty() { config.truncation.p_values.clone() } else { p };
            anyhow::ensure!(!p.is_empty(), "no eigenvector counts given (--p or truncation.p_values)");
            let report = truncation_study(&config, &p)?;
            for row in &report.rows {
                println!(
                    "p={:<4} exchange {}x{}  matches full-d partition: {}",
                    row.keep, row.exchanged.0, row.exchanged.1, row.matches_full
                );
            }
            match report.smallest_matching {
                Some(p) => println!(
                    "smallest matching p = {p} ({p}x{d} instead of {d}x{d})",
                    d = report.dim
                ),
                None => println!("no requested p reproduces the full-d partition"),
            }
        }
        Command::ClusterOnly(common) => {
            let config = load(&common)?;
            let report = cluster_only(&config)?;
            println!("assignment: {:?}", report.assignment.as_slice());
            println!("wrote {}", config.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
