//! `ssdim`: safety stock dimensioning pipeline.
//!
//! Exit codes: 0 success, 1 invalid configuration or input, 2 stage failure,
//! 3 infeasible optimization.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ssdim_core::pipeline::{parse_item_filter, Options, Pipeline, PipelineError};
use ssdim_core::report::summary_text;

#[derive(Parser)]
#[command(name = "ssdim", version, about = "KDE-based safety stock dimensioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normality and variance-homogeneity tables.
    Check(Common),
    /// Fit KDE and normal demand models; write PMFs.
    Fit(Common),
    /// Simulate every item × service level × model cell.
    Simulate(Common),
    /// Choose service levels per item from the simulation grid.
    Optimize(Common),
    /// Write plot data from the simulation grid.
    Report(Common),
    /// All stages in order.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, default_value = "config.toml")]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated item ids to keep.
    #[arg(long)]
    items: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = err
                .downcast_ref::<PipelineError>()
                .map_or(2, PipelineError::exit_code);
            eprintln!("error: {err:#}");
            ExitCode::from(code as u8)
        }
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    let (common, stage) = match command {
        Command::Check(c) => (c, "check"),
        Command::Fit(c) => (c, "fit"),
        Command::Simulate(c) => (c, "simulate"),
        Command::Optimize(c) => (c, "optimize"),
        Command::Report(c) => (c, "report"),
        Command::Run(c) => (c, "run"),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("cannot start worker threads")?;
    pool.install(|| run_stage(&common, stage))
}

fn run_stage(common: &Common, stage: &str) -> anyhow::Result<()> {
    let opts = Options {
        config: common.config.clone(),
        out_dir: common.out.clone(),
        seed: common.seed,
        items: common.items.as_deref().map(parse_item_filter),
    };
    let pipeline = Pipeline::open(&opts)?;
    for w in &pipeline.dataset.warnings {
        eprintln!("warning: {w}");
    }
    match stage {
        "check" => {
            let out = pipeline.check()?;
            let rejected = out
                .normality
                .iter()
                .filter(|r| r.shapiro.as_ref().is_ok_and(|t| t.reject_h0))
                .count();
            println!(
                "{} items tested; Shapiro-Wilk rejects normality for {rejected}",
                out.normality.len()
            );
        }
        "fit" => {
            let items = pipeline.fit()?;
            println!("fitted {} items", items.len());
        }
        "simulate" => {
            let grid = pipeline.simulate()?;
            println!("simulated {} cells", grid.len());
        }
        "optimize" => {
            let out = pipeline.optimize()?;
            print!("{}", summary_text(&out.summary));
        }
        "report" => {
            pipeline.report()?;
            println!("wrote service curves");
        }
        "run" => {
            let out = pipeline.run()?;
            print!("{}", summary_text(&out.summary));
        }
        _ => unreachable!("stage names come from the subcommand"),
    }
    pipeline.write_manifest()?;
    println!("outputs in {}", pipeline.out_dir.display());
    Ok(())
}
