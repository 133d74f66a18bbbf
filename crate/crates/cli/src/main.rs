//! `morphorank`: ingest lexical resources, build candidate pools, train and
//! evaluate the five ranking families, and write reports.

mod config;
mod error;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use morphorank_core::models::Family;
use morphorank_core::training::TRAIN_ORDER;

use crate::config::RunConfig;
use crate::error::{exit_code, UserError};
use crate::pipeline::Run;

#[derive(Parser)]
#[command(name = "morphorank", version, about = "Rank morphological coinages for emerging concepts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Base seed; repeat runs use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for data-parallel stages.
    #[arg(long)]
    jobs: Option<usize>,
    /// Directory for candidate pools, shared across runs.
    #[arg(long)]
    pool_cache: Option<PathBuf>,
    /// Number of seeds to train, evaluate or run temporally.
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load inventory, frequencies, pronunciations and the dataset.
    Ingest(Common),
    /// Build gated candidate pools for every dataset item.
    Pools(Common),
    /// Train one family or all of them.
    Train {
        #[command(flatten)]
        common: Common,
        /// `all` or one of cost, semantic, discriminative, s1-linear, s1-nonlinear.
        #[arg(long, default_value = "all")]
        family: String,
    },
    /// Score every checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Also write every candidate score.
        #[arg(long)]
        dump_scores: bool,
    },
    /// Train on items before each window end and test on later ones.
    Temporal(Common),
    /// Collect evaluation and temporal results into tables.
    Report(Common),
}

fn parse_family(name: &str) -> Result<Option<Family>> {
    if name == "all" {
        return Ok(None);
    }
    name.parse::<Family>().map(Some).map_err(|_| {
        let valid: Vec<String> = TRAIN_ORDER.iter().map(|f| f.to_string()).collect();
        UserError(format!("unknown family `{name}`; expected all, {}", valid.join(", "))).into()
    })
}

fn open(c: &Common) -> Result<Run> {
    if let Some(jobs) = c.jobs {
        set_jobs(jobs)?;
    }
    let mut cfg = RunConfig::load(&c.config, &c.set)?;
    if let Some(r) = c.repeats {
        cfg.repeats = r.max(1);
    }
    Run::open(cfg, c.seed, c.pool_cache.clone())
}

#[cfg(feature = "parallel")]
fn set_jobs(jobs: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_jobs(_jobs: usize) -> Result<()> {
    log::warn!("built without the `parallel` feature; --jobs is ignored");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let (name, run, message) = match &cli.command {
        Command::Ingest(c) => {
            let run = open(c)?;
            let m = run.ingest()?;
            ("ingest", run, m)
        }
        Command::Pools(c) => {
            let run = open(c)?;
            let m = run.pools()?;
            ("pools", run, m)
        }
        Command::Train { common, family } => {
            let family = parse_family(family)?;
            let run = open(common)?;
            let m = run.train(family)?;
            ("train", run, m)
        }
        Command::Eval { common, dump_scores } => {
            let run = open(common)?;
            let m = run.eval(*dump_scores)?;
            ("eval", run, m)
        }
        Command::Temporal(c) => {
            let run = open(c)?;
            let m = run.temporal()?;
            ("temporal", run, m)
        }
        Command::Report(c) => {
            let run = open(c)?;
            let m = run.report()?;
            ("report", run, m)
        }
    };
    println!("{message}");
    let dir = run.finish(name)?;
    println!("run directory: {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("morphorank: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
