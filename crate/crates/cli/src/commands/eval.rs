//! `eval`: greedy evaluation of a saved checkpoint.
//!
//! The world is resolved from explicit flags, files found next to the
//! checkpoint (so run directories evaluate from their own contents), or
//! the built-in desk world, in that order. Identical checkpoint, world
//! and seed reproduce the report byte for byte.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args;
use dqfd_dialog::eval::{run_episodes, GreedyPolicy, MetricsReport};
use dqfd_dialog::qnet::load_checkpoint;
use serde::{Deserialize, Serialize};

use crate::error::{runtime, usage, CliError};
use crate::worldio::{world_for_checkpoint, WorldSources};

/// Final reports use `EVAL_SEED_OFFSET + root seed` so evaluation
/// episodes never reuse training goals.
pub const EVAL_SEED_OFFSET: u64 = 10_000;

/// Machine-readable evaluation report; everything needed to reproduce
/// it (checkpoint, episode count, seed) rides along with the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub checkpoint: String,
    pub episodes: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Root RNG seed for the evaluation episodes.
    #[arg(long)]
    pub seed: u64,
    /// Number of greedy episodes.
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Also write the report as TOML to this file (must not exist).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Ontology TOML (default: discovered next to the checkpoint, else built-in).
    #[arg(long, value_name = "FILE")]
    pub ontology: Option<PathBuf>,
    /// Entity database JSONL (default: discovered next to the checkpoint).
    #[arg(long, value_name = "FILE")]
    pub db: Option<PathBuf>,
    /// Seed for the generated entity database fallback.
    #[arg(long, default_value_t = 5)]
    pub db_seed: u64,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    if args.episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    if !args.checkpoint.is_file() {
        return Err(usage(format!(
            "checkpoint `{}` does not exist",
            args.checkpoint.display()
        )));
    }
    if let Some(out) = &args.out {
        if out.exists() {
            return Err(usage(format!(
                "report file `{}` already exists; reports are never overwritten",
                out.display()
            )));
        }
    }

    let file = File::open(&args.checkpoint).map_err(runtime)?;
    let (net, meta) = load_checkpoint(BufReader::new(file)).map_err(runtime)?;

    let loaded = world_for_checkpoint(
        &args.checkpoint,
        &WorldSources {
            ontology: args.ontology.clone(),
            db: args.db.clone(),
            db_seed: args.db_seed,
        },
    )?;
    if net.input != loaded.world.feature_len() || net.actions != loaded.world.action_count() {
        return Err(usage(format!(
            "checkpoint expects {}-dim states over {} actions but the world provides {} over {}",
            net.input,
            net.actions,
            loaded.world.feature_len(),
            loaded.world.action_count()
        )));
    }

    let mut policy = GreedyPolicy { net };
    let (report, _) =
        run_episodes(&mut policy, &loaded.world, args.episodes, args.seed).map_err(runtime)?;

    println!("checkpoint {} (trained {} frames)", args.checkpoint.display(), meta.frames);
    println!("{}", loaded.describe);
    println!("greedy evaluation: {} episodes, seed {}", args.episodes, args.seed);
    println!();
    println!("{report}");

    if let Some(out) = &args.out {
        let record = EvalRecord {
            checkpoint: args.checkpoint.display().to_string(),
            episodes: args.episodes,
            seed: args.seed,
            metrics: report,
        };
        let text = toml::to_string(&record).map_err(runtime)?;
        std::fs::write(out, text).map_err(runtime)?;
        println!("report written to {}", out.display());
    }
    Ok(())
}
