//! `train`: run the agent for one or more seeds and leave a
//! self-describing run directory behind.
//!
//! Every seed directory carries the merged config snapshot, verbatim
//! copies of the ontology and entity database, the episode log, trend
//! curves, periodic checkpoints and a final greedy evaluation report —
//! enough to reproduce the evaluation from the directory alone.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use dqfd_dialog::agent::{train, write_episode_rows, DemoSource, Mode, RunArtifacts};
use dqfd_dialog::eval::{run_episodes, trend_series, write_trends, GreedyPolicy, MetricsReport};
use dqfd_dialog::qnet::{save_checkpoint, CheckpointMeta};
use dqfd_dialog::replay::read_demo_file;
use dqfd_dialog::world::World;

use crate::commands::eval::{EvalRecord, EVAL_SEED_OFFSET};
use crate::config::{assemble, validate_for_train, ConfigArgs, ModeArg, RunConfig};
use crate::error::{runtime, usage, CliError};
use crate::worldio::{build_world, LoadedWorld, WorldSources};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Root RNG seed; repeat the flag for a multi-seed run.
    #[arg(long = "seed", required = true, value_name = "SEED")]
    pub seeds: Vec<u64>,
    /// Run directory to create (must not exist).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Training objective.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Demonstration transitions file (required for dqfd).
    #[arg(long, value_name = "FILE")]
    pub demos: Option<PathBuf>,
    /// Ontology TOML (defaults to the built-in desk ontology).
    #[arg(long, value_name = "FILE")]
    pub ontology: Option<PathBuf>,
    /// Entity database JSONL (defaults to one generated from --db-seed).
    #[arg(long, value_name = "FILE")]
    pub db: Option<PathBuf>,
    /// Seed for the generated entity database.
    #[arg(long)]
    pub db_seed: Option<u64>,
    /// Episodes in the final greedy evaluation report.
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    /// Moving-average window (episodes) for trend curves.
    #[arg(long)]
    pub trend_window: Option<usize>,
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = assemble(&args.config)?;
    apply_flags(&mut cfg, args);
    validate_for_train(&cfg)?;

    let loaded = build_world(&WorldSources {
        ontology: cfg.ontology.as_ref().map(PathBuf::from),
        db: cfg.db.as_ref().map(PathBuf::from),
        db_seed: cfg.db_seed,
    })?;
    println!("{}", loaded.describe);

    let source = load_demo_source(&cfg, &loaded.world)?;

    let out = PathBuf::from(cfg.out.as_ref().expect("validated"));
    fs::create_dir_all(&out).map_err(runtime)?;
    let multi = cfg.seeds.len() > 1;
    if multi {
        write_snapshot(&out.join("config.toml"), &cfg)?;
    }

    let mut reports: Vec<(u64, MetricsReport)> = Vec::new();
    for &seed in &cfg.seeds {
        let dir = if multi { out.join(format!("seed-{seed}")) } else { out.clone() };
        if multi {
            fs::create_dir(&dir).map_err(runtime)?;
        }
        println!("training seed {seed} -> {}", dir.display());
        let report = run_one_seed(&loaded, &cfg, &source, seed, &dir)?;
        println!(
            "seed {seed}: success rate {:.1}% over {} evaluation episodes",
            report.success_rate, report.episodes
        );
        reports.push((seed, report));
    }

    if multi {
        write_aggregate(&out, &reports)?;
        let merged = merged_report(&reports);
        println!(
            "aggregate over {} seeds: success rate {:.1}% ({} episodes)",
            reports.len(),
            merged.success_rate,
            merged.episodes
        );
    }
    println!("final report written");
    Ok(())
}

fn apply_flags(cfg: &mut RunConfig, args: &TrainArgs) {
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds.clone();
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.display().to_string());
    }
    if let Some(mode) = args.mode {
        cfg.agent.mode = mode.into();
    }
    if let Some(demos) = &args.demos {
        cfg.demos = Some(demos.display().to_string());
    }
    if let Some(ontology) = &args.ontology {
        cfg.ontology = Some(ontology.display().to_string());
    }
    if let Some(db) = &args.db {
        cfg.db = Some(db.display().to_string());
    }
    if let Some(db_seed) = args.db_seed {
        cfg.db_seed = db_seed;
    }
    if let Some(n) = args.eval_episodes {
        cfg.eval_episodes = n;
    }
    if let Some(w) = args.trend_window {
        cfg.trend_window = w;
    }
}

/// Reads and validates the demonstration file for dqfd; plain dqn runs
/// demo-free by construction.
fn load_demo_source(cfg: &RunConfig, world: &World) -> Result<DemoSource, CliError> {
    match cfg.agent.mode {
        Mode::Dqn => Ok(DemoSource::None),
        Mode::Dqfd => {
            let path = cfg.demos.as_ref().expect("validated");
            let file = File::open(path).map_err(runtime)?;
            let (header, transitions) =
                read_demo_file(BufReader::new(file)).map_err(runtime)?;
            if header.vec_len != world.feature_len()
                || header.action_count != world.action_count()
            {
                return Err(usage(format!(
                    "demo file `{path}` was collected in a different world: \
                     {}-dim states over {} actions, expected {} over {}",
                    header.vec_len,
                    header.action_count,
                    world.feature_len(),
                    world.action_count()
                )));
            }
            println!("loaded {} demonstration transitions from {path}", transitions.len());
            Ok(DemoSource::Transitions(transitions))
        }
    }
}

/// Trains one seed and persists the full run directory; returns the
/// final greedy evaluation report.
fn run_one_seed(
    loaded: &LoadedWorld,
    cfg: &RunConfig,
    source: &DemoSource,
    seed: u64,
    dir: &Path,
) -> Result<MetricsReport, CliError> {
    let started = Instant::now();
    let artifacts = train(&loaded.world, &cfg.agent, source, seed).map_err(runtime)?;
    let elapsed = started.elapsed();

    // Snapshot with run-local paths so the directory stands alone.
    let mut snapshot = cfg.clone();
    snapshot.seeds = vec![seed];
    snapshot.ontology = Some("ontology.toml".to_string());
    snapshot.db = Some("db.jsonl".to_string());
    snapshot.out = Some(dir.display().to_string());
    write_snapshot(&dir.join("config.toml"), &snapshot)?;

    fs::write(dir.join("ontology.toml"), &loaded.ontology_text).map_err(runtime)?;
    let db_file = File::create(dir.join("db.jsonl")).map_err(runtime)?;
    loaded.world.db.write_jsonl(BufWriter::new(db_file)).map_err(runtime)?;

    let metrics = File::create(dir.join("metrics.tsv")).map_err(runtime)?;
    write_episode_rows(BufWriter::new(metrics), &artifacts.rows).map_err(runtime)?;

    let trends = File::create(dir.join("trends.tsv")).map_err(runtime)?;
    let points = trend_series(&artifacts.rows, cfg.trend_window);
    write_trends(BufWriter::new(trends), &points).map_err(runtime)?;

    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir(&ckpt_dir).map_err(runtime)?;
    for snap in &artifacts.checkpoints {
        save_net(&ckpt_dir.join(format!("ckpt-{}.ckpt", snap.frame)), &snap.net, snap.frame, cfg)?;
    }
    let total_frames = artifacts.pretrain_frames + artifacts.online_frames;
    save_net(&ckpt_dir.join("ckpt-final.ckpt"), &artifacts.final_net, total_frames, cfg)?;

    let eval_seed = EVAL_SEED_OFFSET + seed;
    let mut policy = GreedyPolicy { net: artifacts.final_net.clone() };
    let (report, _) = run_episodes(&mut policy, &loaded.world, cfg.eval_episodes, eval_seed)
        .map_err(runtime)?;

    write_reports(dir, cfg, seed, eval_seed, &artifacts, &report, elapsed, &loaded.describe)?;
    Ok(report)
}

fn save_net(
    path: &Path,
    net: &dqfd_dialog::qnet::QNet,
    frames: u64,
    cfg: &RunConfig,
) -> Result<(), CliError> {
    let meta = CheckpointMeta {
        frames,
        gamma: cfg.agent.gamma,
        lr: cfg.agent.optimizer.lr,
        tau: cfg.agent.tau,
    };
    let file = File::create(path).map_err(runtime)?;
    save_checkpoint(BufWriter::new(file), net, &meta).map_err(runtime)
}

fn write_snapshot(path: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let text = toml::to_string(cfg).map_err(runtime)?;
    fs::write(path, text).map_err(runtime)
}

#[allow(clippy::too_many_arguments)]
fn write_reports(
    dir: &Path,
    cfg: &RunConfig,
    seed: u64,
    eval_seed: u64,
    artifacts: &RunArtifacts,
    report: &MetricsReport,
    elapsed: std::time::Duration,
    world_desc: &str,
) -> Result<(), CliError> {
    let mut text = String::new();
    text.push_str(&format!("run seed {seed} ({:?} mode)\n", cfg.agent.mode));
    text.push_str(&format!("{world_desc}\n"));
    text.push_str(&format!(
        "frames: {} pretrain + {} online; {} demonstration transitions; wall time {:.0?}\n",
        artifacts.pretrain_frames,
        artifacts.online_frames,
        artifacts.demo_count,
        elapsed
    ));
    text.push_str(&format!(
        "final greedy evaluation: {} episodes, seed {eval_seed}\n\n",
        cfg.eval_episodes
    ));
    text.push_str(&format!("{report}\n"));
    fs::write(dir.join("report.txt"), text).map_err(runtime)?;

    let record = EvalRecord {
        checkpoint: "checkpoints/ckpt-final.ckpt".to_string(),
        episodes: cfg.eval_episodes,
        seed: eval_seed,
        metrics: report.clone(),
    };
    let toml_text = toml::to_string(&record).map_err(runtime)?;
    fs::write(dir.join("report.toml"), toml_text).map_err(runtime)?;
    Ok(())
}

fn write_aggregate(out: &Path, reports: &[(u64, MetricsReport)]) -> Result<(), CliError> {
    let merged = merged_report(reports);
    let mut text = String::new();
    text.push_str("per-seed final greedy success rates:\n");
    for (seed, report) in reports {
        text.push_str(&format!(
            "  seed {seed}: {:.1}% over {} episodes\n",
            report.success_rate, report.episodes
        ));
    }
    text.push_str(&format!("\npooled over {} seeds:\n{merged}\n", reports.len()));
    fs::write(out.join("aggregate.txt"), &text).map_err(runtime)?;

    #[derive(serde::Serialize)]
    struct Aggregate<'a> {
        seeds: Vec<u64>,
        metrics: &'a MetricsReport,
    }
    let record =
        Aggregate { seeds: reports.iter().map(|(s, _)| *s).collect(), metrics: &merged };
    let toml_text = toml::to_string(&record).map_err(runtime)?;
    fs::write(out.join("aggregate.toml"), toml_text).map_err(runtime)?;
    Ok(())
}

fn merged_report(reports: &[(u64, MetricsReport)]) -> MetricsReport {
    let mut iter = reports.iter().map(|(_, r)| r);
    let first = iter.next().expect("at least one seed").clone();
    iter.fold(first, |acc, r| acc.merged(r))
}

/// The tests drive the compiled binary; unit coverage here is limited
/// to pieces with no process-level surface.
#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_report_pools_episode_counts() {
        let a = MetricsReport {
            episodes: 10,
            avg_turns: 5.0,
            avg_return: 1.0,
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            success_rate: 100.0,
            book_rate: 50.0,
        };
        let b = MetricsReport { episodes: 30, success_rate: 60.0, ..a.clone() };
        let merged = merged_report(&[(1, a), (2, b)]);
        assert_eq!(merged.episodes, 40);
        assert!((merged.success_rate - 70.0).abs() < 1e-9);
    }
}
