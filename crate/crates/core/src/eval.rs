//! Frozen-policy evaluation: seeded episode batches aggregated into a
//! metrics report, moving-average utilities, best-checkpoint selection,
//! and windowed trend series for plotting.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{greedy_action, EpisodeRow, RunArtifacts};
use crate::expert::ExpertKind;
use crate::qnet::QNet;
use crate::sim::goal::GoalError;
use crate::sim::report::{evaluate_goal, GoalReport};
use crate::state::DialogState;
use crate::world::World;

/// A frozen policy under evaluation: maps the tracked dialog state to
/// an action index. Implementations own whatever randomness they need.
pub trait ActionPolicy {
    fn act(&mut self, state: &DialogState, world: &World) -> usize;
}

/// Greedy readout of a Q-network (ε = 0).
pub struct GreedyPolicy {
    pub net: QNet,
}

impl ActionPolicy for GreedyPolicy {
    fn act(&mut self, state: &DialogState, world: &World) -> usize {
        greedy_action(&self.net.forward(&world.featurizer.featurize(state)))
    }
}

/// Uniformly random actions.
pub struct RandomPolicy {
    rng: ChaCha12Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy { rng: ChaCha12Rng::seed_from_u64(seed) }
    }
}

impl ActionPolicy for RandomPolicy {
    fn act(&mut self, _state: &DialogState, world: &World) -> usize {
        self.rng.random_range(0..world.action_count())
    }
}

/// A scripted expert run as an evaluation policy.
pub struct ExpertPolicy {
    kind: ExpertKind,
    rng: ChaCha12Rng,
}

impl ExpertPolicy {
    pub fn new(kind: ExpertKind, seed: u64) -> Self {
        ExpertPolicy { kind, rng: ChaCha12Rng::seed_from_u64(seed) }
    }
}

impl ActionPolicy for ExpertPolicy {
    fn act(&mut self, state: &DialogState, world: &World) -> usize {
        self.kind.act(state, &world.ontology, &world.actions, &mut self.rng)
    }
}

/// Episode-averaged metrics; rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    pub avg_turns: f64,
    pub avg_return: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub success_rate: f64,
    pub book_rate: f64,
}

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub ret: f64,
    pub turns: u32,
    pub report: GoalReport,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least one episode")]
    NoEpisodes,
    #[error("run holds no checkpoints")]
    EmptyRun,
    #[error("goal sampling: {0}")]
    Goal(#[from] GoalError),
}

impl MetricsReport {
    /// Plain per-episode means; ratio metrics scale to percent.
    pub fn from_outcomes(outcomes: &[EpisodeOutcome]) -> MetricsReport {
        let n = outcomes.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
        MetricsReport {
            episodes: outcomes.len(),
            avg_turns: mean(&|o| f64::from(o.turns)),
            avg_return: mean(&|o| o.ret),
            precision: 100.0 * mean(&|o| o.report.precision),
            recall: 100.0 * mean(&|o| o.report.recall),
            f1: 100.0 * mean(&|o| o.report.f1),
            success_rate: 100.0 * mean(&|o| f64::from(u8::from(o.success))),
            book_rate: 100.0 * mean(&|o| o.report.booked),
        }
    }

    /// Episode-count-weighted mean of two reports; equals the report of
    /// the concatenated episode sets.
    pub fn merged(&self, other: &MetricsReport) -> MetricsReport {
        let n = (self.episodes + other.episodes).max(1) as f64;
        let (wa, wb) = (self.episodes as f64 / n, other.episodes as f64 / n);
        let mix = |a: f64, b: f64| wa * a + wb * b;
        MetricsReport {
            episodes: self.episodes + other.episodes,
            avg_turns: mix(self.avg_turns, other.avg_turns),
            avg_return: mix(self.avg_return, other.avg_return),
            precision: mix(self.precision, other.precision),
            recall: mix(self.recall, other.recall),
            f1: mix(self.f1, other.f1),
            success_rate: mix(self.success_rate, other.success_rate),
            book_rate: mix(self.book_rate, other.book_rate),
        }
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "episodes      {:>8}", self.episodes)?;
        writeln!(f, "avg turns     {:>8.2}", self.avg_turns)?;
        writeln!(f, "avg return    {:>8.2}", self.avg_return)?;
        writeln!(f, "precision     {:>8.2}", self.precision)?;
        writeln!(f, "recall        {:>8.2}", self.recall)?;
        writeln!(f, "f1            {:>8.2}", self.f1)?;
        writeln!(f, "success rate  {:>8.2}", self.success_rate)?;
        write!(f, "book rate     {:>8.2}", self.book_rate)
    }
}

/// Runs `n` seeded episodes under the policy and scores each against
/// its (effective) goal.
pub fn run_episodes(
    policy: &mut dyn ActionPolicy,
    world: &World,
    n: usize,
    seed: u64,
) -> Result<(MetricsReport, Vec<EpisodeOutcome>), EvalError> {
    if n == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut env = world.make_env();
    let mut outcomes = Vec::with_capacity(n);
    for _ in 0..n {
        env.reset(&mut rng)?;
        loop {
            let a = policy.act(env.state(), world);
            let step = env.step(a).expect("in-range action on a live episode");
            if step.done {
                break;
            }
        }
        let log = env.episode_log();
        let outcome = log.outcome.expect("episode closed");
        let report = evaluate_goal(&log.goal, log, &world.ontology, &world.db);
        outcomes.push(EpisodeOutcome {
            success: outcome.success,
            ret: outcome.ret,
            turns: outcome.turns,
            report,
        });
    }
    Ok((MetricsReport::from_outcomes(&outcomes), outcomes))
}

/// Trailing moving average; entries before the window fills average the
/// available prefix.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, v) in series.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / window.min(i + 1) as f64);
    }
    out
}

/// Index (into `run.checkpoints`) of the checkpoint whose frame has the
/// best trailing moving-average return over the episode log; ties go to
/// the earliest checkpoint.
pub fn select_best_checkpoint(run: &RunArtifacts, window: usize) -> Result<usize, EvalError> {
    if run.checkpoints.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    let returns: Vec<f64> = run.rows.iter().map(|r| r.ret).collect();
    let ma = moving_average(&returns, window);
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, snap) in run.checkpoints.iter().enumerate() {
        // Moving average as of the last episode finished by this frame.
        let pos = run.rows.partition_point(|r| r.frame <= snap.frame);
        let v = if pos == 0 { f64::NEG_INFINITY } else { ma[pos - 1] };
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    Ok(best)
}

/// One point of the windowed training trend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub frame: u64,
    /// Windowed success rate, percent.
    pub success_rate: f64,
    /// Windowed mean dialog length, turns.
    pub avg_turns: f64,
}

/// Windowed success-rate and dialog-length series over the episode log,
/// one point per episode.
pub fn trend_series(rows: &[EpisodeRow], window: usize) -> Vec<TrendPoint> {
    let success: Vec<f64> = rows.iter().map(|r| 100.0 * f64::from(u8::from(r.success))).collect();
    let turns: Vec<f64> = rows.iter().map(|r| f64::from(r.turns)).collect();
    let sr = moving_average(&success, window);
    let tu = moving_average(&turns, window);
    rows.iter()
        .zip(sr.iter().zip(&tu))
        .map(|(r, (s, t))| TrendPoint { frame: r.frame, success_rate: *s, avg_turns: *t })
        .collect()
}

/// Tab-separated trend file with a header line; an empty series yields
/// just the header.
pub fn write_trends(mut out: impl Write, points: &[TrendPoint]) -> std::io::Result<()> {
    writeln!(out, "frame\tsuccess_rate\tavg_turns")?;
    for p in points {
        writeln!(out, "{}\t{}\t{}", p.frame, p.success_rate, p.avg_turns)?;
    }
    Ok(())
}
