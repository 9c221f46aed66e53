//! The interleaved act/train loop.
//!
//! A run is two phases. In the pre-training phase (demonstration mode
//! only) the expert drives the environment — or a recorded transition
//! set is loaded — into the protected replay partition, followed by
//! demo-only gradient steps. In the on-policy phase the agent acts
//! ε-greedily; every `train_every` frames the target network syncs and
//! `batches_per_round` prioritized batches are stepped. One seeded
//! root generator feeds every random draw (network init, goals, ε,
//! replay sampling), so a run is a pure function of `(world, config,
//! demos, seed)`.

use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use super::loss::loss_and_grads;
use super::{epsilon_at, select_action, AgentConfig, Mode};
use crate::expert::ExpertKind;
use crate::featurize::Featurizer;
use crate::qnet::{lr_scale_at, sync_target, QNet, QNetError, RAdam};
use crate::replay::{episode_to_transitions, ReplayError, SumTreeBuffer, Transition};
use crate::sim::env::{DialogEnv, EnvError};
use crate::sim::goal::GoalError;
use crate::sim::log::Outcome;
use crate::world::World;

/// Where demonstrations come from.
#[derive(Debug, Clone)]
pub enum DemoSource {
    /// No demonstrations (DQN, or degenerate demo-free runs).
    None,
    /// Roll fresh expert episodes in the environment during
    /// pre-training; their outcomes appear in the episode log.
    LiveExpert(ExpertKind),
    /// Pre-recorded transitions (e.g. read from a demonstration file).
    Transitions(Vec<Transition>),
}

/// Which phase of the run an episode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Online,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Online => "online",
        })
    }
}

/// One line of the per-episode training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    /// Cumulative frames (pre-training included) when the episode ended.
    pub frame: u64,
    pub episode: u64,
    pub phase: Phase,
    pub ret: f64,
    pub turns: u32,
    pub success: bool,
    /// ε in effect on the episode's last step (0 while the expert acts).
    pub epsilon: f64,
    /// Mean batch loss of the most recent training round (NaN before
    /// any round has run).
    pub loss: f64,
}

/// Parameter snapshot on the checkpoint schedule.
#[derive(Debug, Clone)]
pub struct Snapshot {
    /// Cumulative frames when the snapshot was taken.
    pub frame: u64,
    pub net: QNet,
}

/// Everything a finished run leaves behind.
pub struct RunArtifacts {
    pub rows: Vec<EpisodeRow>,
    pub checkpoints: Vec<Snapshot>,
    pub final_net: QNet,
    pub pretrain_frames: u64,
    pub online_frames: u64,
    pub demo_count: usize,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("agent config: {0}")]
    Config(String),
    #[error("demonstration mode needs a demo source")]
    MissingDemos,
    #[error("demo source produced no transitions")]
    EmptyDemoSet,
    #[error("goal sampling: {0}")]
    Goal(#[from] GoalError),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("replay: {0}")]
    Replay(#[from] ReplayError),
    #[error("network: {0}")]
    Net(#[from] QNetError),
    #[error("non-finite loss at frame {frame} (td {td}, margin {margin}); run aborted")]
    NonFiniteLoss { frame: u64, td: f64, margin: f64 },
}

/// Rolls one expert episode and packages it as demo transitions plus
/// the episode outcome. Shared by pre-training and demo collection.
pub fn collect_expert_episode(
    env: &mut DialogEnv,
    featurizer: &Featurizer,
    kind: ExpertKind,
    rng: &mut impl Rng,
) -> Result<(Vec<Transition>, Outcome), TrainError> {
    env.reset(rng)?;
    let mut states = vec![featurizer.featurize(env.state())];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    loop {
        let a = kind.act(env.state(), env.ontology(), env.actions(), rng);
        let step = env.step(a)?;
        actions.push(a);
        rewards.push(step.reward);
        states.push(featurizer.featurize(env.state()));
        if step.done {
            break;
        }
    }
    let transitions = Vec::from(episode_to_transitions(&states, &actions, &rewards, true));
    let outcome = env.episode_log().outcome.expect("episode closed");
    Ok((transitions, outcome))
}

pub struct Trainer {
    world: World,
    cfg: AgentConfig,
    rng: ChaCha12Rng,
    env: DialogEnv,
    online: QNet,
    target: QNet,
    opt: RAdam,
    buffer: SumTreeBuffer,
    rows: Vec<EpisodeRow>,
    checkpoints: Vec<Snapshot>,
    episode: u64,
    frames: u64,
    online_frames: u64,
    pretrain_frames: u64,
    last_round_loss: f64,
}

impl Trainer {
    pub fn new(world: &World, cfg: AgentConfig, seed: u64) -> Result<Self, TrainError> {
        cfg.validate().map_err(TrainError::Config)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let online = QNet::init(world.feature_len(), cfg.hidden, world.action_count(), &mut rng);
        let target = sync_target(&online);
        let opt = RAdam::new(cfg.optimizer.clone(), online.param_count());
        let buffer = SumTreeBuffer::new(cfg.replay.clone())?;
        let env = world.make_env();
        Ok(Trainer {
            world: world.clone(),
            cfg,
            rng,
            env,
            online,
            target,
            opt,
            buffer,
            rows: Vec::new(),
            checkpoints: Vec::new(),
            episode: 0,
            frames: 0,
            online_frames: 0,
            pretrain_frames: 0,
            last_round_loss: f64::NAN,
        })
    }

    /// Demonstration phase: fill the protected partition, then run the
    /// configured demo-only gradient steps. A no-op in plain DQN mode.
    pub fn pretrain(&mut self, demos: &DemoSource) -> Result<(), TrainError> {
        if self.cfg.mode == Mode::Dqn {
            return Ok(());
        }
        let wants_demos =
            self.cfg.pretrain_demo_episodes > 0 || self.cfg.pretrain_gradient_steps > 0;
        match demos {
            DemoSource::None => {
                if wants_demos {
                    return Err(TrainError::MissingDemos);
                }
            }
            DemoSource::Transitions(ts) => {
                for t in ts {
                    self.buffer.push(Transition { is_demo: true, ..t.clone() })?;
                }
            }
            DemoSource::LiveExpert(kind) => {
                for _ in 0..self.cfg.pretrain_demo_episodes {
                    let (transitions, outcome) = collect_expert_episode(
                        &mut self.env,
                        &self.world.featurizer,
                        *kind,
                        &mut self.rng,
                    )?;
                    for t in transitions {
                        self.buffer.push(t)?;
                    }
                    self.frames += u64::from(outcome.turns);
                    self.pretrain_frames += u64::from(outcome.turns);
                    self.episode += 1;
                    self.rows.push(EpisodeRow {
                        frame: self.frames,
                        episode: self.episode,
                        phase: Phase::Pretrain,
                        ret: outcome.ret,
                        turns: outcome.turns,
                        success: outcome.success,
                        epsilon: 0.0,
                        loss: self.last_round_loss,
                    });
                    if self.cfg.pretrain_updates_while_acting {
                        self.target = sync_target(&self.online);
                        self.last_round_loss = self.gradient_step()?;
                    }
                }
            }
        }
        if self.cfg.pretrain_gradient_steps > 0 && self.buffer.is_empty() {
            return Err(TrainError::EmptyDemoSet);
        }
        for step in 0..self.cfg.pretrain_gradient_steps {
            if step % self.cfg.batches_per_round.max(1) == 0 {
                self.target = sync_target(&self.online);
            }
            let loss = self.gradient_step()?;
            self.last_round_loss = loss;
        }
        Ok(())
    }

    /// ε-greedy acting interleaved with training rounds, for exactly
    /// `total_frames` on-policy frames; an episode cut off by the
    /// budget is dropped from the log.
    pub fn run_online(&mut self) -> Result<(), TrainError> {
        'acting: while self.online_frames < self.cfg.total_frames {
            self.env.reset(&mut self.rng)?;
            let mut state = self.world.featurizer.featurize(self.env.state());
            loop {
                let eps = epsilon_at(self.online_frames, &self.cfg);
                let q = self.online.forward(&state);
                let action = select_action(&q, eps, &mut self.rng);
                let step = self.env.step(action)?;
                self.online_frames += 1;
                self.frames += 1;
                let next_state = self.world.featurizer.featurize(self.env.state());
                self.buffer.push(Transition {
                    state: std::mem::take(&mut state),
                    action,
                    reward: step.reward,
                    next_state: next_state.clone(),
                    terminal: step.done,
                    is_demo: false,
                })?;
                state = next_state;

                if self.online_frames % self.cfg.train_every == 0 {
                    self.training_round()?;
                }
                if self.online_frames % self.cfg.checkpoint_every == 0 {
                    self.checkpoints
                        .push(Snapshot { frame: self.frames, net: self.online.clone() });
                }
                if step.done {
                    self.episode += 1;
                    let outcome = self.env.episode_log().outcome.expect("episode closed");
                    self.rows.push(EpisodeRow {
                        frame: self.frames,
                        episode: self.episode,
                        phase: Phase::Online,
                        ret: outcome.ret,
                        turns: outcome.turns,
                        success: outcome.success,
                        epsilon: eps,
                        loss: self.last_round_loss,
                    });
                    break;
                }
                if self.online_frames >= self.cfg.total_frames {
                    break 'acting;
                }
            }
        }
        Ok(())
    }

    fn training_round(&mut self) -> Result<(), TrainError> {
        self.target = sync_target(&self.online);
        self.opt.set_lr_scale(lr_scale_at(self.online_frames, self.cfg.lr_halve_every));
        let mut sum = 0.0;
        for _ in 0..self.cfg.batches_per_round {
            sum += self.gradient_step()?;
        }
        self.buffer.verify_root()?;
        self.last_round_loss = sum / f64::from(self.cfg.batches_per_round.max(1));
        Ok(())
    }

    fn gradient_step(&mut self) -> Result<f64, TrainError> {
        let batch = self.buffer.sample(self.cfg.batch_size, &mut self.rng)?;
        let (parts, grads, deltas) = loss_and_grads(&batch, &self.online, &self.target, &self.cfg)?;
        if !parts.total.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                frame: self.frames,
                td: parts.td,
                margin: parts.margin,
            });
        }
        self.opt.step(&mut self.online, &grads)?;
        self.buffer.update_priorities(&batch.indices, &deltas)?;
        Ok(parts.total)
    }

    pub fn online_net(&self) -> &QNet {
        &self.online
    }

    pub fn buffer(&self) -> &SumTreeBuffer {
        &self.buffer
    }

    pub fn rows(&self) -> &[EpisodeRow] {
        &self.rows
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn finish(mut self) -> RunArtifacts {
        if self.checkpoints.last().map_or(true, |s| s.frame != self.frames) {
            self.checkpoints.push(Snapshot { frame: self.frames, net: self.online.clone() });
        }
        RunArtifacts {
            rows: self.rows,
            checkpoints: self.checkpoints,
            final_net: self.online,
            pretrain_frames: self.pretrain_frames,
            online_frames: self.online_frames,
            demo_count: self.buffer.demo_len(),
        }
    }
}

/// Full run: pre-train (demonstration mode), then act/train on policy.
pub fn train(
    world: &World,
    cfg: &AgentConfig,
    demos: &DemoSource,
    seed: u64,
) -> Result<RunArtifacts, TrainError> {
    let mut trainer = Trainer::new(world, cfg.clone(), seed)?;
    trainer.pretrain(demos)?;
    trainer.run_online()?;
    Ok(trainer.finish())
}

/// Tab-separated episode log with a header line.
pub fn write_episode_rows(mut out: impl Write, rows: &[EpisodeRow]) -> std::io::Result<()> {
    writeln!(out, "frame\tepisode\tphase\treturn\tturns\tsuccess\tepsilon\tloss")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.frame, r.episode, r.phase, r.ret, r.turns, r.success, r.epsilon, r.loss
        )?;
    }
    Ok(())
}

/// Reads a log produced by [`write_episode_rows`].
pub fn read_episode_rows(input: impl BufRead) -> Result<Vec<EpisodeRow>, String> {
    let mut rows = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if lineno == 0 {
            continue; // header
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 8 {
            return Err(format!("line {}: expected 8 fields, got {}", lineno + 1, fields.len()));
        }
        let parse = |i: usize| -> Result<f64, String> {
            fields[i].parse().map_err(|e| format!("line {}: {e}", lineno + 1))
        };
        rows.push(EpisodeRow {
            frame: fields[0].parse().map_err(|e| format!("line {}: {e}", lineno + 1))?,
            episode: fields[1].parse().map_err(|e| format!("line {}: {e}", lineno + 1))?,
            phase: match fields[2] {
                "pretrain" => Phase::Pretrain,
                "online" => Phase::Online,
                other => return Err(format!("line {}: unknown phase `{other}`", lineno + 1)),
            },
            ret: parse(3)?,
            turns: fields[4].parse().map_err(|e| format!("line {}: {e}", lineno + 1))?,
            success: fields[5].parse().map_err(|e| format!("line {}: {e}", lineno + 1))?,
            epsilon: parse(6)?,
            loss: parse(7)?,
        });
    }
    Ok(rows)
}
