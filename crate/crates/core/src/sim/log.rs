//! Episode logs: the append-only trace an episode leaves behind.
//!
//! A log is the effective user goal (including mid-dialog relaxations),
//! the alternating system/user act records with per-step rewards, and
//! the terminal outcome. Logs serialize one episode per line of JSON, so
//! files stream and concatenate trivially.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acts::DialogAct;
use crate::sim::goal::UserGoal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Actor {
    User,
    System,
}

/// One half-turn: everything one side said, plus the reward granted for
/// the exchange (carried on the system record, 0 on user records).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: u32,
    pub actor: Actor,
    pub acts: Vec<DialogAct>,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    /// Sum of step rewards over the episode.
    pub ret: f64,
    /// Number of completed user–system exchanges.
    pub turns: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// Effective goal: the sampled goal with any relaxations applied.
    pub goal: UserGoal,
    pub records: Vec<TurnRecord>,
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("episode log line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EpisodeLog {
    pub fn new(goal: UserGoal) -> Self {
        EpisodeLog { goal, records: Vec::new(), outcome: None }
    }

    pub fn push(&mut self, turn: u32, actor: Actor, acts: Vec<DialogAct>, reward: f64) {
        self.records.push(TurnRecord { turn, actor, acts, reward });
    }

    /// Sum of recorded rewards.
    pub fn return_sum(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// Serializes the episode as a single JSON line.
    pub fn write_line(&self, mut out: impl Write) -> Result<(), LogError> {
        let line = serde_json::to_string(self)
            .map_err(|e| LogError::Parse { line: 0, msg: e.to_string() })?;
        writeln!(out, "{line}")?;
        Ok(())
    }

    /// Reads every episode from a one-episode-per-line stream.
    pub fn read_all(input: impl BufRead) -> Result<Vec<EpisodeLog>, LogError> {
        let mut logs = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let log = serde_json::from_str(&line)
                .map_err(|e| LogError::Parse { line: idx + 1, msg: e.to_string() })?;
            logs.push(log);
        }
        Ok(logs)
    }
}
