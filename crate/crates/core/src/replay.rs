//! Prioritized experience replay with a protected demonstration region.
//!
//! The buffer keeps two partitions over one priority sum-tree: a demo
//! region loaded up front that is never overwritten, and an agent region
//! of fixed capacity with a wrapping write cursor. Sampling is
//! proportional to `priority^alpha` via stratified prefix-sum descent;
//! updates set `p = |delta| + eps_priority`, plus `eps_demo` on
//! demonstration transitions so they keep a sampling edge. Importance
//! weights are `(N * P(i))^-beta`, normalized by the batch maximum.
//!
//! Internal node sums are recomputed from their children on every leaf
//! write, so the root never drifts from the true total; `verify_root`
//! re-checks the invariant from scratch.

use std::collections::VecDeque;
use std::io::{BufRead, Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One environment step, as stored and replayed.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<u8>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<u8>,
    pub terminal: bool,
    pub is_demo: bool,
}

/// Replay knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    /// Agent-region capacity; demos are stored in addition to this.
    pub capacity: usize,
    /// Additive priority floor for every transition.
    pub eps_priority: f64,
    /// Extra additive bonus for demonstration transitions.
    pub eps_demo: f64,
    /// Priority exponent.
    pub alpha: f64,
    /// Importance-weight exponent (fixed for the whole run).
    pub beta: f64,
    /// Stratified (equal-mass strata) sampling; plain uniform-mass
    /// draws when false.
    pub stratified: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            capacity: 100_000,
            eps_priority: 0.001,
            eps_demo: 0.01,
            alpha: 0.6,
            beta: 0.4,
            stratified: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay config: {0}")]
    BadConfig(String),
    #[error("demonstration push after the agent phase began")]
    DemoAfterAgentPhase,
    #[error("state vector length {got} does not match the buffer's {expected}")]
    VecLenMismatch { expected: usize, got: usize },
    #[error("cannot sample from an empty buffer")]
    Empty,
    #[error("index {index} out of range ({len} transitions)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{indices} indices vs {errors} td-errors")]
    UpdateShapeMismatch { indices: usize, errors: usize },
    #[error("sum-tree root {root} drifted from the leaf total {total}")]
    RootDrift { root: f64, total: f64 },
    #[error("demo file io: {0}")]
    Io(#[from] std::io::Error),
    #[error("demo file: bad magic")]
    BadMagic,
    #[error("demo file: unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("demo file: truncated record {record}")]
    Truncated { record: usize },
    #[error("demo file: record {record} has action {action} outside the declared {action_count}")]
    ActionOutOfRange { record: usize, action: usize, action_count: usize },
    #[error("demo file: record {record} holds a non-binary state byte")]
    NonBinaryState { record: usize },
}

/// Array-backed binary sum-tree with power-of-two leaf count.
struct SumTree {
    /// Number of leaf slots (power of two).
    cap: usize,
    /// 1-indexed heap layout; leaves live at `cap..2*cap`.
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(min_leaves: usize) -> Self {
        let cap = min_leaves.max(1).next_power_of_two();
        SumTree { cap, nodes: vec![0.0; 2 * cap] }
    }

    /// Rebuilds into a larger tree, preserving the first `used` leaves.
    fn grow(&mut self, min_leaves: usize, used: usize) {
        if min_leaves <= self.cap {
            return;
        }
        let mut next = SumTree::new(min_leaves);
        for i in 0..used {
            next.nodes[next.cap + i] = self.nodes[self.cap + i];
        }
        for k in (1..next.cap).rev() {
            next.nodes[k] = next.nodes[2 * k] + next.nodes[2 * k + 1];
        }
        *self = next;
    }

    fn set(&mut self, leaf: usize, value: f64) {
        let mut k = self.cap + leaf;
        self.nodes[k] = value;
        k /= 2;
        // Recompute each ancestor from its children: no incremental
        // deltas, hence no floating-point drift to accumulate.
        while k >= 1 {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
            if k == 1 {
                break;
            }
            k /= 2;
        }
    }

    fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.cap + leaf]
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf whose cumulative-priority interval contains `mass`.
    fn find(&self, mut mass: f64) -> usize {
        let mut k = 1;
        while k < self.cap {
            let left = self.nodes[2 * k];
            if mass < left {
                k = 2 * k;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        k - self.cap
    }

    fn leaf_total(&self, used: usize) -> f64 {
        (0..used).map(|i| self.nodes[self.cap + i]).sum()
    }
}

/// A sampled minibatch; `indices` feed back into `update_priorities`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub transitions: Vec<Transition>,
    pub weights: Vec<f64>,
}

/// Prioritized replay buffer with a protected demo partition.
pub struct SumTreeBuffer {
    cfg: ReplayConfig,
    slots: Vec<Transition>,
    tree: SumTree,
    demo_count: usize,
    agent_len: usize,
    cursor: usize,
    agent_phase: bool,
    /// Running maximum raw (pre-exponent) priority; new pushes adopt it.
    max_raw: f64,
    vec_len: Option<usize>,
}

impl SumTreeBuffer {
    pub fn new(cfg: ReplayConfig) -> Result<Self, ReplayError> {
        if cfg.capacity == 0 {
            return Err(ReplayError::BadConfig("capacity must be at least 1".into()));
        }
        for (name, v) in [("eps_priority", cfg.eps_priority), ("eps_demo", cfg.eps_demo)] {
            if !(v >= 0.0) {
                return Err(ReplayError::BadConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("alpha", cfg.alpha), ("beta", cfg.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ReplayError::BadConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(SumTreeBuffer {
            cfg,
            slots: Vec::new(),
            tree: SumTree::new(64),
            demo_count: 0,
            agent_len: 0,
            cursor: 0,
            agent_phase: false,
            max_raw: 1.0,
            vec_len: None,
        })
    }

    pub fn len(&self) -> usize {
        self.demo_count + self.agent_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn demo_len(&self) -> usize {
        self.demo_count
    }

    pub fn agent_len(&self) -> usize {
        self.agent_len
    }

    pub fn capacity(&self) -> usize {
        self.cfg.capacity
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.cfg
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.slots.get(index)
    }

    /// Raw priority ceiling that the next push will adopt.
    pub fn max_priority(&self) -> f64 {
        self.max_raw
    }

    /// Appends a transition. Demos go to the protected region and must
    /// all be loaded before the first agent push; agent transitions
    /// overwrite the oldest agent slot once the region is full.
    pub fn push(&mut self, t: Transition) -> Result<(), ReplayError> {
        match self.vec_len {
            None => self.vec_len = Some(t.state.len()),
            Some(l) if l != t.state.len() || l != t.next_state.len() => {
                return Err(ReplayError::VecLenMismatch {
                    expected: l,
                    got: if t.state.len() != l { t.state.len() } else { t.next_state.len() },
                });
            }
            Some(_) => {}
        }
        let leaf_value = self.max_raw.powf(self.cfg.alpha);
        if t.is_demo {
            if self.agent_phase {
                return Err(ReplayError::DemoAfterAgentPhase);
            }
            let index = self.demo_count;
            self.tree.grow((index + 1).next_power_of_two(), self.len());
            self.slots.push(t);
            self.demo_count += 1;
            self.tree.set(index, leaf_value);
            return Ok(());
        }
        if !self.agent_phase {
            // The demo region is now frozen; size the tree once for the
            // whole run.
            self.agent_phase = true;
            self.tree.grow(self.demo_count + self.cfg.capacity, self.len());
        }
        let index = self.demo_count + self.cursor;
        if self.cursor < self.agent_len {
            self.slots[index] = t;
        } else {
            self.slots.push(t);
            self.agent_len += 1;
        }
        self.cursor = (self.cursor + 1) % self.cfg.capacity;
        self.tree.set(index, leaf_value);
        Ok(())
    }

    /// Draws `batch_size` indices proportionally to stored priorities.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Batch, ReplayError> {
        if self.is_empty() || batch_size == 0 {
            return Err(ReplayError::Empty);
        }
        let total = self.tree.total();
        let n = self.len() as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut transitions = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for k in 0..batch_size {
            let mass = if self.cfg.stratified {
                (k as f64 + rng.random::<f64>()) * total / batch_size as f64
            } else {
                rng.random::<f64>() * total
            };
            let mut index = self.tree.find(mass).min(self.len() - 1);
            // Floating-point boundary guard: never land on an empty leaf.
            while index > 0 && self.tree.get(index) <= 0.0 {
                index -= 1;
            }
            let prob = self.tree.get(index) / total;
            weights.push((n * prob).powf(-self.cfg.beta));
            transitions.push(self.slots[index].clone());
            indices.push(index);
        }
        let max_w = weights.iter().cloned().fold(f64::MIN, f64::max);
        for w in &mut weights {
            *w /= max_w;
        }
        Ok(Batch { indices, transitions, weights })
    }

    /// Writes back fresh TD errors for previously sampled indices.
    pub fn update_priorities(
        &mut self,
        indices: &[usize],
        td_errors: &[f64],
    ) -> Result<(), ReplayError> {
        if indices.len() != td_errors.len() {
            return Err(ReplayError::UpdateShapeMismatch {
                indices: indices.len(),
                errors: td_errors.len(),
            });
        }
        for (&index, &delta) in indices.iter().zip(td_errors) {
            if index >= self.len() {
                return Err(ReplayError::IndexOutOfRange { index, len: self.len() });
            }
            let mut raw = delta.abs() + self.cfg.eps_priority;
            if self.slots[index].is_demo {
                raw += self.cfg.eps_demo;
            }
            self.max_raw = self.max_raw.max(raw);
            self.tree.set(index, raw.powf(self.cfg.alpha));
        }
        Ok(())
    }

    /// Re-checks that the root equals the exact leaf total.
    pub fn verify_root(&self) -> Result<(), ReplayError> {
        let total = self.tree.leaf_total(self.len());
        let root = self.tree.total();
        let scale = total.abs().max(1.0);
        if (root - total).abs() > 1e-9 * scale {
            return Err(ReplayError::RootDrift { root, total });
        }
        Ok(())
    }

    /// Sampling probability of one index under the current priorities.
    pub fn probability(&self, index: usize) -> f64 {
        self.tree.get(index) / self.tree.total()
    }
}

const DEMO_MAGIC: &[u8; 8] = b"DQFDDEMO";
const DEMO_VERSION: u32 = 1;

/// Shape header of a demonstration file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DemoHeader {
    pub vec_len: usize,
    pub action_count: usize,
}

/// Writes transitions in the fixed-width little-endian demo format:
/// an 8-byte magic, `u32` version, `u32` vector length, `u32` action
/// count, then per record `u32` action, `u8` terminal, `f64` reward,
/// and the two raw state vectors.
pub fn write_demo_file(
    mut out: impl Write,
    header: DemoHeader,
    transitions: &[Transition],
) -> Result<(), ReplayError> {
    out.write_all(DEMO_MAGIC)?;
    out.write_all(&DEMO_VERSION.to_le_bytes())?;
    out.write_all(&(header.vec_len as u32).to_le_bytes())?;
    out.write_all(&(header.action_count as u32).to_le_bytes())?;
    for (record, t) in transitions.iter().enumerate() {
        if t.action >= header.action_count {
            return Err(ReplayError::ActionOutOfRange {
                record,
                action: t.action,
                action_count: header.action_count,
            });
        }
        if t.state.len() != header.vec_len || t.next_state.len() != header.vec_len {
            return Err(ReplayError::VecLenMismatch {
                expected: header.vec_len,
                got: if t.state.len() != header.vec_len {
                    t.state.len()
                } else {
                    t.next_state.len()
                },
            });
        }
        out.write_all(&(t.action as u32).to_le_bytes())?;
        out.write_all(&[t.terminal as u8])?;
        out.write_all(&t.reward.to_le_bytes())?;
        out.write_all(&t.state)?;
        out.write_all(&t.next_state)?;
    }
    Ok(())
}

/// Reads a demo file back; every transition comes out with `is_demo`
/// set. The header is returned so the caller can check it against the
/// live featurizer and action space.
pub fn read_demo_file(
    mut input: impl BufRead,
) -> Result<(DemoHeader, Vec<Transition>), ReplayError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != DEMO_MAGIC {
        return Err(ReplayError::BadMagic);
    }
    let version = read_u32(&mut input).ok_or(ReplayError::Truncated { record: 0 })?;
    if version != DEMO_VERSION {
        return Err(ReplayError::UnsupportedVersion(version));
    }
    let vec_len = read_u32(&mut input).ok_or(ReplayError::Truncated { record: 0 })? as usize;
    let action_count = read_u32(&mut input).ok_or(ReplayError::Truncated { record: 0 })? as usize;

    let mut transitions = Vec::new();
    let record_width = 4 + 1 + 8 + 2 * vec_len;
    let mut buf = vec![0u8; record_width];
    loop {
        let record = transitions.len();
        // Probe one byte to distinguish EOF from a truncated record.
        match input.read(&mut buf[..1])? {
            0 => break,
            _ => {}
        }
        input
            .read_exact(&mut buf[1..])
            .map_err(|_| ReplayError::Truncated { record })?;
        let action = u32::from_le_bytes(buf[0..4].try_into().expect("fixed slice")) as usize;
        if action >= action_count {
            return Err(ReplayError::ActionOutOfRange { record, action, action_count });
        }
        let terminal = buf[4] != 0;
        let reward = f64::from_le_bytes(buf[5..13].try_into().expect("fixed slice"));
        let state = buf[13..13 + vec_len].to_vec();
        let next_state = buf[13 + vec_len..].to_vec();
        if state.iter().chain(&next_state).any(|b| *b > 1) {
            return Err(ReplayError::NonBinaryState { record });
        }
        transitions.push(Transition { state, action, reward, next_state, terminal, is_demo: true });
    }
    Ok((DemoHeader { vec_len, action_count }, transitions))
}

fn read_u32(input: &mut impl Read) -> Option<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}

/// Splits finished episodes into replay transitions (caller supplies
/// featurized states); small convenience used by trainers and tests.
pub fn episode_to_transitions(
    states: &[Vec<u8>],
    actions: &[usize],
    rewards: &[f64],
    is_demo: bool,
) -> VecDeque<Transition> {
    assert_eq!(states.len(), actions.len() + 1, "one state per decision plus the final state");
    assert_eq!(actions.len(), rewards.len());
    let mut out = VecDeque::with_capacity(actions.len());
    for i in 0..actions.len() {
        out.push_back(Transition {
            state: states[i].clone(),
            action: actions[i],
            reward: rewards[i],
            next_state: states[i + 1].clone(),
            terminal: i + 1 == actions.len(),
            is_demo,
        });
    }
    out
}
