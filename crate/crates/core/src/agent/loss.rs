//! Training objective: importance-weighted squared TD error with
//! double-DQN targets, plus (in demonstration mode) a large-margin
//! imitation term on demo-flagged samples, plus L2 regularization.
//!
//! Targets are treated as constants when differentiating — the usual
//! semi-gradient — so gradients never flow through the target network
//! or the double-DQN action selection.

use super::{greedy_action, AgentConfig, Mode};
use crate::qnet::{Grads, QNet, QNetError};
use crate::replay::{Batch, Transition};

/// Additive decomposition of one batch objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    /// `(1/B)·Σ w_i·δ_i²`.
    pub td: f64,
    /// `margin_weight·(1/B)·Σ_{demo} margin_i` (0 outside demo mode).
    pub margin: f64,
    /// `l2·‖θ‖²`.
    pub l2: f64,
}

/// Double-DQN regression targets: terminal transitions get `r`; the
/// rest get `r + γ·Q_target(s', a*)` with `a*` chosen greedily by the
/// online network.
pub fn compute_targets(
    transitions: &[Transition],
    online: &QNet,
    target: &QNet,
    gamma: f64,
) -> Vec<f64> {
    transitions
        .iter()
        .map(|t| {
            if t.terminal {
                t.reward
            } else {
                let a_star = greedy_action(&online.forward(&t.next_state));
                t.reward + gamma * target.forward(&t.next_state)[a_star]
            }
        })
        .collect()
}

/// Large-margin imitation loss for one state: how far the expert action
/// `a_e` falls short of outscoring every other action by `tau`.
/// Always ≥ 0; exactly 0 iff `q[a_e] ≥ q[a] + tau` for all `a ≠ a_e`.
pub fn margin_loss(q: &[f64], a_e: usize, tau: f64) -> f64 {
    let best = q
        .iter()
        .enumerate()
        .map(|(a, v)| if a == a_e { *v } else { v + tau })
        .fold(f64::NEG_INFINITY, f64::max);
    best - q[a_e]
}

/// Index of the strongest margin violator: argmax over `a ≠ a_e` of
/// `q[a] + tau`, lowest index winning ties.
fn margin_argmax(q: &[f64], a_e: usize, tau: f64) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for (a, v) in q.iter().enumerate() {
        if a != a_e && v + tau > best_v {
            best = a;
            best_v = v + tau;
        }
    }
    best
}

/// Batch objective and its gradient against fixed regression targets.
/// Returns the loss decomposition, the parameter gradient, and the
/// per-sample TD errors `δ_i` (the replay-priority signal — the margin
/// term deliberately does not feed priorities).
pub fn loss_and_grads_with_targets(
    batch: &Batch,
    targets: &[f64],
    online: &QNet,
    cfg: &AgentConfig,
) -> Result<(LossParts, Grads, Vec<f64>), QNetError> {
    let b = batch.transitions.len();
    if b == 0 || batch.weights.len() != b || targets.len() != b {
        return Err(QNetError::BatchShape(format!(
            "{b} transitions vs {} weights, {} targets",
            batch.weights.len(),
            targets.len()
        )));
    }
    let k = online.actions;
    let inv_b = 1.0 / b as f64;
    let mut dq = vec![0.0; b * k];
    let mut deltas = Vec::with_capacity(b);
    let mut td_sum = 0.0;
    let mut margin_sum = 0.0;

    for (i, t) in batch.transitions.iter().enumerate() {
        if !targets[i].is_finite() {
            return Err(QNetError::NonFiniteTarget { index: i });
        }
        let q = online.try_forward(&t.state)?;
        let delta = targets[i] - q[t.action];
        deltas.push(delta);
        td_sum += batch.weights[i] * delta * delta;
        dq[i * k + t.action] -= 2.0 * batch.weights[i] * delta * inv_b;

        if cfg.mode == Mode::Dqfd && t.is_demo && k > 1 {
            let m = margin_loss(&q, t.action, cfg.tau);
            margin_sum += m;
            if m > 0.0 {
                let violator = margin_argmax(&q, t.action, cfg.tau);
                dq[i * k + violator] += cfg.margin_weight * inv_b;
                dq[i * k + t.action] -= cfg.margin_weight * inv_b;
            }
        }
    }

    let states: Vec<&[u8]> = batch.transitions.iter().map(|t| t.state.as_slice()).collect();
    let grads = online.backward_from_dq(&states, &dq, cfg.l2)?;
    let parts = LossParts {
        td: td_sum * inv_b,
        margin: cfg.margin_weight * margin_sum * inv_b,
        l2: cfg.l2 * online.sq_param_norm(),
        total: td_sum * inv_b
            + cfg.margin_weight * margin_sum * inv_b
            + cfg.l2 * online.sq_param_norm(),
    };
    Ok((parts, grads, deltas))
}

/// Full objective against freshly computed double-DQN targets.
pub fn loss_and_grads(
    batch: &Batch,
    online: &QNet,
    target: &QNet,
    cfg: &AgentConfig,
) -> Result<(LossParts, Grads, Vec<f64>), QNetError> {
    let targets = compute_targets(&batch.transitions, online, target, cfg.gamma);
    loss_and_grads_with_targets(batch, &targets, online, cfg)
}

/// Scalar batch loss and per-sample TD errors, for callers that do not
/// need the gradient. Panics on malformed batches.
pub fn total_loss(batch: &Batch, online: &QNet, target: &QNet, cfg: &AgentConfig) -> (f64, Vec<f64>) {
    let (parts, _, deltas) = loss_and_grads(batch, online, target, cfg).expect("well-formed batch");
    (parts.total, deltas)
}
