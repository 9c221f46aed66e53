//! Dueling Q-network with hand-rolled forward and backward passes.
//!
//! One hidden ReLU layer feeds a scalar value head and a per-action
//! advantage head, combined as `q_a = V + A_a − mean(A)`. States are
//! binary vectors, so the input matmul walks only the hot bits. All
//! math is in `f64` so tests can pin exact numbers.
//!
//! Parameters flatten in a fixed order — `W1, b1, w_v, b_v, W_a, b_a`
//! — which the optimizer's moment vectors and the checkpoint payload
//! both follow.

mod checkpoint;
mod radam;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use radam::{lr_scale_at, RAdam, RAdamConfig};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QNetError {
    #[error("input length {got}, network expects {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("batch shape mismatch: {0}")]
    BatchShape(String),
    #[error("non-finite target at sample {index}")]
    NonFiniteTarget { index: usize },
    #[error("non-finite gradient at parameter {index}; step rejected")]
    NonFiniteGradient { index: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse: {0}")]
    Parse(String),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Dueling Q-network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QNet {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
    /// `hidden × input`, row-major by hidden unit.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Value head over the hidden layer.
    wv: Vec<f64>,
    bv: f64,
    /// `actions × hidden`, row-major by action.
    wa: Vec<f64>,
    ba: Vec<f64>,
}

/// Flat gradient, aligned with [`QNet`] parameter order.
#[derive(Debug, Clone)]
pub struct Grads(pub Vec<f64>);

impl QNet {
    /// Uniform `[−1/√fan_in, +1/√fan_in]` weights, zero biases.
    pub fn init(input: usize, hidden: usize, actions: usize, rng: &mut impl Rng) -> Self {
        let mut net = QNet::zeros(input, hidden, actions);
        let bound_in = 1.0 / (input as f64).sqrt();
        for w in &mut net.w1 {
            *w = rng.random_range(-bound_in..bound_in);
        }
        let bound_h = 1.0 / (hidden as f64).sqrt();
        for w in net.wv.iter_mut().chain(&mut net.wa) {
            *w = rng.random_range(-bound_h..bound_h);
        }
        net
    }

    pub fn zeros(input: usize, hidden: usize, actions: usize) -> Self {
        QNet {
            input,
            hidden,
            actions,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            wv: vec![0.0; hidden],
            bv: 0.0,
            wa: vec![0.0; actions * hidden],
            ba: vec![0.0; actions],
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.hidden + 1 + self.actions * self.hidden + self.actions
    }

    /// Flat views in the canonical order; index aligns with [`Grads`].
    fn flat(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.wv)
            .chain(std::iter::once(&self.bv))
            .chain(&self.wa)
            .chain(&self.ba)
    }

    fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(&mut self.b1)
            .chain(&mut self.wv)
            .chain(std::iter::once(&mut self.bv))
            .chain(&mut self.wa)
            .chain(&mut self.ba)
    }

    pub fn get_param(&self, index: usize) -> f64 {
        *self.flat().nth(index).expect("parameter index in range")
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        *self.flat_mut().nth(index).expect("parameter index in range") = value;
    }

    pub fn params_vec(&self) -> Vec<f64> {
        self.flat().copied().collect()
    }

    /// Squared L2 norm of all parameters.
    pub fn sq_param_norm(&self) -> f64 {
        self.flat().map(|w| w * w).sum()
    }

    pub fn load_params(&mut self, flat: &[f64]) -> Result<(), QNetError> {
        if flat.len() != self.param_count() {
            return Err(QNetError::ShapeMismatch(format!(
                "{} parameters supplied, network holds {}",
                flat.len(),
                self.param_count()
            )));
        }
        for (dst, src) in self.flat_mut().zip(flat) {
            *dst = *src;
        }
        Ok(())
    }

    /// Pre-activation hidden layer; walks only the hot input bits.
    fn hidden_pre(&self, x: &[u8]) -> Vec<f64> {
        let mut pre = self.b1.clone();
        for (i, bit) in x.iter().enumerate() {
            if *bit != 0 {
                for (h, p) in pre.iter_mut().enumerate() {
                    *p += self.w1[h * self.input + i];
                }
            }
        }
        pre
    }

    /// Q-values for one state.
    pub fn forward(&self, x: &[u8]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input);
        let h: Vec<f64> = self.hidden_pre(x).into_iter().map(|p| p.max(0.0)).collect();
        let v = self.bv + dot(&self.wv, &h);
        let mut adv = self.ba.clone();
        for (a, out) in adv.iter_mut().enumerate() {
            *out += dot(&self.wa[a * self.hidden..(a + 1) * self.hidden], &h);
        }
        let mean = adv.iter().sum::<f64>() / self.actions as f64;
        adv.iter().map(|a| v + a - mean).collect()
    }

    /// Checked forward for externally supplied vectors.
    pub fn try_forward(&self, x: &[u8]) -> Result<Vec<f64>, QNetError> {
        if x.len() != self.input {
            return Err(QNetError::InputLength { expected: self.input, got: x.len() });
        }
        Ok(self.forward(x))
    }

    /// Mean weighted squared TD loss plus L2, as `backward` derives it.
    pub fn batch_loss(
        &self,
        states: &[Vec<u8>],
        actions: &[usize],
        targets: &[f64],
        weights: &[f64],
        l2: f64,
    ) -> f64 {
        let b = states.len() as f64;
        let mut loss = 0.0;
        for i in 0..states.len() {
            let q = self.forward(&states[i]);
            let delta = targets[i] - q[actions[i]];
            loss += weights[i] * delta * delta;
        }
        loss / b + l2 * self.flat().map(|w| w * w).sum::<f64>()
    }

    /// Gradients of `(1/B)·Σ w_i·(y_i − Q(s_i,a_i))² + l2·‖θ‖²` and the
    /// per-sample TD errors `δ_i = y_i − Q(s_i,a_i)`.
    pub fn backward(
        &self,
        states: &[Vec<u8>],
        actions: &[usize],
        targets: &[f64],
        weights: &[f64],
        l2: f64,
    ) -> Result<(Grads, Vec<f64>), QNetError> {
        let b = states.len();
        if actions.len() != b || targets.len() != b || weights.len() != b {
            return Err(QNetError::BatchShape(format!(
                "{b} states vs {} actions, {} targets, {} weights",
                actions.len(),
                targets.len(),
                weights.len()
            )));
        }
        if let Some(index) = targets.iter().position(|t| !t.is_finite()) {
            return Err(QNetError::NonFiniteTarget { index });
        }

        let inv_b = 1.0 / b as f64;
        let mut deltas = Vec::with_capacity(b);
        let mut dq = vec![0.0; b * self.actions];
        for i in 0..b {
            let q = self.forward(&states[i]);
            let delta = targets[i] - q[actions[i]];
            deltas.push(delta);
            // d(mean loss)/dQ(s_i, a_i); backward_from_dq chains it.
            dq[i * self.actions + actions[i]] = -2.0 * weights[i] * delta * inv_b;
        }
        let refs: Vec<&[u8]> = states.iter().map(Vec::as_slice).collect();
        let grads = self.backward_from_dq(&refs, &dq, l2)?;
        Ok((grads, deltas))
    }

    /// Gradients of `Σ_i Σ_a dq[i·K+a]·Q(s_i, a) + l2·‖θ‖²` — the
    /// general chain-rule entry point. `dq` is row-major `B × actions`
    /// of loss sensitivities to each Q output; composite objectives
    /// (TD error plus imitation margins) sum their sensitivities into
    /// one `dq` and take a single backward pass.
    pub fn backward_from_dq(
        &self,
        states: &[&[u8]],
        dq: &[f64],
        l2: f64,
    ) -> Result<Grads, QNetError> {
        let b = states.len();
        if b == 0 {
            return Err(QNetError::BatchShape("empty batch".into()));
        }
        if dq.len() != b * self.actions {
            return Err(QNetError::BatchShape(format!(
                "{b} states need {} sensitivities, got {}",
                b * self.actions,
                dq.len()
            )));
        }

        let n_w1 = self.hidden * self.input;
        let o_b1 = n_w1;
        let o_wv = o_b1 + self.hidden;
        let o_bv = o_wv + self.hidden;
        let o_wa = o_bv + 1;
        let o_ba = o_wa + self.actions * self.hidden;
        let mut g = vec![0.0; self.param_count()];
        let inv_k = 1.0 / self.actions as f64;

        for (x, dq_row) in states.iter().zip(dq.chunks_exact(self.actions)) {
            debug_assert_eq!(x.len(), self.input);
            if dq_row.iter().all(|d| *d == 0.0) {
                continue;
            }
            let pre = self.hidden_pre(x);
            let h: Vec<f64> = pre.iter().map(|p| p.max(0.0)).collect();

            // Dueling combine: dQ_j/dV = 1; dQ_j/dA_a = [a == j] − 1/K.
            let dv: f64 = dq_row.iter().sum();
            // Value head.
            g[o_bv] += dv;
            for (hh, hv) in h.iter().enumerate() {
                g[o_wv + hh] += dv * hv;
            }
            // Advantage head and the hidden backprop accumulator.
            let mut dh: Vec<f64> = self.wv.iter().map(|w| dv * w).collect();
            for (j, dq_j) in dq_row.iter().enumerate() {
                let da = dq_j - dv * inv_k;
                if da == 0.0 {
                    continue;
                }
                g[o_ba + j] += da;
                let row = &self.wa[j * self.hidden..(j + 1) * self.hidden];
                for (hh, hv) in h.iter().enumerate() {
                    g[o_wa + j * self.hidden + hh] += da * hv;
                }
                for (acc, w) in dh.iter_mut().zip(row) {
                    *acc += da * w;
                }
            }
            // ReLU gate, then the sparse input layer.
            for (hh, acc) in dh.iter_mut().enumerate() {
                if pre[hh] <= 0.0 {
                    *acc = 0.0;
                } else {
                    g[o_b1 + hh] += *acc;
                }
            }
            for (xi, bit) in x.iter().enumerate() {
                if *bit != 0 {
                    for (hh, acc) in dh.iter().enumerate() {
                        if *acc != 0.0 {
                            g[hh * self.input + xi] += *acc;
                        }
                    }
                }
            }
        }

        if l2 != 0.0 {
            for (gi, w) in g.iter_mut().zip(self.flat()) {
                *gi += 2.0 * l2 * w;
            }
        }
        Ok(Grads(g))
    }
}

/// Deep copy used as the frozen double-DQN target.
pub fn sync_target(online: &QNet) -> QNet {
    online.clone()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
