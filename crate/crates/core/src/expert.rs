//! Scripted system policies: a rule cascade and a noise-corrupted
//! variant of it.
//!
//! The rule policy reads only the tracked state (database counts are
//! tracked too), so it is a pure function of `(state, ontology,
//! actions)`. Cascade, first hit wins, domains scanned in ontology
//! order:
//!
//! 1. a pending request with an entity available → `inform` it
//! 2. an active database domain with several matches and an
//!    unconstrained informable slot → `request` that slot
//! 3. an unfinished requested booking (matches permitting) →
//!    `book` when the booking info is complete, else `offerbooking`
//! 4. an active database domain with zero matches → `nooffer`
//! 5. otherwise `reqmore`, or `bye` once the user said bye
//!
//! The weak expert follows the cascade but replaces its pick with a
//! uniformly random action at a configured error rate; its success rate
//! is calibrated by sweeping candidate rates against a target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::actions::{ActionSpace, ActionTemplate};
use crate::acts::Intent;
use crate::ontology::Ontology;
use crate::sim::env::DialogEnv;
use crate::sim::goal::GoalError;
use crate::state::DialogState;

/// Which scripted expert to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExpertKind {
    Rule,
    Weak { error_rate: f64 },
}

impl ExpertKind {
    pub fn act(
        &self,
        state: &DialogState,
        ontology: &Ontology,
        actions: &ActionSpace,
        rng: &mut impl Rng,
    ) -> usize {
        match self {
            ExpertKind::Rule => rule_act(state, ontology, actions),
            ExpertKind::Weak { error_rate } => {
                weak_act(state, ontology, actions, *error_rate, rng)
            }
        }
    }
}

/// Deterministic rule policy (see module docs for the cascade).
pub fn rule_act(state: &DialogState, ontology: &Ontology, actions: &ActionSpace) -> usize {
    let index = |intent: Intent, domain: Option<&str>, slot: Option<&str>| {
        let t = ActionTemplate {
            intent,
            domain: domain.map(str::to_owned),
            slot: slot.map(str::to_owned),
        };
        actions.index_of(&t)
    };

    // 1. Answer a pending request once an entity is available.
    for d in &ontology.domains {
        let ds = state.domain(&d.name).expect("state covers ontology");
        if let Some(slot) = ds.requested.iter().next() {
            let available = ds.offered.is_some() || ds.db_count.unwrap_or(0) >= 1;
            if available {
                if let Some(i) = index(Intent::Inform, Some(&d.name), Some(slot)) {
                    return i;
                }
            }
        }
    }

    // 2. Narrow down an ambiguous database domain.
    for d in &ontology.domains {
        let ds = state.domain(&d.name).expect("state covers ontology");
        if !ds.is_active() || !d.has_database() || ds.db_count.unwrap_or(0) <= 1 {
            continue;
        }
        if let Some(spec) = d.informable.iter().find(|s| !ds.constraints.contains_key(&s.slot)) {
            if let Some(i) = index(Intent::Request, Some(&d.name), Some(&spec.slot)) {
                return i;
            }
        }
    }

    // 3. Drive a requested booking forward.
    for d in &ontology.domains {
        let ds = state.domain(&d.name).expect("state covers ontology");
        if !ds.booking_requested || ds.booked {
            continue;
        }
        if d.has_database() && ds.db_count.unwrap_or(0) == 0 {
            continue;
        }
        let complete = d.booking.iter().all(|s| ds.booking_info.contains_key(&s.slot));
        let intent = if complete { Intent::Book } else { Intent::OfferBooking };
        if let Some(i) = index(intent, Some(&d.name), None) {
            return i;
        }
    }

    // 4. Report a dead end.
    for d in &ontology.domains {
        let ds = state.domain(&d.name).expect("state covers ontology");
        if ds.is_active() && d.has_database() && ds.db_count == Some(0) {
            if let Some(i) = index(Intent::NoOffer, Some(&d.name), None) {
                return i;
            }
        }
    }

    // 5. Keep the floor open, or close after the user did.
    if state.last_user_acts.iter().any(|a| a.intent == Intent::Bye) {
        if let Some(i) = index(Intent::Bye, None, None) {
            return i;
        }
    }
    index(Intent::ReqMore, None, None).expect("general actions always enumerated")
}

/// Rule policy corrupted with probability `error_rate` into a uniformly
/// random action.
pub fn weak_act(
    state: &DialogState,
    ontology: &Ontology,
    actions: &ActionSpace,
    error_rate: f64,
    rng: &mut impl Rng,
) -> usize {
    if rng.random::<f64>() < error_rate {
        rng.random_range(0..actions.len())
    } else {
        rule_act(state, ontology, actions)
    }
}

/// Success rate of an expert over `episodes` episodes on fresh goals.
pub fn measure_success_rate(
    kind: ExpertKind,
    env: &mut DialogEnv,
    episodes: usize,
    seed: u64,
) -> Result<f64, GoalError> {
    let mut goal_rng = ChaCha12Rng::seed_from_u64(seed);
    let mut act_rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut successes = 0usize;
    for _ in 0..episodes {
        env.reset(&mut goal_rng)?;
        loop {
            let a = kind.act(env.state(), env.ontology(), env.actions(), &mut act_rng);
            let r = env.step(a).expect("in-range action on a live episode");
            if r.done {
                successes += (r.success == Some(true)) as usize;
                break;
            }
        }
    }
    Ok(successes as f64 / episodes as f64)
}

/// Outcome of a weak-expert calibration sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakCalibration {
    pub error_rate: f64,
    pub success_rate: f64,
}

/// Sweeps candidate error rates and keeps the one whose measured success
/// rate lands nearest the target (ties: lower error rate).
pub fn calibrate_weak(
    env: &mut DialogEnv,
    candidates: &[f64],
    target_sr: f64,
    episodes: usize,
    seed: u64,
) -> Result<WeakCalibration, GoalError> {
    let mut best: Option<WeakCalibration> = None;
    for &error_rate in candidates {
        let sr = measure_success_rate(ExpertKind::Weak { error_rate }, env, episodes, seed)?;
        let better = match &best {
            None => true,
            Some(b) => (sr - target_sr).abs() < (b.success_rate - target_sr).abs(),
        };
        if better {
            best = Some(WeakCalibration { error_rate, success_rate: sr });
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Default calibration sweep for the weak expert.
pub const WEAK_ERROR_CANDIDATES: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

/// Default weak-expert success-rate target.
pub const WEAK_TARGET_SR: f64 = 0.61;
