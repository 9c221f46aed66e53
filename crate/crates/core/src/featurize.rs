//! Binary featurization of dialog states.
//!
//! The feature vector is a fixed layout derived from the ontology alone;
//! every bit is 0/1 and has a human-readable label. Layout, in order:
//!
//! per domain (ontology order):
//!   * one-hot per informable slot value, plus a wildcard bit per slot
//!   * one-hot per booking slot value
//!   * one `requested` bit per requestable slot
//!   * database domains: four match-count buckets (0, 1, 2–4, 5+) and
//!     an `offered` bit
//!   * bookable domains: `booking_requested` and `booked` bits
//!
//! global tail:
//!   * one bit per user intent present in the last exchange
//!   * a `terminated` bit
//!   * six turn-count buckets (0, 1–2, 3–5, 6–10, 11–20, 21+)

use std::sync::Arc;

use crate::acts::{Intent, DONT_CARE};
use crate::ontology::Ontology;
use crate::state::DialogState;

const DB_BUCKETS: usize = 4;
const TURN_BUCKETS: usize = 6;

/// Bucket index for a database match count.
fn db_bucket(count: usize) -> usize {
    match count {
        0 => 0,
        1 => 1,
        2..=4 => 2,
        _ => 3,
    }
}

/// Bucket index for a turn counter.
fn turn_bucket(turn: u32) -> usize {
    match turn {
        0 => 0,
        1..=2 => 1,
        3..=5 => 2,
        6..=10 => 3,
        11..=20 => 4,
        _ => 5,
    }
}

/// Feature vector length for an ontology.
pub fn feature_len(ontology: &Ontology) -> usize {
    let mut n = 0;
    for d in &ontology.domains {
        for s in &d.informable {
            n += s.values.len() + 1;
        }
        for s in &d.booking {
            n += s.values.len();
        }
        n += d.requestable.len();
        if d.has_database() {
            n += DB_BUCKETS + 1;
        }
        if d.bookable {
            n += 2;
        }
    }
    n + Intent::ALL.len() + 1 + TURN_BUCKETS
}

/// Writes the feature vector of `state` into `out` (resized to fit).
///
/// `state` must have been built from the same ontology.
pub fn featurize_into(state: &DialogState, ontology: &Ontology, out: &mut Vec<u8>) {
    out.clear();
    out.resize(feature_len(ontology), 0);
    let mut i = 0;
    let put = |cond: bool, i: &mut usize, out: &mut Vec<u8>| {
        out[*i] = cond as u8;
        *i += 1;
    };

    for d in &ontology.domains {
        let ds = state.domain(&d.name).expect("state built from this ontology");
        for s in &d.informable {
            let tracked = ds.constraints.get(&s.slot).map(String::as_str);
            for v in &s.values {
                put(tracked == Some(v.as_str()), &mut i, out);
            }
            put(tracked == Some(DONT_CARE), &mut i, out);
        }
        for s in &d.booking {
            let tracked = ds.booking_info.get(&s.slot).map(String::as_str);
            for v in &s.values {
                put(tracked == Some(v.as_str()), &mut i, out);
            }
        }
        for slot in &d.requestable {
            put(ds.requested.contains(slot), &mut i, out);
        }
        if d.has_database() {
            let bucket = db_bucket(ds.db_count.unwrap_or(0));
            for b in 0..DB_BUCKETS {
                put(bucket == b, &mut i, out);
            }
            put(ds.offered.is_some(), &mut i, out);
        }
        if d.bookable {
            put(ds.booking_requested, &mut i, out);
            put(ds.booked, &mut i, out);
        }
    }

    for intent in Intent::ALL {
        put(state.last_user_acts.iter().any(|a| a.intent == intent), &mut i, out);
    }
    put(state.terminated, &mut i, out);
    let bucket = turn_bucket(state.turn);
    for b in 0..TURN_BUCKETS {
        put(bucket == b, &mut i, out);
    }
    debug_assert_eq!(i, out.len());
}

/// Feature vector of `state` as a fresh buffer.
pub fn featurize(state: &DialogState, ontology: &Ontology) -> Vec<u8> {
    let mut out = Vec::new();
    featurize_into(state, ontology, &mut out);
    out
}

/// Cached featurizer: owns the ontology handle and the per-bit labels.
#[derive(Debug, Clone)]
pub struct Featurizer {
    ontology: Arc<Ontology>,
    labels: Vec<String>,
}

impl Featurizer {
    pub fn new(ontology: Arc<Ontology>) -> Self {
        let labels = build_labels(&ontology);
        debug_assert_eq!(labels.len(), feature_len(&ontology));
        Featurizer { ontology, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn ontology(&self) -> &Arc<Ontology> {
        &self.ontology
    }

    /// Human-readable name of feature bit `i`.
    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn featurize(&self, state: &DialogState) -> Vec<u8> {
        featurize(state, &self.ontology)
    }

    pub fn featurize_into(&self, state: &DialogState, out: &mut Vec<u8>) {
        featurize_into(state, &self.ontology, out);
    }
}

/// Labels mirror the write order of [`featurize_into`] exactly.
fn build_labels(ontology: &Ontology) -> Vec<String> {
    let mut labels = Vec::with_capacity(feature_len(ontology));
    for d in &ontology.domains {
        let name = &d.name;
        for s in &d.informable {
            for v in &s.values {
                labels.push(format!("{name}.{}={v}", s.slot));
            }
            labels.push(format!("{name}.{}={DONT_CARE}", s.slot));
        }
        for s in &d.booking {
            for v in &s.values {
                labels.push(format!("{name}.{}={v}", s.slot));
            }
        }
        for slot in &d.requestable {
            labels.push(format!("{name}.requested.{slot}"));
        }
        if d.has_database() {
            for bucket in ["0", "1", "2-4", "5+"] {
                labels.push(format!("{name}.db={bucket}"));
            }
            labels.push(format!("{name}.offered"));
        }
        if d.bookable {
            labels.push(format!("{name}.booking_requested"));
            labels.push(format!("{name}.booked"));
        }
    }
    for intent in Intent::ALL {
        labels.push(format!("user.{}", intent.token()));
    }
    labels.push("terminated".to_owned());
    for bucket in ["0", "1-2", "3-5", "6-10", "11-20", "21+"] {
        labels.push(format!("turn={bucket}"));
    }
    labels
}
