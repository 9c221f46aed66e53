//! User goal sampling.
//!
//! A goal assigns each chosen domain a set of informable constraints
//! (possibly wildcards), a set of requested slots, and optionally a
//! booking with concrete values for every booking slot. Constraint sets
//! for database domains are rejection-sampled until at least one entity
//! matches, so every sampled goal is achievable in the generated world.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acts::DONT_CARE;
use crate::db::EntityDatabase;
use crate::ontology::{DomainSpec, Ontology};

/// Knobs of the goal distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoalConfig {
    /// Upper bound on the number of domains per goal (at least 1).
    pub max_domains: usize,
    /// Probability of adding each further domain beyond the first, so the
    /// domain count is truncated-geometric over 1..=max_domains.
    pub extra_domain_prob: f64,
    /// Probability that an informable slot gets a constraint.
    pub constrain_prob: f64,
    /// Probability that a sampled constraint is the wildcard.
    pub dontcare_prob: f64,
    /// Probability that a requestable slot is requested.
    pub request_prob: f64,
    /// Probability that a bookable domain wants a booking.
    pub booking_prob: f64,
    /// Attempts before giving up on a satisfiable constraint set.
    pub rejection_limit: u32,
}

impl Default for GoalConfig {
    fn default() -> Self {
        GoalConfig {
            max_domains: 3,
            extra_domain_prob: 0.9,
            constrain_prob: 0.3,
            dontcare_prob: 0.1,
            request_prob: 0.9,
            booking_prob: 0.9,
            rejection_limit: 1000,
        }
    }
}

/// Goal slice for one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainGoal {
    /// Informable slot -> wanted value (may be the wildcard).
    pub constraints: BTreeMap<String, String>,
    /// Requestable slots the user wants answered.
    pub requests: BTreeSet<String>,
    /// Booking slot values when the user wants a reservation.
    pub booking: Option<BTreeMap<String, String>>,
}

impl DomainGoal {
    pub fn wants_booking(&self) -> bool {
        self.booking.is_some()
    }
}

/// A complete user goal, keyed by domain name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserGoal {
    pub domains: BTreeMap<String, DomainGoal>,
}

impl UserGoal {
    pub fn domain(&self, name: &str) -> Option<&DomainGoal> {
        self.domains.get(name)
    }

    /// Total number of requested slots across domains.
    pub fn request_count(&self) -> usize {
        self.domains.values().map(|d| d.requests.len()).sum()
    }

    /// Domains that want a booking.
    pub fn booking_domains(&self) -> impl Iterator<Item = &String> {
        self.domains.iter().filter(|(_, g)| g.wants_booking()).map(|(d, _)| d)
    }
}

#[derive(Debug, Error)]
pub enum GoalError {
    #[error("no satisfiable constraint set for domain `{domain}` after {attempts} attempts")]
    Unsatisfiable { domain: String, attempts: u32 },
    #[error("goal config: {0}")]
    BadConfig(String),
}

/// Samples a user goal over 1..=`max_domains` distinct domains.
pub fn sample_goal(
    ontology: &Ontology,
    db: &EntityDatabase,
    cfg: &GoalConfig,
    rng: &mut impl Rng,
) -> Result<UserGoal, GoalError> {
    if cfg.max_domains == 0 {
        return Err(GoalError::BadConfig("max_domains must be at least 1".into()));
    }
    let n = ontology.domains.len();
    let mut k = 1;
    while k < cfg.max_domains.min(n) && rng.random::<f64>() < cfg.extra_domain_prob {
        k += 1;
    }

    // Partial Fisher-Yates pick of k distinct domain indices, then sort so
    // the goal is assembled in ontology order regardless of pick order.
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    let mut chosen: Vec<usize> = indices[..k].to_vec();
    chosen.sort_unstable();

    let mut domains = BTreeMap::new();
    for idx in chosen {
        let spec = &ontology.domains[idx];
        let goal = sample_domain_goal(spec, ontology, db, cfg, rng)?;
        domains.insert(spec.name.clone(), goal);
    }
    Ok(UserGoal { domains })
}

fn sample_domain_goal(
    spec: &DomainSpec,
    ontology: &Ontology,
    db: &EntityDatabase,
    cfg: &GoalConfig,
    rng: &mut impl Rng,
) -> Result<DomainGoal, GoalError> {
    let mut constraints = BTreeMap::new();
    let mut attempts = 0;
    loop {
        attempts += 1;
        if attempts > cfg.rejection_limit {
            return Err(GoalError::Unsatisfiable {
                domain: spec.name.clone(),
                attempts: cfg.rejection_limit,
            });
        }
        constraints.clear();
        for slot in &spec.informable {
            if rng.random::<f64>() >= cfg.constrain_prob {
                continue;
            }
            let value = if rng.random::<f64>() < cfg.dontcare_prob {
                DONT_CARE.to_owned()
            } else {
                slot.values[rng.random_range(0..slot.values.len())].clone()
            };
            constraints.insert(slot.slot.clone(), value);
        }
        if !spec.has_database() {
            break;
        }
        let matches = db
            .count(ontology, &spec.name, &constraints)
            .expect("sampled constraints are declared values");
        if matches >= 1 {
            break;
        }
    }

    let mut requests = BTreeSet::new();
    for slot in &spec.requestable {
        if rng.random::<f64>() < cfg.request_prob {
            requests.insert(slot.clone());
        }
    }

    let mut booking = if spec.bookable && rng.random::<f64>() < cfg.booking_prob {
        Some(sample_booking(spec, rng))
    } else {
        None
    };

    // A domain must give the user something to accomplish.
    if requests.is_empty() && booking.is_none() {
        if spec.bookable {
            booking = Some(sample_booking(spec, rng));
        } else if !spec.requestable.is_empty() {
            let pick = rng.random_range(0..spec.requestable.len());
            requests.insert(spec.requestable[pick].clone());
        }
    }

    Ok(DomainGoal { constraints, requests, booking })
}

fn sample_booking(spec: &DomainSpec, rng: &mut impl Rng) -> BTreeMap<String, String> {
    spec.booking
        .iter()
        .map(|s| (s.slot.clone(), s.values[rng.random_range(0..s.values.len())].clone()))
        .collect()
}
