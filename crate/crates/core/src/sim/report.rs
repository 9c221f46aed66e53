//! Goal attainment scoring.
//!
//! [`evaluate_goal`] replays an episode log against the goal, the
//! ontology and the database, and scores it without consulting any
//! environment internals. The environment uses the same predicates
//! ([`value_correct`], [`constraints_communicated`],
//! [`booking_acceptable`]) when it decides mid-episode whether a request
//! was answered or a booking goes through, so the two views cannot
//! drift apart.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::acts::{Intent, UNKNOWN_VALUE};
use crate::db::EntityDatabase;
use crate::ontology::{DomainSpec, Ontology};
use crate::sim::goal::{DomainGoal, UserGoal};
use crate::sim::log::{Actor, EpisodeLog};
use crate::state::{track_state, DialogState, DomainState};

use crate::acts::DONT_CARE;

/// Per-episode attainment report. Ratios are in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalReport {
    pub success: bool,
    /// Fraction of distinct informed (domain, slot) pairs that correctly
    /// answered a goal request; 1 when nothing was informed.
    pub precision: f64,
    /// Fraction of goal requests correctly answered; 1 when the goal
    /// requested nothing.
    pub recall: f64,
    /// Harmonic mean of precision and recall; 0 when both are 0.
    pub f1: f64,
    /// Fraction of wanted bookings completed; 1 when none were wanted.
    pub booked: f64,
    pub requests_total: usize,
    pub requests_correct: usize,
    pub informed_slots: usize,
    pub bookings_wanted: usize,
    pub bookings_done: usize,
    pub turns: u32,
    pub ret: f64,
}

/// True when some entity consistent with every concrete goal constraint
/// of the domain carries `value` for `slot`.
pub fn value_correct(
    goal_dom: &DomainGoal,
    db: &EntityDatabase,
    domain: &str,
    slot: &str,
    value: &str,
) -> bool {
    if value == UNKNOWN_VALUE {
        return false;
    }
    let Some(entities) = db.entities(domain) else {
        return false;
    };
    entities.iter().any(|e| {
        goal_dom
            .constraints
            .iter()
            .filter(|(_, v)| *v != DONT_CARE)
            .all(|(s, v)| e.fields.get(s) == Some(v))
            && e.fields.get(slot).map(String::as_str) == Some(value)
    })
}

/// True when every concrete goal constraint has been uttered and tracked.
pub fn constraints_communicated(goal_dom: &DomainGoal, tracked: &DomainState) -> bool {
    goal_dom
        .constraints
        .iter()
        .filter(|(_, v)| *v != DONT_CARE)
        .all(|(s, v)| tracked.constraints.get(s) == Some(v))
}

/// True when a booking for the domain would go through right now: the
/// goal wants one, every booking slot holds the goal's value, the
/// concrete constraints have been communicated, and (for database
/// domains) some entity still matches the tracked constraints.
pub fn booking_acceptable(
    goal_dom: &DomainGoal,
    spec: &DomainSpec,
    tracked: &DomainState,
) -> bool {
    let Some(wanted) = &goal_dom.booking else {
        return false;
    };
    spec.booking.iter().all(|s| tracked.booking_info.contains_key(&s.slot))
        && wanted.iter().all(|(s, v)| tracked.booking_info.get(s) == Some(v))
        && constraints_communicated(goal_dom, tracked)
        && tracked.db_count.map_or(true, |c| c >= 1)
}

/// Replays `log` and scores it against `goal`.
pub fn evaluate_goal(
    goal: &UserGoal,
    log: &EpisodeLog,
    ontology: &Ontology,
    db: &EntityDatabase,
) -> GoalReport {
    let mut state = DialogState::initial(ontology, db);
    let mut informed: BTreeSet<(String, String)> = BTreeSet::new();
    let mut correct: BTreeSet<(String, String)> = BTreeSet::new();
    let mut booked: BTreeSet<String> = BTreeSet::new();

    for record in &log.records {
        match record.actor {
            Actor::User => {
                state = track_state(state, &record.acts, ontology, db);
            }
            Actor::System => {
                for act in &record.acts {
                    apply_system_act(
                        act, goal, ontology, db, &state, &mut informed, &mut correct, &mut booked,
                    );
                }
            }
        }
    }

    let requests_total = goal.request_count();
    let requests_correct = correct.len();
    let informed_slots = informed.len();
    let bookings_wanted = goal.booking_domains().count();
    let bookings_done = booked.len();

    let precision = if informed_slots == 0 {
        1.0
    } else {
        requests_correct as f64 / informed_slots as f64
    };
    let recall = if requests_total == 0 {
        1.0
    } else {
        requests_correct as f64 / requests_total as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let booked_frac = if bookings_wanted == 0 {
        1.0
    } else {
        bookings_done as f64 / bookings_wanted as f64
    };

    GoalReport {
        success: requests_correct == requests_total && bookings_done == bookings_wanted,
        precision,
        recall,
        f1,
        booked: booked_frac,
        requests_total,
        requests_correct,
        informed_slots,
        bookings_wanted,
        bookings_done,
        turns: log.records.iter().filter(|r| r.actor == Actor::System).count() as u32,
        ret: log.return_sum(),
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_system_act(
    act: &crate::acts::DialogAct,
    goal: &UserGoal,
    ontology: &Ontology,
    db: &EntityDatabase,
    state: &DialogState,
    informed: &mut BTreeSet<(String, String)>,
    correct: &mut BTreeSet<(String, String)>,
    booked: &mut BTreeSet<String>,
) {
    match act.intent {
        Intent::Inform => {
            let (Some(d), Some(s), Some(v)) = (&act.domain, &act.slot, &act.value) else {
                return;
            };
            let Some(spec) = ontology.domain(d) else {
                return;
            };
            if !spec.is_requestable(s) {
                return;
            }
            informed.insert((d.clone(), s.clone()));
            if let Some(gd) = goal.domain(d) {
                if gd.requests.contains(s) && value_correct(gd, db, d, s, v) {
                    correct.insert((d.clone(), s.clone()));
                }
            }
        }
        Intent::Book => {
            let Some(d) = &act.domain else {
                return;
            };
            let (Some(gd), Some(spec), Some(tracked)) =
                (goal.domain(d), ontology.domain(d), state.domain(d))
            else {
                return;
            };
            if !booked.contains(d) && booking_acceptable(gd, spec, tracked) {
                booked.insert(d.clone());
            }
        }
        _ => {}
    }
}
