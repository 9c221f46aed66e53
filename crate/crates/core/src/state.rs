//! Dialog state: everything the system is allowed to condition on.
//!
//! The state is belief-free bookkeeping over observed user acts: tracked
//! constraints, outstanding requests, booking progress, plus a refreshed
//! database match count per database domain. [`track_state`] folds one
//! batch of user acts into a state; it is the only place user acts touch
//! the state, so the agent, the rule policies and the REPL all share it.

use std::collections::{BTreeMap, BTreeSet};

use crate::acts::{DialogAct, Intent, DONT_CARE};
use crate::db::EntityDatabase;
use crate::ontology::Ontology;

/// Per-domain slice of the dialog state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainState {
    /// Tracked informable constraints (value may be the wildcard).
    pub constraints: BTreeMap<String, String>,
    /// Tracked booking-slot values.
    pub booking_info: BTreeMap<String, String>,
    /// Requestable slots asked for and not yet answered by the system.
    pub requested: BTreeSet<String>,
    /// Matching entities under the tracked constraints; `None` when the
    /// domain has no database.
    pub db_count: Option<usize>,
    /// Name of the entity currently offered to the user, if any.
    pub offered: Option<String>,
    /// Whether a booking has been confirmed.
    pub booked: bool,
    /// Whether the user asked for a booking in this domain.
    pub booking_requested: bool,
}

impl DomainState {
    /// A domain the dialog has touched in any way.
    pub fn is_active(&self) -> bool {
        !self.constraints.is_empty()
            || !self.booking_info.is_empty()
            || !self.requested.is_empty()
            || self.booking_requested
            || self.booked
            || self.offered.is_some()
    }
}

/// Full tracked dialog state.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogState {
    /// Per-domain state, keyed by domain name.
    pub domains: BTreeMap<String, DomainState>,
    /// Completed user–system exchanges.
    pub turn: u32,
    /// User acts of the most recent exchange.
    pub last_user_acts: Vec<DialogAct>,
    /// Set once either side has said bye.
    pub terminated: bool,
    /// User acts that referenced unknown domains/slots/values and were
    /// dropped (diagnostic only; never featurized).
    pub ignored_acts: u32,
}

impl DialogState {
    /// Fresh state: no constraints, database counts at full size.
    pub fn initial(ontology: &Ontology, db: &EntityDatabase) -> Self {
        let mut domains = BTreeMap::new();
        for spec in &ontology.domains {
            let mut ds = DomainState::default();
            ds.db_count = if spec.has_database() { db.size(&spec.name) } else { None };
            domains.insert(spec.name.clone(), ds);
        }
        DialogState { domains, turn: 0, last_user_acts: Vec::new(), terminated: false, ignored_acts: 0 }
    }

    pub fn domain(&self, name: &str) -> Option<&DomainState> {
        self.domains.get(name)
    }

    pub fn domain_mut(&mut self, name: &str) -> Option<&mut DomainState> {
        self.domains.get_mut(name)
    }
}

/// Folds one batch of user acts into the state and refreshes database
/// counts. Acts referencing unknown domains, slots or undeclared values
/// are dropped and counted in [`DialogState::ignored_acts`], never errors:
/// the tracker must survive arbitrary REPL input.
pub fn track_state(
    mut state: DialogState,
    user_acts: &[DialogAct],
    ontology: &Ontology,
    db: &EntityDatabase,
) -> DialogState {
    for act in user_acts {
        apply_act(&mut state, act, ontology);
    }
    refresh_db_counts(&mut state, ontology, db);
    state.last_user_acts = user_acts.to_vec();
    state
}

fn apply_act(state: &mut DialogState, act: &DialogAct, ontology: &Ontology) {
    match act.intent {
        Intent::Greet => {}
        Intent::Bye => state.terminated = true,
        Intent::Inform => {
            let (Some(domain), Some(slot), Some(value)) = (&act.domain, &act.slot, &act.value)
            else {
                state.ignored_acts += 1;
                return;
            };
            let Some(spec) = ontology.domain(domain) else {
                state.ignored_acts += 1;
                return;
            };
            if let Some(slot_spec) = spec.informable_slot(slot) {
                if value == DONT_CARE || slot_spec.has_value(value) {
                    let ds = state.domains.get_mut(domain).expect("domain tracked");
                    ds.constraints.insert(slot.clone(), value.clone());
                } else {
                    state.ignored_acts += 1;
                }
            } else if let Some(slot_spec) = spec.booking_slot(slot) {
                if slot_spec.has_value(value) {
                    let ds = state.domains.get_mut(domain).expect("domain tracked");
                    ds.booking_info.insert(slot.clone(), value.clone());
                } else {
                    state.ignored_acts += 1;
                }
            } else {
                state.ignored_acts += 1;
            }
        }
        Intent::Request => {
            let (Some(domain), Some(slot)) = (&act.domain, &act.slot) else {
                state.ignored_acts += 1;
                return;
            };
            match ontology.domain(domain) {
                Some(spec) if spec.is_requestable(slot) => {
                    let ds = state.domains.get_mut(domain).expect("domain tracked");
                    ds.requested.insert(slot.clone());
                }
                _ => state.ignored_acts += 1,
            }
        }
        Intent::Book => {
            let Some(domain) = &act.domain else {
                state.ignored_acts += 1;
                return;
            };
            match ontology.domain(domain) {
                Some(spec) if spec.bookable => {
                    let ds = state.domains.get_mut(domain).expect("domain tracked");
                    ds.booking_requested = true;
                }
                _ => state.ignored_acts += 1,
            }
        }
        // System-side intents carry no information when uttered by the user.
        Intent::OfferBooking | Intent::NoOffer | Intent::ReqMore => state.ignored_acts += 1,
    }
}

fn refresh_db_counts(state: &mut DialogState, ontology: &Ontology, db: &EntityDatabase) {
    for spec in &ontology.domains {
        if !spec.has_database() {
            continue;
        }
        let ds = state.domains.get_mut(&spec.name).expect("domain tracked");
        // Tracked constraints are validated on entry, so the query cannot fail.
        ds.db_count = Some(
            db.count(ontology, &spec.name, &ds.constraints).expect("tracked constraints are valid"),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn world() -> (Ontology, EntityDatabase) {
        let ont = ontology::Ontology::desk_default();
        let db = EntityDatabase::generate(&ont, 12, &mut ChaCha12Rng::seed_from_u64(7));
        (ont, db)
    }

    #[test]
    fn initial_state_has_full_db_counts() {
        let (ont, db) = world();
        let s = DialogState::initial(&ont, &db);
        assert_eq!(s.domain("hotel").unwrap().db_count, Some(12));
        assert_eq!(s.domain("taxi").unwrap().db_count, None);
        assert_eq!(s.turn, 0);
        assert!(!s.terminated);
        assert!(!s.domain("hotel").unwrap().is_active());
    }

    #[test]
    fn informs_overwrite_and_refresh_counts() {
        let (ont, db) = world();
        let s = DialogState::initial(&ont, &db);

        let s = track_state(s, &[DialogAct::inform("hotel", "area", "north")], &ont, &db);
        let north = db
            .count(&ont, "hotel", &s.domain("hotel").unwrap().constraints)
            .unwrap();
        assert_eq!(s.domain("hotel").unwrap().db_count, Some(north));
        assert_eq!(s.domain("hotel").unwrap().constraints["area"], "north");

        // Overwrite with the wildcard: count returns to full size.
        let s = track_state(s, &[DialogAct::inform("hotel", "area", DONT_CARE)], &ont, &db);
        assert_eq!(s.domain("hotel").unwrap().constraints["area"], DONT_CARE);
        assert_eq!(s.domain("hotel").unwrap().db_count, Some(12));
    }

    #[test]
    fn booking_and_requests_tracked_separately() {
        let (ont, db) = world();
        let s = DialogState::initial(&ont, &db);
        let acts = [
            DialogAct::inform("hotel", "day", "monday"),
            DialogAct::request("hotel", "phone"),
            DialogAct::book("hotel"),
        ];
        let s = track_state(s, &acts, &ont, &db);
        let hotel = s.domain("hotel").unwrap();
        assert_eq!(hotel.booking_info["day"], "monday");
        assert!(hotel.constraints.is_empty(), "booking slots are not constraints");
        assert!(hotel.requested.contains("phone"));
        assert!(hotel.booking_requested);
        assert_eq!(hotel.db_count, Some(12), "booking slots never filter");
        assert!(hotel.is_active());
    }

    #[test]
    fn garbage_acts_are_counted_not_applied() {
        let (ont, db) = world();
        let s = DialogState::initial(&ont, &db);
        let garbage = [
            DialogAct::inform("zoo", "area", "north"),       // unknown domain
            DialogAct::inform("hotel", "smell", "nice"),     // unknown slot
            DialogAct::inform("hotel", "area", "moon"),      // undeclared value
            DialogAct::inform("hotel", "day", DONT_CARE),    // wildcard booking value
            DialogAct::request("hotel", "area"),             // not requestable
            DialogAct::book("zoo"),                          // unknown domain
            DialogAct::req_more(),                           // system-only intent
        ];
        let s = track_state(s, &garbage, &ont, &db);
        assert_eq!(s.ignored_acts, garbage.len() as u32);
        assert_eq!(*s.domain("hotel").unwrap(), DomainState { db_count: Some(12), ..Default::default() });
    }

    #[test]
    fn bye_terminates() {
        let (ont, db) = world();
        let s = DialogState::initial(&ont, &db);
        let s = track_state(s, &[DialogAct::bye()], &ont, &db);
        assert!(s.terminated);
        assert_eq!(s.last_user_acts, vec![DialogAct::bye()]);
    }
}
