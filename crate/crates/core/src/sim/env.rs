//! The dialog environment.
//!
//! One step is a full exchange: the agent's abstract action is realized
//! into concrete system acts (values filled from the offered entity),
//! the simulated user reacts from its agenda, the tracked state absorbs
//! the user's reply, and a reward comes back. Episodes end when the goal
//! is met (the user says bye), when the system hangs up, or at the turn
//! cap.
//!
//! Rewards: −1 per exchange, plus `2·t_max` on success and `−t_max` on
//! failure at termination. With the default cap of 40 the return lies in
//! `[−80, 79]`.
//!
//! All mid-episode attainment decisions delegate to the predicates in
//! [`crate::sim::report`], so replaying a finished log through
//! [`crate::sim::report::evaluate_goal`] reproduces the outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{ActionSpace, ActionTemplate};
use crate::acts::{DialogAct, Intent, DONT_CARE, UNKNOWN_VALUE};
use crate::db::EntityDatabase;
use crate::ontology::Ontology;
use crate::sim::agenda::Agenda;
use crate::sim::goal::{sample_goal, GoalConfig, GoalError, UserGoal};
use crate::sim::log::{Actor, EpisodeLog, Outcome};
use crate::sim::report::{booking_acceptable, constraints_communicated, value_correct};
use crate::state::{track_state, DialogState};

/// Environment knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Hard cap on user–system exchanges per episode.
    pub t_max: u32,
    /// Maximum user acts uttered per exchange.
    pub user_acts_per_turn: usize,
    pub goal: GoalConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { t_max: 40, user_acts_per_turn: 3, goal: GoalConfig::default() }
    }
}

/// What one environment step hands back to the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStepResult {
    pub user_acts: Vec<DialogAct>,
    pub reward: f64,
    pub done: bool,
    /// Set exactly when `done`.
    pub success: Option<bool>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("environment was never reset")]
    NotReset,
    #[error("episode already finished; reset first")]
    Finished,
    #[error("action index {index} out of range (action space has {len})")]
    ActionOutOfRange { index: usize, len: usize },
}

pub struct DialogEnv {
    ontology: Arc<Ontology>,
    db: Arc<EntityDatabase>,
    actions: Arc<ActionSpace>,
    cfg: EnvConfig,
    state: DialogState,
    user: Option<UserSim>,
    log: EpisodeLog,
    done: bool,
}

impl DialogEnv {
    pub fn new(
        ontology: Arc<Ontology>,
        db: Arc<EntityDatabase>,
        actions: Arc<ActionSpace>,
        cfg: EnvConfig,
    ) -> Self {
        let state = DialogState::initial(&ontology, &db);
        DialogEnv {
            ontology,
            db,
            actions,
            cfg,
            state,
            user: None,
            log: EpisodeLog::new(UserGoal { domains: BTreeMap::new() }),
            done: true,
        }
    }

    /// Samples a fresh goal and opens the episode; returns the user's
    /// opening acts (already folded into the tracked state).
    pub fn reset(&mut self, rng: &mut impl Rng) -> Result<Vec<DialogAct>, GoalError> {
        let goal = sample_goal(&self.ontology, &self.db, &self.cfg.goal, rng)?;
        Ok(self.reset_with_goal(goal))
    }

    /// Opens an episode with a fixed goal (tests, scripted scenarios).
    pub fn reset_with_goal(&mut self, goal: UserGoal) -> Vec<DialogAct> {
        let mut user = UserSim::new(goal.clone(), &self.ontology);
        let mut state = DialogState::initial(&self.ontology, &self.db);
        let acts = user.utter(&self.ontology, self.cfg.user_acts_per_turn);
        state = track_state(state, &acts, &self.ontology, &self.db);

        let mut log = EpisodeLog::new(goal);
        log.push(0, Actor::User, acts.clone(), 0.0);

        self.user = Some(user);
        self.state = state;
        self.log = log;
        self.done = false;
        acts
    }

    /// Executes one system action.
    pub fn step(&mut self, action: usize) -> Result<EnvStepResult, EnvError> {
        if self.user.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::Finished);
        }
        let template = self
            .actions
            .get(action)
            .ok_or(EnvError::ActionOutOfRange { index: action, len: self.actions.len() })?
            .clone();

        let sys_acts = resolve_action(&template, &mut self.state, &self.ontology, &self.db);

        let user = self.user.as_mut().expect("checked above");
        let mut done = false;
        let mut success = None;
        let mut user_acts = Vec::new();

        if template.intent == Intent::Bye {
            done = true;
            success = Some(user.goal_satisfied());
            self.state.terminated = true;
        } else {
            for act in &sys_acts {
                let accepted = user.react(act, &self.state, &self.ontology, &self.db);
                if let Some(domain) = accepted {
                    let ds = self.state.domain_mut(&domain).expect("goal domain tracked");
                    ds.booked = true;
                }
            }
            if user.goal_satisfied() {
                user_acts = vec![DialogAct::bye()];
                done = true;
                success = Some(true);
            } else {
                user.ensure_progress();
                user_acts = user.utter(&self.ontology, self.cfg.user_acts_per_turn);
            }
        }

        self.state = track_state(
            std::mem::replace(&mut self.state, DialogState::initial(&self.ontology, &self.db)),
            &user_acts,
            &self.ontology,
            &self.db,
        );
        self.state.turn += 1;

        if !done && self.state.turn >= self.cfg.t_max {
            done = true;
            success = Some(false);
        }

        let mut reward = -1.0;
        match success {
            Some(true) => reward += 2.0 * self.cfg.t_max as f64,
            Some(false) => reward -= self.cfg.t_max as f64,
            None => {}
        }

        let turn = self.state.turn;
        self.log.push(turn, Actor::System, sys_acts, reward);
        self.log.push(turn, Actor::User, user_acts.clone(), 0.0);

        if done {
            self.done = true;
            // Record the effective goal: mid-episode relaxations included.
            self.log.goal = self.user.as_ref().expect("checked above").goal.clone();
            self.log.outcome = Some(Outcome {
                success: success.expect("set on done"),
                ret: self.log.return_sum(),
                turns: turn,
            });
        }

        Ok(EnvStepResult { user_acts, reward, done, success })
    }

    pub fn state(&self) -> &DialogState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn goal(&self) -> Option<&UserGoal> {
        self.user.as_ref().map(|u| &u.goal)
    }

    pub fn episode_log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn actions(&self) -> &Arc<ActionSpace> {
        &self.actions
    }

    pub fn ontology(&self) -> &Arc<Ontology> {
        &self.ontology
    }

    pub fn db(&self) -> &Arc<EntityDatabase> {
        &self.db
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }
}

/// Realizes an abstract action template into concrete system acts,
/// updating the offer and clearing answered requests. Shared by the
/// environment and the interactive REPL.
pub fn resolve_action(
    template: &ActionTemplate,
    state: &mut DialogState,
    ontology: &Ontology,
    db: &EntityDatabase,
) -> Vec<DialogAct> {
    match template.intent {
        Intent::Request => {
            let (d, s) = template_slot(template);
            vec![DialogAct::request(d, s)]
        }
        Intent::Inform => {
            let (d, s) = template_slot(template);
            let d = d.to_owned();
            let s = s.to_owned();
            ensure_offer(state, ontology, db, &d);
            let ds = state.domain(&d).expect("template domain exists");
            let value = ds
                .offered
                .as_ref()
                .and_then(|name| db.entities(&d)?.iter().find(|e| &e.name == name))
                .and_then(|e| e.fields.get(&s).cloned())
                .unwrap_or_else(|| UNKNOWN_VALUE.to_owned());
            state.domain_mut(&d).expect("template domain exists").requested.remove(&s);
            vec![DialogAct::inform(&d, &s, &value)]
        }
        Intent::OfferBooking | Intent::Book => {
            let d = template_domain(template).to_owned();
            ensure_offer(state, ontology, db, &d);
            if template.intent == Intent::Book {
                vec![DialogAct::book(&d)]
            } else {
                vec![DialogAct::offer_booking(&d)]
            }
        }
        Intent::NoOffer => {
            let d = template_domain(template).to_owned();
            if let Some(ds) = state.domain_mut(&d) {
                ds.offered = None;
            }
            vec![DialogAct::no_offer(&d)]
        }
        Intent::Greet => vec![DialogAct::greet()],
        Intent::Bye => vec![DialogAct::bye()],
        Intent::ReqMore => vec![DialogAct::req_more()],
    }
}

fn template_domain(t: &ActionTemplate) -> &str {
    t.domain.as_deref().expect("domain-scoped template")
}

fn template_slot(t: &ActionTemplate) -> (&str, &str) {
    (template_domain(t), t.slot.as_deref().expect("slotted template"))
}

/// Keeps the domain's offered entity consistent with the tracked
/// constraints: keep the current offer while it still matches, otherwise
/// offer the first matching entity (database order), or none.
fn ensure_offer(state: &mut DialogState, ontology: &Ontology, db: &EntityDatabase, domain: &str) {
    let Some(spec) = ontology.domain(domain) else {
        return;
    };
    if !spec.has_database() {
        return;
    }
    let ds = state.domain(domain).expect("domain tracked");
    let matches =
        db.query(ontology, domain, &ds.constraints).expect("tracked constraints are valid");
    let offered = match &ds.offered {
        Some(cur) if matches.iter().any(|e| &e.name == cur) => Some(cur.clone()),
        _ => matches.first().map(|e| e.name.clone()),
    };
    state.domain_mut(domain).expect("domain tracked").offered = offered;
}

/// Agenda-driven user simulator.
struct UserSim {
    goal: UserGoal,
    agenda: Agenda,
    /// Booking raises held back until the opening turn has gone out, so
    /// the first utterance is all greetings, constraints, and questions.
    queued_books: Vec<DialogAct>,
    /// Requested slots not yet answered correctly, per domain.
    pending_requests: BTreeMap<String, BTreeSet<String>>,
    /// Wanted bookings not yet accepted.
    pending_bookings: BTreeSet<String>,
    /// Constraint informs in emission order, for relaxation.
    inform_history: Vec<(String, String)>,
}

impl UserSim {
    fn new(goal: UserGoal, _ontology: &Ontology) -> Self {
        let mut agenda = Agenda::new();
        // Stack order inside each class: reverse pushes so pops come out
        // in alphabetical domain/slot order.
        let queued_books = goal
            .domains
            .iter()
            .rev()
            .filter(|(_, dg)| dg.wants_booking())
            .map(|(d, _)| DialogAct::book(d))
            .collect();
        for (d, dg) in goal.domains.iter().rev() {
            for s in dg.requests.iter().rev() {
                agenda.push(DialogAct::request(d, s));
            }
        }
        for (d, dg) in goal.domains.iter().rev() {
            for (s, v) in dg.constraints.iter().rev() {
                agenda.push(DialogAct::inform(d, s, v));
            }
        }
        agenda.push(DialogAct::greet());

        let pending_requests =
            goal.domains.iter().map(|(d, dg)| (d.clone(), dg.requests.clone())).collect();
        let pending_bookings =
            goal.domains.iter().filter(|(_, g)| g.wants_booking()).map(|(d, _)| d.clone()).collect();

        UserSim {
            goal,
            agenda,
            queued_books,
            pending_requests,
            pending_bookings,
            inform_history: Vec::new(),
        }
    }

    fn goal_satisfied(&self) -> bool {
        self.pending_requests.values().all(BTreeSet::is_empty) && self.pending_bookings.is_empty()
    }

    /// Pops up to `k` acts and records constraint informs for relaxation.
    fn utter(&mut self, ontology: &Ontology, k: usize) -> Vec<DialogAct> {
        let acts = self.agenda.pop_up_to(k);
        for book in self.queued_books.drain(..) {
            self.agenda.push(book);
        }
        for act in &acts {
            if act.intent == Intent::Inform {
                let (Some(d), Some(s)) = (&act.domain, &act.slot) else {
                    continue;
                };
                if ontology.domain(d).and_then(|spec| spec.informable_slot(s)).is_some() {
                    self.inform_history.push((d.clone(), s.clone()));
                }
            }
        }
        acts
    }

    /// Reacts to one system act; returns `Some(domain)` when a booking
    /// was accepted (the environment then marks the state booked).
    fn react(
        &mut self,
        act: &DialogAct,
        state: &DialogState,
        ontology: &Ontology,
        db: &EntityDatabase,
    ) -> Option<String> {
        match act.intent {
            Intent::Request => {
                let (Some(d), Some(s)) = (&act.domain, &act.slot) else {
                    return None;
                };
                if ontology.domain(d).and_then(|spec| spec.informable_slot(s)).is_none() {
                    return None;
                }
                // Answer from the goal, or don't-care for slots (and
                // domains) the user has no stake in.
                let value = self
                    .goal
                    .domain(d)
                    .and_then(|g| g.constraints.get(s))
                    .cloned()
                    .unwrap_or_else(|| DONT_CARE.to_owned());
                self.agenda.push(DialogAct::inform(d, s, &value));
                None
            }
            Intent::Inform => {
                let (Some(d), Some(s), Some(v)) = (&act.domain, &act.slot, &act.value) else {
                    return None;
                };
                let Some(pending) = self.pending_requests.get_mut(d) else {
                    return None;
                };
                if !pending.contains(s) {
                    return None;
                }
                let gd = self.goal.domain(d).expect("pending implies goal domain");
                if value_correct(gd, db, d, s, v) {
                    pending.remove(s);
                } else {
                    // Wrong or unknown answer: ask again.
                    self.agenda.push(DialogAct::request(d, s));
                }
                None
            }
            Intent::OfferBooking | Intent::Book => {
                let d = act.domain.clone()?;
                self.react_booking(&d, act.intent == Intent::Book, state, ontology)
            }
            Intent::NoOffer => {
                let d = act.domain.clone()?;
                self.react_no_offer(&d, state);
                None
            }
            Intent::Greet | Intent::Bye | Intent::ReqMore => None,
        }
    }

    fn react_booking(
        &mut self,
        domain: &str,
        confirm: bool,
        state: &DialogState,
        ontology: &Ontology,
    ) -> Option<String> {
        if !self.pending_bookings.contains(domain) {
            return None;
        }
        let gd = self.goal.domain(domain).expect("pending implies goal domain");
        let wanted = gd.booking.as_ref().expect("pending implies wanted");
        let spec = ontology.domain(domain).expect("goal domains exist");
        let tracked = state.domain(domain).expect("goal domains tracked");

        // Supply whatever the booking still needs.
        let missing: Vec<&str> = spec
            .booking
            .iter()
            .map(|s| s.slot.as_str())
            .filter(|s| !tracked.booking_info.contains_key(*s))
            .collect();
        if !missing.is_empty() {
            for s in missing.iter().rev() {
                self.agenda.push(DialogAct::inform(domain, s, &wanted[*s]));
            }
            return None;
        }
        if !constraints_communicated(gd, tracked) {
            for (s, v) in gd.constraints.iter().rev() {
                if v != DONT_CARE && tracked.constraints.get(s) != Some(v) {
                    self.agenda.push(DialogAct::inform(domain, s, v));
                }
            }
            return None;
        }
        if confirm && booking_acceptable(gd, spec, tracked) {
            self.pending_bookings.remove(domain);
            return Some(domain.to_owned());
        }
        None
    }

    /// On a no-offer with a genuinely empty match set, relax the most
    /// recently uttered concrete constraint to don't-care and say so.
    fn react_no_offer(&mut self, domain: &str, state: &DialogState) {
        let Some(tracked) = state.domain(domain) else {
            return;
        };
        if tracked.db_count != Some(0) {
            return;
        }
        let Some(gd) = self.goal.domains.get_mut(domain) else {
            return;
        };
        for (d, s) in self.inform_history.iter().rev() {
            if d != domain {
                continue;
            }
            if let Some(v) = gd.constraints.get_mut(s) {
                if v != DONT_CARE {
                    *v = DONT_CARE.to_owned();
                    self.agenda.push(DialogAct::inform(domain, s, DONT_CARE));
                    return;
                }
            }
        }
    }

    /// Keeps the dialog moving when the agenda drains before the goal is
    /// met: re-ask an unanswered request, or re-raise a pending booking.
    fn ensure_progress(&mut self) {
        if !self.agenda.is_empty() {
            return;
        }
        for (d, pending) in &self.pending_requests {
            if let Some(s) = pending.iter().next() {
                self.agenda.push(DialogAct::request(d, s));
                return;
            }
        }
        if let Some(d) = self.pending_bookings.iter().next() {
            self.agenda.push(DialogAct::book(d));
        }
    }
}
