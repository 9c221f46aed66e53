//! System action space, enumerated from the ontology.
//!
//! The agent picks among abstract action templates; values for `Inform`
//! templates are filled in at execution time from the offered entity.
//! Per domain the templates are: `request <domain> <slot>` for every
//! informable slot, `inform <domain> <slot>` for every requestable slot,
//! `offerbooking`/`book` for bookable domains and `nooffer` for database
//! domains; plus the three general templates `greet`, `bye`, `reqmore`.
//!
//! Templates are sorted lexicographically by (intent token, domain,
//! slot), so the action index of a template depends only on the
//! ontology, never on enumeration order.
//!
//! For the shipped desk ontology the census is: 3 `book` + 12 `inform`
//! (6 requestables × 2 database domains) + 2 `nooffer` + 3
//! `offerbooking` + 8 `request` (3+3 hotel/restaurant informables, 2
//! taxi) + 3 general = 31 actions.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::acts::Intent;
use crate::ontology::Ontology;

/// One abstract system action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTemplate {
    pub intent: Intent,
    pub domain: Option<String>,
    pub slot: Option<String>,
}

impl ActionTemplate {
    fn sort_key(&self) -> (&'static str, &Option<String>, &Option<String>) {
        (self.intent.token(), &self.domain, &self.slot)
    }
}

impl Ord for ActionTemplate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for ActionTemplate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ActionTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.intent)?;
        if let Some(d) = &self.domain {
            write!(f, " {d}")?;
        }
        if let Some(s) = &self.slot {
            write!(f, " {s}")?;
        }
        Ok(())
    }
}

/// The full ordered action space.
#[derive(Debug, Clone)]
pub struct ActionSpace {
    templates: Vec<ActionTemplate>,
    index: BTreeMap<ActionTemplate, usize>,
}

/// Enumerates every system action template for the ontology.
pub fn enumerate_actions(ontology: &Ontology) -> ActionSpace {
    let mut templates = Vec::new();
    let dom = |intent, domain: &str| ActionTemplate {
        intent,
        domain: Some(domain.to_owned()),
        slot: None,
    };
    let slotted = |intent, domain: &str, slot: &str| ActionTemplate {
        intent,
        domain: Some(domain.to_owned()),
        slot: Some(slot.to_owned()),
    };

    for d in &ontology.domains {
        for spec in &d.informable {
            templates.push(slotted(Intent::Request, &d.name, &spec.slot));
        }
        for slot in &d.requestable {
            templates.push(slotted(Intent::Inform, &d.name, slot));
        }
        if d.bookable {
            templates.push(dom(Intent::OfferBooking, &d.name));
            templates.push(dom(Intent::Book, &d.name));
        }
        if d.has_database() {
            templates.push(dom(Intent::NoOffer, &d.name));
        }
    }
    for intent in [Intent::Greet, Intent::Bye, Intent::ReqMore] {
        templates.push(ActionTemplate { intent, domain: None, slot: None });
    }

    templates.sort();
    let index = templates.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    ActionSpace { templates, index }
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&ActionTemplate> {
        self.templates.get(index)
    }

    pub fn index_of(&self, template: &ActionTemplate) -> Option<usize> {
        self.index.get(template).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionTemplate> {
        self.templates.iter()
    }

    /// Index of the general `bye` action (always present).
    pub fn bye_index(&self) -> usize {
        self.index_of(&ActionTemplate { intent: Intent::Bye, domain: None, slot: None })
            .expect("bye is always enumerated")
    }
}
