//! Dialog acts: the typed utterances exchanged between user and system.
//!
//! An act is `intent` plus optional `domain`, `slot` and `value` fields;
//! which fields are present depends on the intent (see [`DialogAct`]).
//! Acts have a stable one-line text form (`inform hotel area=north`)
//! used by the interactive REPL and human-readable dumps, and a serde
//! form used by episode logs.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Wildcard slot value: the speaker accepts any value for the slot.
pub const DONT_CARE: &str = "dontcare";

/// Placeholder value when the system must answer a request but has no
/// entity to draw the value from.
pub const UNKNOWN_VALUE: &str = "unknown";

/// Communicative intent of a dialog act.
///
/// The declaration order is fixed: the state featurizer assigns one
/// indicator bit per intent in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Intent {
    /// Assert a slot value (user: constraint; system: requested info).
    Inform,
    /// Ask for a slot value.
    Request,
    /// System proposes to make a booking for a domain.
    OfferBooking,
    /// Commit a booking (user asks for one / system confirms one).
    Book,
    /// System reports that no entity matches the current constraints.
    NoOffer,
    /// Session opening.
    Greet,
    /// Session close.
    Bye,
    /// System asks whether anything else is needed.
    ReqMore,
}

impl Intent {
    /// All intents in feature-bit order.
    pub const ALL: [Intent; 8] = [
        Intent::Inform,
        Intent::Request,
        Intent::OfferBooking,
        Intent::Book,
        Intent::NoOffer,
        Intent::Greet,
        Intent::Bye,
        Intent::ReqMore,
    ];

    /// Position of the intent inside [`Intent::ALL`].
    pub fn bit(self) -> usize {
        Intent::ALL.iter().position(|i| *i == self).expect("intent listed")
    }

    /// Lower-case token used by the text form.
    pub fn token(self) -> &'static str {
        match self {
            Intent::Inform => "inform",
            Intent::Request => "request",
            Intent::OfferBooking => "offerbooking",
            Intent::Book => "book",
            Intent::NoOffer => "nooffer",
            Intent::Greet => "greet",
            Intent::Bye => "bye",
            Intent::ReqMore => "reqmore",
        }
    }

    /// True for intents that carry no domain/slot/value payload.
    pub fn is_general(self) -> bool {
        matches!(self, Intent::Greet | Intent::Bye | Intent::ReqMore)
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// A single dialog act.
///
/// Field usage by intent:
///
/// | intent         | domain | slot | value |
/// |----------------|--------|------|-------|
/// | `Inform`       | yes    | yes  | yes   |
/// | `Request`      | yes    | yes  | —     |
/// | `OfferBooking` | yes    | —    | —     |
/// | `Book`         | yes    | —    | —     |
/// | `NoOffer`      | yes    | —    | —     |
/// | `Greet`/`Bye`/`ReqMore` | — | — | —    |
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DialogAct {
    pub intent: Intent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl DialogAct {
    pub fn inform(domain: &str, slot: &str, value: &str) -> Self {
        DialogAct {
            intent: Intent::Inform,
            domain: Some(domain.to_owned()),
            slot: Some(slot.to_owned()),
            value: Some(value.to_owned()),
        }
    }

    pub fn request(domain: &str, slot: &str) -> Self {
        DialogAct {
            intent: Intent::Request,
            domain: Some(domain.to_owned()),
            slot: Some(slot.to_owned()),
            value: None,
        }
    }

    pub fn offer_booking(domain: &str) -> Self {
        Self::domain_only(Intent::OfferBooking, domain)
    }

    pub fn book(domain: &str) -> Self {
        Self::domain_only(Intent::Book, domain)
    }

    pub fn no_offer(domain: &str) -> Self {
        Self::domain_only(Intent::NoOffer, domain)
    }

    pub fn greet() -> Self {
        Self::general(Intent::Greet)
    }

    pub fn bye() -> Self {
        Self::general(Intent::Bye)
    }

    pub fn req_more() -> Self {
        Self::general(Intent::ReqMore)
    }

    fn domain_only(intent: Intent, domain: &str) -> Self {
        DialogAct { intent, domain: Some(domain.to_owned()), slot: None, value: None }
    }

    fn general(intent: Intent) -> Self {
        DialogAct { intent, domain: None, slot: None, value: None }
    }

    /// Checks that exactly the fields required by the intent are present.
    pub fn is_well_formed(&self) -> bool {
        let (d, s, v) = (self.domain.is_some(), self.slot.is_some(), self.value.is_some());
        match self.intent {
            Intent::Inform => d && s && v,
            Intent::Request => d && s && !v,
            Intent::OfferBooking | Intent::Book | Intent::NoOffer => d && !s && !v,
            Intent::Greet | Intent::Bye | Intent::ReqMore => !d && !s && !v,
        }
    }
}

impl fmt::Display for DialogAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.intent)?;
        if let Some(d) = &self.domain {
            write!(f, " {d}")?;
        }
        if let Some(s) = &self.slot {
            write!(f, " {s}")?;
        }
        if let Some(v) = &self.value {
            write!(f, "={v}")?;
        }
        Ok(())
    }
}

/// Failure to parse the one-line act grammar.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActParseError {
    #[error("empty input")]
    Empty,
    #[error("unknown intent `{0}`")]
    UnknownIntent(String),
    #[error("intent `{intent}` expects `{expected}`")]
    BadShape { intent: Intent, expected: &'static str },
}

/// Grammar: `intent [domain [slot[=value]]]`, e.g. `inform hotel area=north`,
/// `request restaurant phone`, `book taxi`, `bye`.
impl FromStr for DialogAct {
    type Err = ActParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut parts = line.split_whitespace();
        let head = parts.next().ok_or(ActParseError::Empty)?;
        let intent = Intent::ALL
            .into_iter()
            .find(|i| i.token() == head.to_ascii_lowercase())
            .ok_or_else(|| ActParseError::UnknownIntent(head.to_owned()))?;

        let rest: Vec<&str> = parts.collect();
        let shape_err = |expected| ActParseError::BadShape { intent, expected };

        match intent {
            Intent::Greet | Intent::Bye | Intent::ReqMore => match rest.as_slice() {
                [] => Ok(DialogAct::general(intent)),
                _ => Err(shape_err(intent.token())),
            },
            Intent::OfferBooking | Intent::Book | Intent::NoOffer => match rest.as_slice() {
                [d] => Ok(DialogAct::domain_only(intent, d)),
                _ => Err(shape_err("<intent> <domain>")),
            },
            Intent::Request => match rest.as_slice() {
                [d, s] if !s.contains('=') => Ok(DialogAct::request(d, s)),
                _ => Err(shape_err("request <domain> <slot>")),
            },
            Intent::Inform => match rest.as_slice() {
                [d, sv] => match sv.split_once('=') {
                    Some((s, v)) if !s.is_empty() && !v.is_empty() => {
                        Ok(DialogAct::inform(d, s, v))
                    }
                    _ => Err(shape_err("inform <domain> <slot>=<value>")),
                },
                _ => Err(shape_err("inform <domain> <slot>=<value>")),
            },
        }
    }
}
