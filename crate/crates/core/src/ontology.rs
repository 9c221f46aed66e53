//! Ontology: the schema of the dialog universe.
//!
//! A domain declares informable slots (closed value lists the user may
//! constrain), requestable slots (attributes the system can look up for
//! an entity), whether it is bookable, and the extra booking slots a
//! reservation needs. A domain is backed by an entity database exactly
//! when it has at least one requestable slot.
//!
//! Ontologies load from TOML; arrays of tables keep slot order stable,
//! and every derived artifact (action space, feature layout, databases)
//! follows that order.

use serde::Deserialize;
use thiserror::Error;

/// Value of the special wildcard constraint accepted everywhere.
pub use crate::acts::DONT_CARE;

/// A named slot with its closed list of values.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SlotSpec {
    pub slot: String,
    pub values: Vec<String>,
}

impl SlotSpec {
    pub fn has_value(&self, value: &str) -> bool {
        self.values.iter().any(|v| v == value)
    }
}

/// One dialog domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainSpec {
    pub name: String,
    /// Slots the user constrains; each filters the entity database.
    pub informable: Vec<SlotSpec>,
    /// Entity attributes the user can ask for. Non-empty iff the domain
    /// has an entity database.
    pub requestable: Vec<String>,
    /// Whether reservations exist for this domain.
    pub bookable: bool,
    /// Extra slots a reservation needs (ignored by database queries).
    pub booking: Vec<SlotSpec>,
}

impl DomainSpec {
    /// Database-backed domains are exactly those with requestable slots.
    pub fn has_database(&self) -> bool {
        !self.requestable.is_empty()
    }

    pub fn informable_slot(&self, slot: &str) -> Option<&SlotSpec> {
        self.informable.iter().find(|s| s.slot == slot)
    }

    pub fn booking_slot(&self, slot: &str) -> Option<&SlotSpec> {
        self.booking.iter().find(|s| s.slot == slot)
    }

    pub fn is_requestable(&self, slot: &str) -> bool {
        self.requestable.iter().any(|s| s == slot)
    }
}

/// Validated ontology. Domain order is the file order and is load-bearing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    pub domains: Vec<DomainSpec>,
}

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("ontology parse error: {0}")]
    Parse(String),
    #[error("ontology declares no domains")]
    NoDomains,
    #[error("duplicate domain `{0}`")]
    DuplicateDomain(String),
    #[error("duplicate slot `{slot}` in domain `{domain}`")]
    DuplicateSlot { domain: String, slot: String },
    #[error("slot `{slot}` in domain `{domain}` has no values")]
    EmptyValues { domain: String, slot: String },
    #[error("duplicate value `{value}` for slot `{slot}` in domain `{domain}`")]
    DuplicateValue { domain: String, slot: String, value: String },
    #[error("domain `{domain}` reserves the value `{value}` for slot `{slot}`")]
    ReservedValue { domain: String, slot: String, value: String },
    #[error("domain `{domain}` has booking slots but is not bookable")]
    BookingWithoutBookable { domain: String },
}

#[derive(Debug, Deserialize)]
struct RawOntology {
    #[serde(default)]
    domain: Vec<RawDomain>,
}

#[derive(Debug, Deserialize)]
struct RawDomain {
    name: String,
    #[serde(default)]
    bookable: bool,
    #[serde(default)]
    requestable: Vec<String>,
    #[serde(default)]
    informable: Vec<SlotSpec>,
    #[serde(default)]
    booking: Vec<SlotSpec>,
}

/// Parses and validates ontology TOML text.
pub fn load_ontology(config_text: &str) -> Result<Ontology, OntologyError> {
    let raw: RawOntology =
        toml::from_str(config_text).map_err(|e| OntologyError::Parse(e.to_string()))?;
    if raw.domain.is_empty() {
        return Err(OntologyError::NoDomains);
    }

    let mut domains = Vec::with_capacity(raw.domain.len());
    for d in raw.domain {
        if domains.iter().any(|x: &DomainSpec| x.name == d.name) {
            return Err(OntologyError::DuplicateDomain(d.name));
        }
        let spec = DomainSpec {
            name: d.name,
            informable: d.informable,
            requestable: d.requestable,
            bookable: d.bookable,
            booking: d.booking,
        };
        validate_domain(&spec)?;
        domains.push(spec);
    }
    Ok(Ontology { domains })
}

fn validate_domain(d: &DomainSpec) -> Result<(), OntologyError> {
    if !d.bookable && !d.booking.is_empty() {
        return Err(OntologyError::BookingWithoutBookable { domain: d.name.clone() });
    }

    // Informable, booking and requestable slots share one namespace per domain.
    let all_slots: Vec<&String> = d
        .informable
        .iter()
        .chain(&d.booking)
        .map(|s| &s.slot)
        .chain(&d.requestable)
        .collect();
    for (i, slot) in all_slots.iter().enumerate() {
        if all_slots[..i].contains(slot) {
            return Err(OntologyError::DuplicateSlot {
                domain: d.name.clone(),
                slot: (*slot).clone(),
            });
        }
    }

    for spec in d.informable.iter().chain(&d.booking) {
        if spec.values.is_empty() {
            return Err(OntologyError::EmptyValues {
                domain: d.name.clone(),
                slot: spec.slot.clone(),
            });
        }
        let mut seen = Vec::new();
        for v in &spec.values {
            if v == DONT_CARE || v == crate::acts::UNKNOWN_VALUE {
                return Err(OntologyError::ReservedValue {
                    domain: d.name.clone(),
                    slot: spec.slot.clone(),
                    value: v.clone(),
                });
            }
            if seen.contains(&v) {
                return Err(OntologyError::DuplicateValue {
                    domain: d.name.clone(),
                    slot: spec.slot.clone(),
                    value: v.clone(),
                });
            }
            seen.push(v);
        }
    }
    Ok(())
}

impl Ontology {
    /// Built-in desk-scale ontology (hotel, restaurant, taxi).
    pub fn desk_default() -> Ontology {
        load_ontology(DEFAULT_ONTOLOGY_TOML).expect("bundled ontology is valid")
    }

    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn domain_index(&self, name: &str) -> Option<usize> {
        self.domains.iter().position(|d| d.name == name)
    }
}

/// TOML source of the bundled desk ontology (also shipped to run dirs).
pub const DEFAULT_ONTOLOGY_TOML: &str = include_str!("../assets/ontology.default.toml");
