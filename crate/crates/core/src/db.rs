//! Entity databases backing the database domains of an ontology.
//!
//! Databases are synthesized deterministically from an RNG: informable
//! fields are drawn uniformly from the ontology value lists, requestable
//! fields get per-entity values (`phone-03`), so answering a request from
//! the wrong entity is detectable. Databases round-trip through a
//! line-delimited JSON dump so a run directory fully describes its world.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acts::DONT_CARE;
use crate::ontology::Ontology;

/// One database row: a named entity with one value per informable and
/// requestable slot of its domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityDatabase {
    domains: BTreeMap<String, Vec<Entity>>,
}

#[derive(Debug, Error)]
pub enum DbError {
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("domain `{0}` has no entity database")]
    NoDatabase(String),
    #[error("unknown slot `{slot}` for domain `{domain}`")]
    UnknownSlot { domain: String, slot: String },
    #[error("value `{value}` is not declared for slot `{slot}` of domain `{domain}`")]
    UnknownValue { domain: String, slot: String, value: String },
    #[error("dump line {line}: {msg}")]
    Dump { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EntityDatabase {
    /// Synthesizes `per_domain` entities for every database domain, in
    /// ontology order, consuming the RNG in a fixed sequence.
    pub fn generate(ontology: &Ontology, per_domain: usize, rng: &mut impl Rng) -> Self {
        let mut domains = BTreeMap::new();
        for domain in &ontology.domains {
            if !domain.has_database() {
                continue;
            }
            let mut entities = Vec::with_capacity(per_domain);
            for i in 0..per_domain {
                let mut fields = BTreeMap::new();
                for spec in &domain.informable {
                    let v = &spec.values[rng.random_range(0..spec.values.len())];
                    fields.insert(spec.slot.clone(), v.clone());
                }
                for slot in &domain.requestable {
                    fields.insert(slot.clone(), format!("{slot}-{i:02}"));
                }
                entities.push(Entity { name: format!("{}_{i:02}", domain.name), fields });
            }
            domains.insert(domain.name.clone(), entities);
        }
        EntityDatabase { domains }
    }

    pub fn empty() -> Self {
        EntityDatabase { domains: BTreeMap::new() }
    }

    pub fn entities(&self, domain: &str) -> Option<&[Entity]> {
        self.domains.get(domain).map(|v| v.as_slice())
    }

    /// Number of entities in `domain`, `None` for non-database domains.
    pub fn size(&self, domain: &str) -> Option<usize> {
        self.domains.get(domain).map(|v| v.len())
    }

    /// Entities of `domain` matching every non-wildcard constraint.
    ///
    /// Constraint keys must be informable slots of the domain (booking
    /// slots are ignored: they never filter) and non-wildcard values must
    /// be declared in the ontology.
    pub fn query<'a>(
        &'a self,
        ontology: &Ontology,
        domain: &str,
        constraints: &BTreeMap<String, String>,
    ) -> Result<Vec<&'a Entity>, DbError> {
        let spec = ontology
            .domain(domain)
            .ok_or_else(|| DbError::UnknownDomain(domain.to_owned()))?;
        let entities =
            self.domains.get(domain).ok_or_else(|| DbError::NoDatabase(domain.to_owned()))?;

        let mut filters: Vec<(&str, &str)> = Vec::new();
        for (slot, value) in constraints {
            if spec.booking_slot(slot).is_some() {
                continue;
            }
            let slot_spec = spec.informable_slot(slot).ok_or_else(|| DbError::UnknownSlot {
                domain: domain.to_owned(),
                slot: slot.clone(),
            })?;
            if value == DONT_CARE {
                continue;
            }
            if !slot_spec.has_value(value) {
                return Err(DbError::UnknownValue {
                    domain: domain.to_owned(),
                    slot: slot.clone(),
                    value: value.clone(),
                });
            }
            filters.push((slot, value));
        }

        Ok(entities
            .iter()
            .filter(|e| filters.iter().all(|(s, v)| e.fields.get(*s).map(String::as_str) == Some(*v)))
            .collect())
    }

    /// Number of matches for [`EntityDatabase::query`].
    pub fn count(
        &self,
        ontology: &Ontology,
        domain: &str,
        constraints: &BTreeMap<String, String>,
    ) -> Result<usize, DbError> {
        Ok(self.query(ontology, domain, constraints)?.len())
    }

    /// Writes one JSON record per entity, domains in map order.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), DbError> {
        for (domain, entities) in &self.domains {
            for entity in entities {
                let row = DumpRow { domain: domain.clone(), entity: entity.clone() };
                let line = serde_json::to_string(&row)
                    .map_err(|e| DbError::Dump { line: 0, msg: e.to_string() })?;
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }

    /// Reads a dump produced by [`EntityDatabase::write_jsonl`], checking
    /// every record against the ontology.
    pub fn read_jsonl(ontology: &Ontology, input: impl BufRead) -> Result<Self, DbError> {
        let mut domains: BTreeMap<String, Vec<Entity>> = BTreeMap::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let row: DumpRow = serde_json::from_str(&line)
                .map_err(|e| DbError::Dump { line: lineno, msg: e.to_string() })?;
            let spec = ontology
                .domain(&row.domain)
                .ok_or_else(|| DbError::Dump {
                    line: lineno,
                    msg: format!("unknown domain `{}`", row.domain),
                })?;
            if !spec.has_database() {
                return Err(DbError::Dump {
                    line: lineno,
                    msg: format!("domain `{}` has no database", row.domain),
                });
            }
            for (slot, value) in &row.entity.fields {
                if let Some(slot_spec) = spec.informable_slot(slot) {
                    if !slot_spec.has_value(value) {
                        return Err(DbError::Dump {
                            line: lineno,
                            msg: format!("undeclared value `{value}` for slot `{slot}`"),
                        });
                    }
                } else if !spec.is_requestable(slot) {
                    return Err(DbError::Dump {
                        line: lineno,
                        msg: format!("unknown slot `{slot}` for domain `{}`", row.domain),
                    });
                }
            }
            for spec_slot in spec.informable.iter().map(|s| &s.slot).chain(&spec.requestable) {
                if !row.entity.fields.contains_key(spec_slot) {
                    return Err(DbError::Dump {
                        line: lineno,
                        msg: format!("entity `{}` misses slot `{spec_slot}`", row.entity.name),
                    });
                }
            }
            domains.entry(row.domain).or_default().push(row.entity);
        }
        Ok(EntityDatabase { domains })
    }
}

#[derive(Serialize, Deserialize)]
struct DumpRow {
    domain: String,
    #[serde(flatten)]
    entity: Entity,
}
