//! Task-oriented dialog RL at desk scale.
//!
//! The crate builds the whole experimental loop: an ontology-driven
//! dialog world (entities, tracked state, binary features, enumerated
//! actions), an agenda-based user simulator with goal scoring, scripted
//! expert policies, a prioritized replay buffer with a protected
//! demonstration partition, a small dueling double Q-network trained
//! with a rectified-moment optimizer, and the training/evaluation
//! drivers that tie them together.

pub mod actions;
pub mod acts;
pub mod agent;
pub mod db;
pub mod eval;
pub mod expert;
pub mod featurize;
pub mod ontology;
pub mod qnet;
pub mod replay;
pub mod sim;
pub mod state;
pub mod world;

pub use actions::{enumerate_actions, ActionSpace, ActionTemplate};
pub use acts::{DialogAct, Intent, DONT_CARE, UNKNOWN_VALUE};
pub use db::{DbError, Entity, EntityDatabase};
pub use featurize::{feature_len, featurize, featurize_into, Featurizer};
pub use ontology::{load_ontology, DomainSpec, Ontology, OntologyError, SlotSpec};
pub use state::{track_state, DialogState, DomainState};
pub use world::World;
