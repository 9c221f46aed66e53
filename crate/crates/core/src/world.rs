//! Bundles the immutable pieces an experiment runs against — ontology,
//! entity database, enumerated action space, featurizer, environment
//! knobs — so trainers, evaluators, and the CLI stamp out identical
//! environments from one handle.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::actions::{enumerate_actions, ActionSpace};
use crate::db::EntityDatabase;
use crate::featurize::Featurizer;
use crate::ontology::Ontology;
use crate::sim::env::{DialogEnv, EnvConfig};

/// Default entities generated per database domain.
pub const DESK_ENTITIES_PER_DOMAIN: usize = 12;

#[derive(Clone)]
pub struct World {
    pub ontology: Arc<Ontology>,
    pub db: Arc<EntityDatabase>,
    pub actions: Arc<ActionSpace>,
    pub featurizer: Arc<Featurizer>,
    pub env: EnvConfig,
}

impl World {
    pub fn new(ontology: Arc<Ontology>, db: Arc<EntityDatabase>, env: EnvConfig) -> Self {
        let actions = Arc::new(enumerate_actions(&ontology));
        let featurizer = Arc::new(Featurizer::new(Arc::clone(&ontology)));
        World { ontology, db, actions, featurizer, env }
    }

    /// Desk-scale world: the built-in ontology and a database generated
    /// from `db_seed`.
    pub fn desk(db_seed: u64) -> Self {
        let ontology = Arc::new(Ontology::desk_default());
        let db = Arc::new(EntityDatabase::generate(
            &ontology,
            DESK_ENTITIES_PER_DOMAIN,
            &mut ChaCha12Rng::seed_from_u64(db_seed),
        ));
        World::new(ontology, db, EnvConfig::default())
    }

    pub fn make_env(&self) -> DialogEnv {
        DialogEnv::new(
            Arc::clone(&self.ontology),
            Arc::clone(&self.db),
            Arc::clone(&self.actions),
            self.env.clone(),
        )
    }

    pub fn feature_len(&self) -> usize {
        self.featurizer.len()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }
}
