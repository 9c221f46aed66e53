//! Assembling the dialog world (ontology plus entity database) from
//! configuration, and locating one next to a saved checkpoint so run
//! directories stay self-describing.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dqfd_dialog::db::EntityDatabase;
use dqfd_dialog::ontology::{load_ontology, DEFAULT_ONTOLOGY_TOML};
use dqfd_dialog::sim::EnvConfig;
use dqfd_dialog::world::{World, DESK_ENTITIES_PER_DOMAIN};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{runtime, usage, CliError};

/// Where the ontology and entity database come from.
#[derive(Debug, Clone, Default)]
pub struct WorldSources {
    pub ontology: Option<PathBuf>,
    pub db: Option<PathBuf>,
    pub db_seed: u64,
}

/// The assembled world plus the ontology text that produced it (kept so
/// run directories can persist a verbatim copy).
pub struct LoadedWorld {
    pub world: World,
    pub ontology_text: String,
    /// Human-readable provenance line for reports.
    pub describe: String,
}

pub fn build_world(src: &WorldSources) -> Result<LoadedWorld, CliError> {
    let (ontology_text, ontology_desc) = match &src.ontology {
        Some(path) => {
            if !path.is_file() {
                return Err(usage(format!("ontology file `{}` does not exist", path.display())));
            }
            let text = std::fs::read_to_string(path).map_err(runtime)?;
            (text, path.display().to_string())
        }
        None => (DEFAULT_ONTOLOGY_TOML.to_string(), "built-in desk ontology".to_string()),
    };
    let ontology = Arc::new(
        load_ontology(&ontology_text).map_err(|e| usage(format!("ontology: {e}")))?,
    );

    let (db, db_desc) = match &src.db {
        Some(path) => {
            if !path.is_file() {
                return Err(usage(format!("db file `{}` does not exist", path.display())));
            }
            let file = File::open(path).map_err(runtime)?;
            let db = EntityDatabase::read_jsonl(&ontology, BufReader::new(file))
                .map_err(runtime)?;
            (db, path.display().to_string())
        }
        None => {
            let mut rng = ChaCha12Rng::seed_from_u64(src.db_seed);
            let db = EntityDatabase::generate(&ontology, DESK_ENTITIES_PER_DOMAIN, &mut rng);
            (db, format!("generated (db_seed {})", src.db_seed))
        }
    };

    let describe = format!("world: ontology {ontology_desc}; database {db_desc}");
    let world = World::new(ontology, Arc::new(db), EnvConfig::default());
    Ok(LoadedWorld { world, ontology_text, describe })
}

/// Looks for `ontology.toml` and `db.jsonl` in the checkpoint's own
/// directory and one level up (a run directory keeps checkpoints in a
/// subfolder). Returns the pair when both are present.
pub fn near_checkpoint(checkpoint: &Path) -> Option<(PathBuf, PathBuf)> {
    let mut dirs = Vec::new();
    if let Some(dir) = checkpoint.parent() {
        dirs.push(dir.to_path_buf());
        if let Some(up) = dir.parent() {
            dirs.push(up.to_path_buf());
        }
    }
    for dir in dirs {
        let ontology = dir.join("ontology.toml");
        let db = dir.join("db.jsonl");
        if ontology.is_file() && db.is_file() {
            return Some((ontology, db));
        }
    }
    None
}

/// World resolution for checkpoint-consuming commands: explicit flags
/// win; otherwise files found near the checkpoint; otherwise the
/// built-in desk world.
pub fn world_for_checkpoint(
    checkpoint: &Path,
    explicit: &WorldSources,
) -> Result<LoadedWorld, CliError> {
    if explicit.ontology.is_some() || explicit.db.is_some() {
        return build_world(explicit);
    }
    if let Some((ontology, db)) = near_checkpoint(checkpoint) {
        return build_world(&WorldSources {
            ontology: Some(ontology),
            db: Some(db),
            db_seed: explicit.db_seed,
        });
    }
    build_world(explicit)
}
