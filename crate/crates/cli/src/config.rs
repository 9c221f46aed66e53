//! Run configuration: preset defaults, config-file merging and
//! `--set` overrides.
//!
//! A run is configured in layers. The preset picks the base agent
//! schedule, a TOML config file (same shape as the snapshot written
//! into every run directory) is deep-merged over it, repeated
//! `--set key=value` flags patch individual fields by dotted path, and
//! dedicated command-line flags win over everything. The merged result
//! deserializes with unknown-field rejection, so typos fail loudly
//! instead of silently keeping a default.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dqfd_dialog::agent::{AgentConfig, Mode};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{runtime, usage, CliError};

/// Which agent schedule the configuration starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Desk-scale schedule (minutes per run).
    Desk,
    /// Full published schedule (~10x longer).
    Paper,
}

/// Demonstrator used by `demo-collect` (and recorded for provenance).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertChoice {
    /// Hand-written rule policy.
    Rule,
    /// Rule policy corrupted with uniform-random actions.
    Weak,
}

/// `--mode` flag values, mirroring the agent's training mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Dqn,
    Dqfd,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Dqn => Mode::Dqn,
            ModeArg::Dqfd => Mode::Dqfd,
        }
    }
}

/// Everything a training run needs, serialized verbatim into each run
/// directory as `config.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    /// Ontology TOML path; absent means the built-in desk ontology.
    pub ontology: Option<String>,
    /// Entity database JSONL path; absent means one generated from
    /// `db_seed`.
    pub db: Option<String>,
    pub db_seed: u64,
    /// Demonstration transitions file (required to train in dqfd mode).
    pub demos: Option<String>,
    /// Demonstrator behind `demos`, recorded for provenance.
    pub expert: ExpertChoice,
    /// Mistake probability of the weak demonstrator.
    pub error_rate: f64,
    /// Root RNG seeds; one run per seed.
    pub seeds: Vec<u64>,
    /// Run directory to create. Never reused: an existing path errors.
    pub out: Option<String>,
    /// Episodes in the final greedy evaluation report.
    pub eval_episodes: usize,
    /// Moving-average window (episodes) for trend curves.
    pub trend_window: usize,
    pub agent: AgentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: Preset::Desk,
            ontology: None,
            db: None,
            db_seed: 5,
            demos: None,
            expert: ExpertChoice::Rule,
            error_rate: 0.3,
            seeds: Vec::new(),
            out: None,
            eval_episodes: 100,
            trend_window: 100,
            agent: AgentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn with_preset(preset: Preset) -> RunConfig {
        let agent = match preset {
            Preset::Desk => AgentConfig::default(),
            Preset::Paper => AgentConfig::paper_scale(),
        };
        RunConfig { preset, agent, ..RunConfig::default() }
    }
}

/// Configuration-layer flags shared by commands that build a [`RunConfig`].
#[derive(Debug, Default, Clone, Args)]
pub struct ConfigArgs {
    /// Configuration file (TOML, same shape as the run-dir snapshot).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Agent schedule preset to start from (overrides the file's choice).
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Override any config field by dotted path, e.g.
    /// --set agent.gamma=0.95 or --set agent.replay.alpha=0.7.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

/// Builds a [`RunConfig`] from preset, optional config file and `--set`
/// overrides, in that order of precedence (later wins).
pub fn assemble(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let file_table = match &args.config {
        None => None,
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
            let table = text
                .parse::<Table>()
                .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
            Some(table)
        }
    };

    // The preset decides the base table, so resolve it before merging.
    let preset = args
        .preset
        .or_else(|| {
            let name = file_table.as_ref()?.get("preset")?.as_str()?;
            Preset::from_str(name, true).ok()
        })
        .unwrap_or(Preset::Desk);

    let base = RunConfig::with_preset(preset);
    let text = toml::to_string(&base).map_err(runtime)?;
    let mut table = text.parse::<Table>().map_err(runtime)?;

    if let Some(file) = file_table {
        deep_merge(&mut table, file);
    }
    for spec in &args.sets {
        apply_set(&mut table, spec)?;
    }

    let mut cfg: RunConfig = table.try_into().map_err(|e| usage(format!("config: {e}")))?;
    if args.preset.is_some() {
        cfg.preset = preset;
    }
    Ok(cfg)
}

/// Recursively overlays `over` onto `base`; scalar-vs-table conflicts
/// are resolved in favor of `over` and caught at deserialization.
fn deep_merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Applies one `--set KEY=VALUE` override by dotted path.
fn apply_set(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let Some((key, raw)) = spec.split_once('=') else {
        return Err(usage(format!("--set expects KEY=VALUE, got `{spec}`")));
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(usage(format!("--set {key}: empty path segment")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| usage(format!("--set {key}: `{part}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_scalar(raw));
    Ok(())
}

/// Parses a `--set` value as a TOML literal, falling back to a string
/// so paths and enum names need no quoting.
fn parse_scalar(raw: &str) -> Value {
    format!("x = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Checks a [`RunConfig`] against the training contract: a valid agent
/// schedule, at least one seed, an unused output path, demonstrations
/// exactly when the mode wants them, and every referenced path present.
pub fn validate_for_train(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.agent.validate().map_err(|e| usage(format!("agent config: {e}")))?;
    if cfg.seeds.is_empty() {
        return Err(usage("at least one --seed is required"));
    }
    if cfg.eval_episodes == 0 {
        return Err(usage("eval_episodes must be at least 1"));
    }
    if cfg.trend_window == 0 {
        return Err(usage("trend_window must be at least 1"));
    }
    match (cfg.agent.mode, &cfg.demos) {
        (Mode::Dqfd, None) => {
            return Err(usage(
                "missing demonstrations: dqfd training needs --demos FILE \
                 (collect one with `dqfd-dialog demo-collect`)",
            ));
        }
        (Mode::Dqn, Some(_)) => {
            return Err(usage(
                "plain dqn ignores demonstrations; drop --demos or train with --mode dqfd",
            ));
        }
        _ => {}
    }
    for (label, path) in [
        ("ontology", &cfg.ontology),
        ("db", &cfg.db),
        ("demos", &cfg.demos),
    ] {
        if let Some(p) = path {
            if !Path::new(p).is_file() {
                return Err(usage(format!("{label} file `{p}` does not exist")));
            }
        }
    }
    let Some(out) = &cfg.out else {
        return Err(usage("--out DIR is required"));
    };
    if Path::new(out).exists() {
        return Err(usage(format!(
            "output path `{out}` already exists; run directories are append-only, pick a fresh path"
        )));
    }
    Ok(())
}
