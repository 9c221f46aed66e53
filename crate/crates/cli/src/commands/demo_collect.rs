//! `demo-collect`: roll expert episodes and write a demonstration file.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use dqfd_dialog::agent::collect_expert_episode;
use dqfd_dialog::expert::ExpertKind;
use dqfd_dialog::replay::{write_demo_file, DemoHeader, Transition};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::config::ExpertChoice;
use crate::error::{runtime, usage, CliError};
use crate::worldio::{build_world, WorldSources};

#[derive(Debug, Args)]
pub struct DemoCollectArgs {
    /// Demonstration file to write (must not exist).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Root RNG seed for goals and expert mistakes.
    #[arg(long)]
    pub seed: u64,
    /// Expert episodes to roll.
    #[arg(long, default_value_t = 500)]
    pub episodes: u32,
    /// Which demonstrator to use.
    #[arg(long, value_enum, default_value_t = ExpertChoice::Rule)]
    pub expert: ExpertChoice,
    /// Mistake probability of the weak demonstrator.
    #[arg(long, default_value_t = 0.3)]
    pub error_rate: f64,
    /// Warn when the collected success rate falls below this fraction.
    #[arg(long, default_value_t = 0.5)]
    pub warn_floor: f64,
    /// Ontology TOML (defaults to the built-in desk ontology).
    #[arg(long, value_name = "FILE")]
    pub ontology: Option<PathBuf>,
    /// Entity database JSONL (defaults to one generated from --db-seed).
    #[arg(long, value_name = "FILE")]
    pub db: Option<PathBuf>,
    /// Seed for the generated entity database.
    #[arg(long, default_value_t = 5)]
    pub db_seed: u64,
}

pub fn cmd_demo_collect(args: &DemoCollectArgs) -> Result<(), CliError> {
    if args.episodes == 0 {
        return Err(usage(
            "refusing to write an empty demo set: --episodes must be at least 1",
        ));
    }
    if args.out.exists() {
        return Err(usage(format!(
            "output file `{}` already exists; demo files are never overwritten",
            args.out.display()
        )));
    }
    let kind = match args.expert {
        ExpertChoice::Rule => ExpertKind::Rule,
        ExpertChoice::Weak => {
            if !(0.0..=1.0).contains(&args.error_rate) {
                return Err(usage(format!(
                    "--error-rate must lie in [0,1], got {}",
                    args.error_rate
                )));
            }
            ExpertKind::Weak { error_rate: args.error_rate }
        }
    };

    let loaded = build_world(&WorldSources {
        ontology: args.ontology.clone(),
        db: args.db.clone(),
        db_seed: args.db_seed,
    })?;
    let mut env = loaded.world.make_env();
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);

    let mut transitions: Vec<Transition> = Vec::new();
    let mut successes = 0u32;
    for _ in 0..args.episodes {
        let (episode, outcome) =
            collect_expert_episode(&mut env, &loaded.world.featurizer, kind, &mut rng)
                .map_err(runtime)?;
        transitions.extend(episode);
        successes += u32::from(outcome.success);
    }

    let header = DemoHeader {
        vec_len: loaded.world.feature_len(),
        action_count: loaded.world.action_count(),
    };
    let file = File::create(&args.out).map_err(runtime)?;
    write_demo_file(BufWriter::new(file), header, &transitions).map_err(runtime)?;

    let sr = f64::from(successes) / f64::from(args.episodes);
    println!(
        "collected {} episodes ({} transitions) at success rate {:.1}%",
        args.episodes,
        transitions.len(),
        100.0 * sr
    );
    println!("wrote {}", args.out.display());
    if sr < args.warn_floor {
        println!(
            "warning: demonstration success rate {:.1}% is below the {:.0}% floor; \
             policies trained on these demonstrations may underperform",
            100.0 * sr,
            100.0 * args.warn_floor
        );
    }
    Ok(())
}
