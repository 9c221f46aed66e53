//! `trends`: recompute moving-average curves from an episode log.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use clap::Args;
use dqfd_dialog::agent::read_episode_rows;
use dqfd_dialog::eval::{trend_series, write_trends};

use crate::error::{runtime, usage, CliError};

#[derive(Debug, Args)]
pub struct TrendsArgs {
    /// Episode log (metrics.tsv from a run directory).
    #[arg(long, value_name = "FILE")]
    pub log: PathBuf,
    /// Trend file to write (must not exist).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Moving-average window, episodes.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
}

pub fn cmd_trends(args: &TrendsArgs) -> Result<(), CliError> {
    if args.window == 0 {
        return Err(usage("--window must be at least 1"));
    }
    if !args.log.is_file() {
        return Err(usage(format!("log file `{}` does not exist", args.log.display())));
    }
    if args.out.exists() {
        return Err(usage(format!(
            "output file `{}` already exists; trend files are never overwritten",
            args.out.display()
        )));
    }
    let log = File::open(&args.log).map_err(runtime)?;
    let rows = read_episode_rows(BufReader::new(log))
        .map_err(|e| runtime(anyhow::anyhow!("log file {}: {e}", args.log.display())))?;
    let points = trend_series(&rows, args.window);
    let out = File::create(&args.out).map_err(runtime)?;
    write_trends(BufWriter::new(out), &points).map_err(runtime)?;
    println!("wrote {} trend points to {}", points.len(), args.out.display());
    Ok(())
}
