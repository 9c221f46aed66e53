//! `dqfd-dialog`: train and inspect dialog policies learned from
//! demonstrations. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use dqfd_dialog_cli::commands::{
    cmd_chat, cmd_demo_collect, cmd_eval, cmd_train, cmd_trends, ChatArgs, DemoCollectArgs,
    EvalArgs, TrainArgs, TrendsArgs,
};
#[derive(Parser)]
#[command(
    name = "dqfd-dialog",
    version,
    about = "Train and inspect dialog policies learned from demonstrations"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Roll expert episodes and write a demonstration file.
    DemoCollect(DemoCollectArgs),
    /// Train a policy and persist a self-describing run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint with the greedy policy.
    Eval(EvalArgs),
    /// Talk to a trained policy on stdin/stdout.
    Chat(ChatArgs),
    /// Recompute trend curves from an episode log.
    Trends(TrendsArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.cmd {
        Cmd::DemoCollect(args) => cmd_demo_collect(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Chat(args) => cmd_chat(args),
        Cmd::Trends(args) => cmd_trends(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
