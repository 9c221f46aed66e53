//! The five subcommands: demonstration collection, training,
//! evaluation, the interactive REPL and trend extraction.

pub mod chat;
pub mod demo_collect;
pub mod eval;
pub mod train;
pub mod trends;

pub use chat::{cmd_chat, ChatArgs};
pub use demo_collect::{cmd_demo_collect, DemoCollectArgs};
pub use eval::{cmd_eval, EvalArgs};
pub use train::{cmd_train, TrainArgs};
pub use trends::{cmd_trends, TrendsArgs};
