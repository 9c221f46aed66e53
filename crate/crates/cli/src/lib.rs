//! Command-line front end for the dialog-policy trainer: demonstration
//! collection, training runs that leave self-describing directories
//! behind, checkpoint evaluation, an interactive REPL and trend
//! extraction from episode logs.

pub mod commands;
pub mod config;
pub mod error;
pub mod worldio;
