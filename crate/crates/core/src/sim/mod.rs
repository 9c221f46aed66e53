//! Goal-driven user simulation: goals, agenda, environment, logs, scoring.

pub mod agenda;
pub mod env;
pub mod goal;
pub mod log;
pub mod report;

pub use agenda::Agenda;
pub use env::{resolve_action, DialogEnv, EnvConfig, EnvError, EnvStepResult};
pub use goal::{sample_goal, DomainGoal, GoalConfig, GoalError, UserGoal};
pub use log::{Actor, EpisodeLog, LogError, Outcome, TurnRecord};
pub use report::{
    booking_acceptable, constraints_communicated, evaluate_goal, value_correct, GoalReport,
};
