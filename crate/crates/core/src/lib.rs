//! Games on partially specified lossy channel systems where the controller
//! only observes part of the state.
//!
//! The crate decides safety and reachability objectives, extracts finite
//! observation-based strategies, and checks those strategies independently
//! by coverability on the product system.

pub mod cli;
pub mod model;
pub mod order;
pub mod reach;
pub mod safety;
pub mod semantics;
pub mod strategy;
pub mod verify;

pub use model::{parse_model, LcsModel, ModelError, ObjectiveKind};
pub use order::{GameState, Observation, Valuation};

/// Outcome of solving a game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Winner {
    ExistsWins,
    ForallWins,
}

impl std::fmt::Display for Winner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Winner::ExistsWins => write!(f, "ExistsWins"),
            Winner::ForallWins => write!(f, "ForallWins"),
        }
    }
}

/// Failures of the solvers that are not verdicts.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("objective is {found}, this solver needs {expected}")]
    WrongObjective { expected: ObjectiveKind, found: ObjectiveKind },
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("model is invalid: {0}")]
    InvalidModel(String),
}
