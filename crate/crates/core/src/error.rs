use thiserror::Error;

use crate::env::AgentId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid game config: {0}")]
    InvalidConfig(&'static str),
    #[error("no valid obstacle/spawn placement found after {attempts} attempts")]
    PlacementInfeasible { attempts: u32 },
    #[error("unknown agent {0:?}")]
    UnknownAgent(AgentId),
    #[error("step called on a finished episode")]
    EpisodeFinished,
    #[error("expected {expected} actions, got {got}")]
    ActionArityMismatch { expected: usize, got: usize },
    #[error("status is not terminal")]
    NonTerminalStatus,
    #[error("position ({row}, {col}) is out of bounds")]
    OutOfBounds { row: usize, col: usize },
    #[error("no path to goal")]
    NoPath,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("non-finite loss at update {update}")]
    NonFiniteLoss { update: u64 },
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(&'static str),
}
