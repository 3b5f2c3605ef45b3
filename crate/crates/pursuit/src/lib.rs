//! File formats, experiment drivers and the command line for the
//! pursuit-evasion learners in `pursuit-core`.
//!
//! * [`config`] - flat `key = value` settings, run configuration, config hashing.
//! * [`checkpoint`] - versioned binary parameter files.
//! * [`record`] - JSON-lines episode records with re-simulation checks.
//! * [`render`] - text and PNG frames of recorded episodes.
//! * [`run`] - training runs with metrics/checkpoints, checkpoint evaluation.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod record;
pub mod render;
pub mod run;

pub use error::{HarnessError, Result};
pub use pursuit_core as core;
