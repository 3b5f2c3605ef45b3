//! Multi-agent pursuit-evasion on an obstacle grid, with partial
//! observability, situation-report message topologies and small neural
//! Q-function learners.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs plus an explicit seeded random stream, so the
//! same `(config, seed, actions)` always yields the same bytes. File IO,
//! the command line and on-disk formats live in the companion `pursuit`
//! crate.
//!
//! Module map:
//!
//! * [`grid`] - coordinates, tiles and the cell map.
//! * [`env`] - game configuration, state, transition function and rewards.
//! * [`sensing`] - supercover line of sight, visibility masks, 5-plane observations.
//! * [`naive`] - BFS and the straight-line greedy baseline.
//! * [`comms`] - P2PSR/RSR topologies and situation reports.
//! * [`nn`], [`qlearning`] - networks, replay memory, schedules, Adam and the two learners.
//! * [`rollout`] - the episode loop, team policies, records and evaluation accounting.
//! * [`train`] - the epoch-level training driver.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod comms;
pub mod env;
pub mod error;
pub mod grid;
pub mod naive;
pub mod nn;
pub mod qlearning;
pub mod rollout;
pub mod sensing;
pub mod train;

pub use error::{Error, Result};
pub use grid::{Grid, Pos, Tile};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used everywhere in the crate.
pub type Rng = ChaCha8Rng;

/// Independent sub-streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Spawn = 0,
    Topology = 1,
    PursuerPolicy = 2,
    EvaderPolicy = 3,
    Init = 4,
    Replay = 5,
    Exploration = 6,
}

/// Builds the random stream `stream` of `seed`.
pub fn rng_for(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
