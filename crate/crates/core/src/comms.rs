//! Situation-report topologies and the per-step flag exchange.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::env::{AgentId, Team};
use crate::error::{Error, Result};
use crate::sensing::{target_visible, Observation, PLANE_OPPONENTS};
use crate::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum TopologyKind {
    /// Complete graph: every agent hears every other agent.
    P2psr,
    /// Random ring: every agent hears its two ring neighbours.
    Rsr,
}

impl TopologyKind {
    /// Width of the gathered report vector for a team of `n`.
    pub fn report_width(self, n: usize) -> usize {
        match self {
            TopologyKind::P2psr => n.saturating_sub(1),
            TopologyKind::Rsr if n >= 2 => 2,
            TopologyKind::Rsr => 0,
        }
    }
}

/// Message edges plus one temporal self-edge per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Topology {
    pub kind: TopologyKind,
    pub n_agents: usize,
    /// Cyclic agent order (identity for P2PSR).
    pub ring: Vec<usize>,
    /// Unordered pairs `(a, b)` with `a < b`, sorted.
    pub message_edges: Vec<(usize, usize)>,
}

impl Topology {
    pub fn temporal_edges(&self) -> usize {
        self.n_agents
    }

    pub fn report_width(&self) -> usize {
        self.kind.report_width(self.n_agents)
    }

    /// Position of each agent in the ring.
    fn ring_slot(&self, agent: usize) -> usize {
        self.ring.iter().position(|&a| a == agent).expect("agent is on the ring")
    }

    pub fn degree(&self, agent: usize) -> usize {
        self.message_edges.iter().filter(|&&(a, b)| a == agent || b == agent).count()
    }
}

fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
}

pub fn build_topology(kind: TopologyKind, n: usize, rng: &mut Rng) -> Topology {
    let mut ring: Vec<usize> = (0..n).collect();
    let message_edges = match kind {
        TopologyKind::P2psr => complete_edges(n),
        TopologyKind::Rsr => {
            ring.shuffle(rng);
            if n <= 3 {
                complete_edges(n)
            } else {
                let mut edges: Vec<(usize, usize)> = (0..n)
                    .map(|i| {
                        let (a, b) = (ring[i], ring[(i + 1) % n]);
                        (a.min(b), a.max(b))
                    })
                    .collect();
                edges.sort_unstable();
                edges
            }
        }
    };
    Topology { kind, n_agents: n, ring, message_edges }
}

/// 1 if an opponent or any target cell is inside the observation space.
pub fn report_flag(obs: &Observation) -> u8 {
    let sees_opponent = obs.planes.count(PLANE_OPPONENTS) > 0;
    u8::from(sees_opponent || target_visible(obs))
}

/// The report vector `agent` receives this step.
pub fn gather(topology: &Topology, flags: &[u8], agent: usize) -> Result<Vec<u8>> {
    let n = topology.n_agents;
    if agent >= n || flags.len() != n {
        return Err(Error::UnknownAgent(AgentId { team: Team::Pursuer, index: agent }));
    }
    Ok(match topology.kind {
        TopologyKind::P2psr => (0..n).filter(|&j| j != agent).map(|j| flags[j]).collect(),
        TopologyKind::Rsr => match n {
            0 | 1 => Vec::new(),
            2 => vec![flags[1 - agent]; 2],
            _ => {
                let slot = topology.ring_slot(agent);
                let pred = topology.ring[(slot + n - 1) % n];
                let succ = topology.ring[(slot + 1) % n];
                vec![flags[pred], flags[succ]]
            }
        },
    })
}
