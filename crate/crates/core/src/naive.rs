//! The greedy baseline: head for the target along a straight line, and
//! switch to BFS shortest paths as soon as something worth chasing is
//! visible.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;

use crate::env::{Action, AgentId, Connectivity, GameState, Team};
use crate::error::{Error, Result};
use crate::grid::{Grid, Pos};
use crate::sensing::{target_visible, Observation, PLANE_TEAMMATES};
use crate::Rng;

/// Everything a naive agent is allowed to know when deciding.
#[derive(Debug, Clone)]
pub struct NaiveView<'a> {
    pub grid: &'a Grid,
    pub observation: &'a Observation,
    pub position: Pos,
    pub teammate_positions: Vec<Pos>,
    pub target_cells: &'a [Pos],
    /// Opponents inside the visibility mask that are still in play.
    pub visible_opponents: Vec<Pos>,
    pub connectivity: Connectivity,
}

impl<'a> NaiveView<'a> {
    pub fn new(state: &'a GameState, observation: &'a Observation) -> Result<Self> {
        let owner = observation.owner;
        let position = state.position(owner)?;
        let opponent = owner.team.opponent();
        let visible_opponents = state
            .team_positions(opponent)
            .iter()
            .enumerate()
            .filter(|&(i, &p)| {
                observation.planes.get(crate::sensing::PLANE_VISIBLE, p)
                    && !state.is_captured(AgentId { team: opponent, index: i })
            })
            .map(|(_, &p)| p)
            .collect();
        Ok(Self {
            grid: &state.grid,
            observation,
            position,
            teammate_positions: observation.planes.cells(PLANE_TEAMMATES).collect(),
            target_cells: &state.targets,
            visible_opponents,
            connectivity: state.config.connectivity,
        })
    }
}

/// Minimum-length 4-adjacent path over non-obstacle cells from `from` to any
/// cell of `to`, both ends included. Neighbours expand Up, Down, Left, Right.
pub fn bfs_shortest_path(grid: &Grid, from: Pos, to: &[Pos]) -> Result<Vec<Pos>> {
    grid.check(from)?;
    let mut is_goal = vec![false; grid.len()];
    for &g in to {
        if grid.in_bounds(g) {
            is_goal[grid.index(g)] = true;
        }
    }
    let mut parent = vec![usize::MAX; grid.len()];
    let start = grid.index(from);
    parent[start] = start;
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        let i = grid.index(p);
        if is_goal[i] {
            let mut path = vec![p];
            let mut cur = i;
            while cur != start {
                cur = parent[cur];
                path.push(grid.pos_of(cur));
            }
            path.reverse();
            return Ok(path);
        }
        for n in grid.neighbors4(p) {
            let j = grid.index(n);
            if parent[j] == usize::MAX && !grid.is_obstacle(n) {
                parent[j] = i;
                queue.push_back(n);
            }
        }
    }
    Err(Error::NoPath)
}

/// `(progress along from->goal, |perpendicular offset|)`, both scaled by the
/// segment length, in exact integers.
fn line_metrics(from: Pos, goal: Pos, cell: Pos) -> (i64, i64) {
    let (dr, dc) = (goal.row as i64 - from.row as i64, goal.col as i64 - from.col as i64);
    let (vr, vc) = (cell.row as i64 - from.row as i64, cell.col as i64 - from.col as i64);
    (vr * dr + vc * dc, (vr * dc - vc * dr).abs())
}

/// One step of straight-line travel from `from` toward `goal`.
///
/// The preferred cell is the progressing neighbour closest to the line; if
/// that is blocked, the agent picks uniformly among the free neighbours that
/// do not move backwards and sit closest to the line.
pub fn line_step(from: Pos, goal: Pos, grid: &Grid, rng: &mut Rng) -> Pos {
    if from == goal {
        return from;
    }
    let neighbors: Vec<(Pos, i64, i64)> = grid
        .neighbors4(from)
        .map(|n| {
            let (along, off) = line_metrics(from, goal, n);
            (n, along, off)
        })
        .collect();

    let closest = |cands: Vec<(Pos, i64, i64)>| -> Vec<Pos> {
        let best = cands.iter().map(|c| c.2).min();
        cands.into_iter().filter(|c| Some(c.2) == best).map(|c| c.0).collect()
    };

    let ideal = closest(neighbors.iter().copied().filter(|c| c.1 > 0).collect());
    let free_ideal: Vec<Pos> = ideal.into_iter().filter(|&p| !grid.is_obstacle(p)).collect();
    if let Some(&p) = free_ideal.choose(rng) {
        return p;
    }
    let detours = closest(
        neighbors.into_iter().filter(|c| c.1 >= 0 && !grid.is_obstacle(c.0)).collect(),
    );
    detours.choose(rng).copied().unwrap_or(from)
}

/// The naive agent's next action.
pub fn naive_decide(view: &NaiveView<'_>, role: Team, rng: &mut Rng) -> Action {
    let grid = view.grid;
    let here = view.position;

    let mut best: Option<Vec<Pos>> = None;
    let mut consider = |goals: &[Pos]| {
        if let Ok(path) = bfs_shortest_path(grid, here, goals) {
            if path.len() > 1 && best.as_ref().is_none_or(|b| path.len() < b.len()) {
                best = Some(path);
            }
        }
    };
    if target_visible(view.observation) {
        consider(view.target_cells);
    }
    if role == Team::Pursuer {
        for &opp in &view.visible_opponents {
            consider(&[opp]);
        }
    }

    let next = match best {
        Some(path) => path[1],
        None => {
            let dist = grid.flood_distances(&[here]);
            let goal = view
                .target_cells
                .iter()
                .copied()
                .min_by_key(|t| dist[grid.index(*t)])
                .unwrap_or(here);
            line_step(here, goal, grid, rng)
        }
    };
    let action = Action::between(here, next).unwrap_or(Action::Stay);
    if action == Action::Stay && view.connectivity == Connectivity::Four {
        // No stay move available: take the first free direction.
        return Action::ALL[..4]
            .iter()
            .copied()
            .find(|a| {
                let (dr, dc) = a.delta();
                grid.offset(here, dr, dc).is_some_and(|p| !grid.is_obstacle(p))
            })
            .unwrap_or(Action::Stay);
    }
    action
}
