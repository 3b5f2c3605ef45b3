//! Line of sight and the per-agent observation planes.
//!
//! Visibility uses the supercover of the segment joining two cell centres:
//! every cell whose closed square the segment touches, including both side
//! cells when the segment passes exactly through a grid corner. The
//! supercover of `a -> b` is the supercover of `b -> a`, so visibility is
//! symmetric.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::env::{AgentId, GameState, Team};
use crate::error::Result;
use crate::grid::{Grid, Pos, Tile};

pub const PLANE_VISIBLE: usize = 0;
pub const PLANE_SELF: usize = 1;
pub const PLANE_TEAMMATES: usize = 2;
pub const PLANE_TARGET: usize = 3;
pub const PLANE_OPPONENTS: usize = 4;
pub const N_PLANES: usize = 5;

/// Packed binary planes, `channels x rows x cols`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitPlanes {
    channels: usize,
    rows: usize,
    cols: usize,
    words: Vec<u64>,
}

impl BitPlanes {
    pub fn new(channels: usize, rows: usize, cols: usize) -> Self {
        let bits = channels * rows * cols;
        Self { channels, rows, cols, words: vec![0; bits.div_ceil(64)] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    fn bit(&self, channel: usize, pos: Pos) -> usize {
        debug_assert!(channel < self.channels && pos.row < self.rows && pos.col < self.cols);
        (channel * self.rows + pos.row) * self.cols + pos.col
    }

    #[inline]
    pub fn get(&self, channel: usize, pos: Pos) -> bool {
        let b = self.bit(channel, pos);
        self.words[b / 64] >> (b % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, channel: usize, pos: Pos) {
        let b = self.bit(channel, pos);
        self.words[b / 64] |= 1 << (b % 64);
    }

    pub fn count(&self, channel: usize) -> usize {
        self.cells(channel).count()
    }

    /// Set cells of one channel in row-major order.
    pub fn cells(&self, channel: usize) -> impl Iterator<Item = Pos> + '_ {
        let cols = self.cols;
        (0..self.rows * self.cols)
            .map(move |i| Pos::new(i / cols, i % cols))
            .filter(move |&p| self.get(channel, p))
    }

    /// Writes the planes as 0/1 values, channel-major.
    pub fn write_dense<T: num_traits::Float>(&self, out: &mut [T]) {
        let n = self.channels * self.rows * self.cols;
        assert_eq!(out.len(), n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = if self.words[i / 64] >> (i % 64) & 1 == 1 { T::one() } else { T::zero() };
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn from_words(channels: usize, rows: usize, cols: usize, words: Vec<u64>) -> Option<Self> {
        let planes = Self::new(channels, rows, cols);
        (planes.words.len() == words.len()).then_some(Self { words, ..planes })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMask {
    pub owner: AgentId,
    pub mask: Vec<bool>,
    pub rows: usize,
    pub cols: usize,
}

impl VisibilityMask {
    pub fn get(&self, pos: Pos) -> bool {
        self.mask[pos.row * self.cols + pos.col]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&v| v).count()
    }
}

/// Five binary planes: visibility, self, teammates, target, visible opponents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub owner: AgentId,
    pub planes: BitPlanes,
}

impl Observation {
    pub fn team(&self) -> Team {
        self.owner.team
    }
}

/// Cells on the supercover of the segment between the centres of `a` and `b`,
/// in traversal order from `a`, both endpoints included.
pub fn supercover(a: Pos, b: Pos) -> Vec<Pos> {
    let (dr, dc) = (b.row as i64 - a.row as i64, b.col as i64 - a.col as i64);
    let (nr, nc) = (dr.abs(), dc.abs());
    let (sr, sc) = (dr.signum(), dc.signum());
    let (mut r, mut c) = (a.row as i64, a.col as i64);
    let (mut ir, mut ic) = (0i64, 0i64);
    let mut cells = Vec::with_capacity((nr + nc + 1) as usize);
    cells.push(a);
    let at = |r: i64, c: i64| Pos::new(r as usize, c as usize);
    while ir < nr || ic < nc {
        // Next horizontal grid line is crossed at t = (2ir+1)/(2nr), vertical at (2ic+1)/(2nc).
        let order = if ir == nr {
            Ordering::Greater
        } else if ic == nc {
            Ordering::Less
        } else {
            ((1 + 2 * ir) * nc).cmp(&((1 + 2 * ic) * nr))
        };
        match order {
            Ordering::Less => {
                r += sr;
                ir += 1;
            }
            Ordering::Greater => {
                c += sc;
                ic += 1;
            }
            Ordering::Equal => {
                // Exactly through a corner: both side cells are touched.
                cells.push(at(r + sr, c));
                cells.push(at(r, c + sc));
                r += sr;
                c += sc;
                ir += 1;
                ic += 1;
            }
        }
        cells.push(at(r, c));
    }
    cells
}

/// True iff no obstacle lies on the supercover of `a -> b`. `a` never blocks;
/// `b` blocks if it is itself an obstacle.
pub fn line_of_sight(grid: &Grid, a: Pos, b: Pos) -> Result<bool> {
    grid.check(a)?;
    grid.check(b)?;
    Ok(line_of_sight_unchecked(grid, a, b))
}

fn line_of_sight_unchecked(grid: &Grid, a: Pos, b: Pos) -> bool {
    if a == b {
        return true;
    }
    supercover(a, b).into_iter().skip(1).all(|p| !grid.is_obstacle(p))
}

/// Inclusive `(row range, col range)` of the sensing rectangle centred on `pos`,
/// clipped to the grid.
pub fn sensing_rect(
    grid: &Grid,
    pos: Pos,
    sense_length: usize,
    sense_width: usize,
) -> (core::ops::RangeInclusive<usize>, core::ops::RangeInclusive<usize>) {
    let (hr, hc) = (sense_width / 2, sense_length / 2);
    let rows = pos.row.saturating_sub(hr)..=(pos.row + hr).min(grid.rows() - 1);
    let cols = pos.col.saturating_sub(hc)..=(pos.col + hc).min(grid.cols() - 1);
    (rows, cols)
}

fn mask_at(grid: &Grid, pos: Pos, sense_length: usize, sense_width: usize) -> Vec<bool> {
    let mut mask = vec![false; grid.len()];
    let (rows, cols) = sensing_rect(grid, pos, sense_length, sense_width);
    for r in rows {
        for c in cols.clone() {
            let cell = Pos::new(r, c);
            if line_of_sight_unchecked(grid, pos, cell) {
                mask[grid.index(cell)] = true;
            }
        }
    }
    mask
}

pub fn visibility_mask(state: &GameState, agent: AgentId) -> Result<VisibilityMask> {
    let pos = state.position(agent)?;
    let cfg = &state.config;
    Ok(VisibilityMask {
        owner: agent,
        mask: mask_at(&state.grid, pos, cfg.sense_length, cfg.sense_width),
        rows: state.grid.rows(),
        cols: state.grid.cols(),
    })
}

pub fn observe(state: &GameState, agent: AgentId) -> Result<Observation> {
    let pos = state.position(agent)?;
    let grid = &state.grid;
    let cfg = &state.config;
    let mask = mask_at(grid, pos, cfg.sense_length, cfg.sense_width);
    let mut planes = BitPlanes::new(N_PLANES, grid.rows(), grid.cols());
    for (i, &visible) in mask.iter().enumerate() {
        if visible {
            planes.set(PLANE_VISIBLE, grid.pos_of(i));
        }
    }
    planes.set(PLANE_SELF, pos);
    for (i, &mate) in state.team_positions(agent.team).iter().enumerate() {
        if i != agent.index {
            planes.set(PLANE_TEAMMATES, mate);
        }
    }
    for &t in &state.targets {
        planes.set(PLANE_TARGET, t);
    }
    for &opp in state.team_positions(agent.team.opponent()) {
        if mask[grid.index(opp)] {
            planes.set(PLANE_OPPONENTS, opp);
        }
    }
    Ok(Observation { owner: agent, planes })
}

/// True if any target cell is visible in the observation.
pub fn target_visible(obs: &Observation) -> bool {
    obs.planes.cells(PLANE_TARGET).any(|t| obs.planes.get(PLANE_VISIBLE, t))
}

/// Number of target cells in a grid, for plane-count checks.
pub fn target_count(grid: &Grid) -> usize {
    grid.tiles().iter().filter(|&&t| t == Tile::Target).count()
}
