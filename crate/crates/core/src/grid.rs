//! Coordinates and the static cell map. Coordinates are `(row, col)`,
//! origin top-left, row-major.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Pos) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl From<(usize, usize)> for Pos {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Tile {
    #[default]
    Empty,
    Obstacle,
    Target,
}

/// A `rows x cols` cell map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    tiles: Vec<Tile>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, tiles: vec![Tile::Empty; rows * cols] }
    }

    /// Parses a picture such as `"..#\n.T."`: `#` obstacle, `T` target,
    /// anything else empty. Mostly useful in tests.
    pub fn from_ascii(picture: &str) -> Self {
        let lines: Vec<&str> =
            picture.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.chars().count());
        let mut grid = Self::new(rows, cols);
        for (r, line) in lines.iter().enumerate() {
            assert_eq!(line.chars().count(), cols, "ragged grid picture");
            for (c, ch) in line.chars().enumerate() {
                let tile = match ch {
                    '#' => Tile::Obstacle,
                    'T' => Tile::Target,
                    _ => Tile::Empty,
                };
                grid.set(Pos::new(r, c), tile);
            }
        }
        grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn in_bounds(&self, pos: Pos) -> bool {
        pos.row < self.rows && pos.col < self.cols
    }

    pub fn check(&self, pos: Pos) -> Result<()> {
        if self.in_bounds(pos) {
            Ok(())
        } else {
            Err(Error::OutOfBounds { row: pos.row, col: pos.col })
        }
    }

    #[inline]
    pub fn index(&self, pos: Pos) -> usize {
        pos.row * self.cols + pos.col
    }

    #[inline]
    pub fn pos_of(&self, index: usize) -> Pos {
        Pos::new(index / self.cols, index % self.cols)
    }

    #[inline]
    pub fn get(&self, pos: Pos) -> Tile {
        self.tiles[self.index(pos)]
    }

    pub fn set(&mut self, pos: Pos, tile: Tile) {
        let i = self.index(pos);
        self.tiles[i] = tile;
    }

    #[inline]
    pub fn is_obstacle(&self, pos: Pos) -> bool {
        self.get(pos) == Tile::Obstacle
    }

    /// In bounds and not an obstacle.
    #[inline]
    pub fn is_free(&self, pos: Pos) -> bool {
        self.in_bounds(pos) && !self.is_obstacle(pos)
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.tiles.len()).map(move |i| self.pos_of(i))
    }

    pub fn target_cells(&self) -> Vec<Pos> {
        self.cells().filter(|&p| self.get(p) == Tile::Target).collect()
    }

    /// The cell reached by moving one step `(dr, dc)`, if it is in bounds.
    #[inline]
    pub fn offset(&self, pos: Pos, dr: isize, dc: isize) -> Option<Pos> {
        let row = pos.row.checked_add_signed(dr)?;
        let col = pos.col.checked_add_signed(dc)?;
        let next = Pos::new(row, col);
        self.in_bounds(next).then_some(next)
    }

    /// 4-adjacent neighbours in the fixed order Up, Down, Left, Right.
    pub fn neighbors4(&self, pos: Pos) -> impl Iterator<Item = Pos> + '_ {
        [(-1, 0), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .filter_map(move |(dr, dc)| self.offset(pos, dr, dc))
    }

    /// Breadth-first distances from `sources` over non-obstacle cells.
    /// Unreachable cells hold `u32::MAX`.
    pub fn flood_distances(&self, sources: &[Pos]) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        let mut queue = alloc::collections::VecDeque::new();
        for &s in sources {
            if self.is_free(s) && dist[self.index(s)] == u32::MAX {
                dist[self.index(s)] = 0;
                queue.push_back(s);
            }
        }
        while let Some(p) = queue.pop_front() {
            let d = dist[self.index(p)];
            for n in self.neighbors4(p) {
                let i = self.index(n);
                if dist[i] == u32::MAX && !self.is_obstacle(n) {
                    dist[i] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }
}
