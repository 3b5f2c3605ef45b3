//! Text and raster frames of a recorded episode, one per state
//! (the initial state plus one per step).

use image::{Rgb, RgbImage};
use pursuit_core::env::GameState;
use pursuit_core::rollout::{EpisodeRecord, Snapshot};
use pursuit_core::{Grid, Pos, Tile};

use crate::error::{HarnessError, Result};

const EMPTY: Rgb<u8> = Rgb([255, 255, 255]);
const OBSTACLE: Rgb<u8> = Rgb([64, 64, 64]);
const TARGET: Rgb<u8> = Rgb([220, 30, 30]);
const PURSUER: Rgb<u8> = Rgb([30, 170, 60]);
const EVADER: Rgb<u8> = Rgb([40, 80, 230]);
const CAPTURED: Rgb<u8> = Rgb([150, 160, 200]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Empty,
    Obstacle,
    Target,
    Evader,
    Pursuer,
    Captured,
}

fn map_of(record: &EpisodeRecord) -> Result<Grid> {
    let state = GameState::new(&record.config, record.seed)
        .map_err(|e| HarnessError::CorruptRecord(format!("cannot rebuild map: {e}")))?;
    if Snapshot::of(&state) != record.initial {
        return Err(HarnessError::CorruptRecord("initial positions differ from the seeded map".into()));
    }
    Ok(state.grid)
}

fn snapshots(record: &EpisodeRecord) -> impl Iterator<Item = &Snapshot> {
    std::iter::once(&record.initial).chain(record.steps.iter().map(|s| &s.after))
}

/// Cell contents with precedence captured > pursuer > evader > terrain.
fn layers(grid: &Grid, snap: &Snapshot) -> Vec<Cell> {
    let mut cells: Vec<Cell> = grid
        .cells()
        .map(|p| match grid.get(p) {
            Tile::Empty => Cell::Empty,
            Tile::Obstacle => Cell::Obstacle,
            Tile::Target => Cell::Target,
        })
        .collect();
    let idx = |p: Pos| grid.index(p);
    for (i, &e) in snap.evaders.iter().enumerate() {
        if !snap.captured[i] {
            cells[idx(e)] = Cell::Evader;
        }
    }
    for &p in &snap.pursuers {
        cells[idx(p)] = Cell::Pursuer;
    }
    for (i, &e) in snap.evaders.iter().enumerate() {
        if snap.captured[i] {
            cells[idx(e)] = Cell::Captured;
        }
    }
    cells
}

/// One character grid per state: `#` obstacle, `T` target, `P` pursuer,
/// `E` evader, `x` captured evader, `.` empty.
pub fn text_frames(record: &EpisodeRecord) -> Result<Vec<String>> {
    let grid = map_of(record)?;
    Ok(snapshots(record)
        .map(|snap| {
            let cells = layers(&grid, snap);
            let mut out = String::with_capacity(grid.rows() * (grid.cols() + 1));
            for row in cells.chunks(grid.cols()) {
                out.extend(row.iter().map(|c| match c {
                    Cell::Empty => '.',
                    Cell::Obstacle => '#',
                    Cell::Target => 'T',
                    Cell::Evader => 'E',
                    Cell::Pursuer => 'P',
                    Cell::Captured => 'x',
                }));
                out.push('\n');
            }
            out
        })
        .collect())
}

/// One raster per state, `scale` pixels per cell: evaders blue, pursuers
/// green, target red.
pub fn image_frames(record: &EpisodeRecord, scale: u32) -> Result<Vec<RgbImage>> {
    let grid = map_of(record)?;
    let scale = scale.max(1);
    Ok(snapshots(record)
        .map(|snap| {
            let cells = layers(&grid, snap);
            RgbImage::from_fn(grid.cols() as u32 * scale, grid.rows() as u32 * scale, |x, y| {
                let cell = cells[(y / scale) as usize * grid.cols() + (x / scale) as usize];
                match cell {
                    Cell::Empty => EMPTY,
                    Cell::Obstacle => OBSTACLE,
                    Cell::Target => TARGET,
                    Cell::Evader => EVADER,
                    Cell::Pursuer => PURSUER,
                    Cell::Captured => CAPTURED,
                }
            })
        })
        .collect())
}
