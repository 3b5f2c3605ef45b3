//! Reference implementations used as test oracles, written without reusing
//! the library's search or rasterisation code.
#![allow(dead_code)]

pub mod gradcheck;

use pursuit_core::env::{GameState, GameStatus};
use pursuit_core::rollout::EpisodeRecord;
use pursuit_core::{Grid, Pos, Rng, Tile};
use rand::Rng as _;

/// Grid with each cell an obstacle with probability `density`.
pub fn random_grid(rng: &mut Rng, rows: usize, cols: usize, density: f64) -> Grid {
    let mut grid = Grid::new(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            if rng.random_bool(density) {
                grid.set(Pos::new(r, c), Tile::Obstacle);
            }
        }
    }
    grid
}

pub fn random_free_cell(rng: &mut Rng, grid: &Grid) -> Option<Pos> {
    let free: Vec<Pos> = grid.cells().filter(|&p| !grid.is_obstacle(p)).collect();
    if free.is_empty() {
        None
    } else {
        Some(free[rng.random_range(0..free.len())])
    }
}

/// Shortest 4-adjacent distance from `from` to any cell of `to`, by repeated
/// relaxation sweeps until nothing changes. `None` when unreachable.
pub fn flood_distance(grid: &Grid, from: Pos, to: &[Pos]) -> Option<usize> {
    let (rows, cols) = (grid.rows(), grid.cols());
    let mut dist = vec![vec![usize::MAX; cols]; rows];
    dist[from.row][from.col] = 0;
    loop {
        let mut changed = false;
        for r in 0..rows {
            for c in 0..cols {
                if grid.is_obstacle(Pos::new(r, c)) {
                    continue;
                }
                let mut best = dist[r][c];
                if r > 0 {
                    best = best.min(dist[r - 1][c].saturating_add(1));
                }
                if r + 1 < rows {
                    best = best.min(dist[r + 1][c].saturating_add(1));
                }
                if c > 0 {
                    best = best.min(dist[r][c - 1].saturating_add(1));
                }
                if c + 1 < cols {
                    best = best.min(dist[r][c + 1].saturating_add(1));
                }
                if best < dist[r][c] {
                    dist[r][c] = best;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    to.iter().map(|t| dist[t.row][t.col]).filter(|&d| d != usize::MAX).min()
}

/// Cells touched by the segment between the centres of `a` and `b`, found by
/// sampling it at `k_max + 1` evenly spaced points. A sample on a cell border
/// touches every cell sharing that border. Grid-line crossings sit at
/// multiples of `1 / (2 |dr|)` and `1 / (2 |dc|)` of the segment and are at
/// least `1 / (2 |dr| |dc|)` apart, so with `k_max = 16 |dr| |dc|` every
/// crossing is sampled exactly and every crossed cell gets an interior sample.
/// Exact in integers.
pub fn dense_touched(a: Pos, b: Pos) -> Vec<Pos> {
    let (dr, dc) = (b.row as i64 - a.row as i64, b.col as i64 - a.col as i64);
    let k_max = if dr != 0 && dc != 0 { 16 * dr.abs() * dc.abs() } else { (16 * (dr.abs() + dc.abs())).max(1) };
    let span = 2 * k_max;
    let axis = |start: usize, d: i64, k: i64| -> Vec<i64> {
        let p = (2 * start as i64 + 1) * k_max + 2 * d * k;
        let cell = p.div_euclid(span);
        if p.rem_euclid(span) == 0 {
            vec![cell - 1, cell]
        } else {
            vec![cell]
        }
    };
    let mut out = Vec::new();
    for k in 0..=k_max {
        for r in axis(a.row, dr, k) {
            for c in axis(a.col, dc, k) {
                out.push(Pos::new(r as usize, c as usize));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Cells whose closed square meets the segment between the centres of `a`
/// and `b`, by a separating-axis test in doubled integer coordinates.
pub fn exact_touched(a: Pos, b: Pos) -> Vec<Pos> {
    let (ar, ac) = (2 * a.row as i64 + 1, 2 * a.col as i64 + 1);
    let (br, bc) = (2 * b.row as i64 + 1, 2 * b.col as i64 + 1);
    let mut out = Vec::new();
    for r in a.row.min(b.row)..=a.row.max(b.row) {
        for c in a.col.min(b.col)..=a.col.max(b.col) {
            let (r0, c0) = (2 * r as i64, 2 * c as i64);
            let corners = [(r0, c0), (r0 + 2, c0), (r0, c0 + 2), (r0 + 2, c0 + 2)];
            let side = |(pr, pc): (i64, i64)| ((br - ar) * (pc - ac) - (bc - ac) * (pr - ar)).signum();
            let signs: Vec<i64> = corners.iter().map(|&p| side(p)).collect();
            let separated = signs.iter().all(|&s| s > 0) || signs.iter().all(|&s| s < 0);
            if !separated {
                out.push(Pos::new(r, c));
            }
        }
    }
    out.sort();
    out
}

/// Visibility from a touched-cell set: nothing but `a` itself may be an obstacle.
pub fn visible_via(grid: &Grid, a: Pos, touched: &[Pos]) -> bool {
    touched.iter().all(|&p| p == a || !grid.is_obstacle(p))
}

/// Checks the environment invariants along a recorded episode: agents on free
/// in-bounds cells, unit speed, frozen and monotone captures, step counting,
/// a single terminal status, Draw only at the step limit, zero-sum rewards.
pub fn check_record(rec: &EpisodeRecord) -> Result<(), String> {
    let state = GameState::new(&rec.config, rec.seed).map_err(|e| e.to_string())?;
    let grid = &state.grid;
    let free = |p: Pos| grid.in_bounds(p) && !grid.is_obstacle(p);
    let mut prev = rec.initial.clone();
    let check_free = |snap: &pursuit_core::rollout::Snapshot, step: usize| -> Result<(), String> {
        for &p in snap.pursuers.iter().chain(&snap.evaders) {
            if !free(p) {
                return Err(format!("agent on blocked cell {p:?} at step {step}"));
            }
        }
        Ok(())
    };
    check_free(&prev, 0)?;
    if rec.steps.is_empty() {
        return Err("episode has no steps".into());
    }
    for (i, s) in rec.steps.iter().enumerate() {
        if s.step as usize != i {
            return Err(format!("step counter {} at index {i}", s.step));
        }
        let next = &s.after;
        check_free(next, i + 1)?;
        for (a, b) in prev.pursuers.iter().zip(&next.pursuers) {
            if a.manhattan(*b) > 1 {
                return Err(format!("pursuer jumped {a:?} -> {b:?}"));
            }
        }
        for (k, (a, b)) in prev.evaders.iter().zip(&next.evaders).enumerate() {
            let limit = if prev.captured[k] { 0 } else { 1 };
            if a.manhattan(*b) > limit {
                return Err(format!("evader {k} moved {a:?} -> {b:?} (captured {})", prev.captured[k]));
            }
            if prev.captured[k] && !next.captured[k] {
                return Err(format!("evader {k} capture reverted at step {i}"));
            }
        }
        let last = i + 1 == rec.steps.len();
        if s.status.is_terminal() != last {
            return Err(format!("terminal status {:?} at step {i} of {}", s.status, rec.steps.len()));
        }
        prev = next.clone();
    }
    let n = rec.steps.len() as u32;
    if n > rec.config.max_steps {
        return Err(format!("{n} steps exceed the limit {}", rec.config.max_steps));
    }
    if rec.status == GameStatus::Draw && n != rec.config.max_steps {
        return Err(format!("draw before the step limit at {n}"));
    }
    let total: f64 = rec.rewards.pursuers.iter().chain(&rec.rewards.evaders).sum();
    if total.abs() > 1e-12 {
        return Err(format!("rewards sum to {total}"));
    }
    if rec.status == GameStatus::Draw && rec.rewards.pursuers.iter().chain(&rec.rewards.evaders).any(|&r| r != 0.0) {
        return Err("draw with non-zero rewards".into());
    }
    Ok(())
}
