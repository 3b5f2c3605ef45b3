//! The game world: configuration, spawning, the synchronous transition
//! function and terminal rewards.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Pos, Tile};
use crate::{rng_for, Rng, Stream};

/// Upper bound on whole-layout resamples in [`GameState::new`].
pub const MAX_PLACEMENT_ATTEMPTS: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Team {
    Pursuer,
    Evader,
}

impl Team {
    pub fn opponent(self) -> Team {
        match self {
            Team::Pursuer => Team::Evader,
            Team::Evader => Team::Pursuer,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Team::Pursuer => "pursuers",
            Team::Evader => "evaders",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct AgentId {
    pub team: Team,
    pub index: usize,
}

impl AgentId {
    pub const fn pursuer(index: usize) -> Self {
        Self { team: Team::Pursuer, index }
    }

    pub const fn evader(index: usize) -> Self {
        Self { team: Team::Evader, index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay => (0, 0),
        }
    }

    /// The move taking `from` to the 4-adjacent (or identical) cell `to`.
    pub fn between(from: Pos, to: Pos) -> Option<Action> {
        let dr = to.row as isize - from.row as isize;
        let dc = to.col as isize - from.col as isize;
        Self::ALL.into_iter().find(|a| a.delta() == (dr, dc))
    }

    pub fn glyph(self) -> char {
        match self {
            Action::Up => 'U',
            Action::Down => 'D',
            Action::Left => 'L',
            Action::Right => 'R',
            Action::Stay => 'S',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Connectivity {
    Four,
    #[default]
    FourPlusStay,
}

impl Connectivity {
    /// Size of the per-agent action space seen by learners.
    pub fn action_count(self) -> usize {
        match self {
            Connectivity::Four => 4,
            Connectivity::FourPlusStay => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum GameStatus {
    Ongoing,
    EvadersWinTarget,
    PursuersWinTarget,
    PursuersWinCaptureAll,
    Draw,
}

impl GameStatus {
    pub const TERMINAL: [GameStatus; 4] = [
        GameStatus::EvadersWinTarget,
        GameStatus::PursuersWinTarget,
        GameStatus::PursuersWinCaptureAll,
        GameStatus::Draw,
    ];

    pub fn is_terminal(self) -> bool {
        self != GameStatus::Ongoing
    }

    pub fn pursuers_win(self) -> bool {
        matches!(self, GameStatus::PursuersWinTarget | GameStatus::PursuersWinCaptureAll)
    }

    pub fn name(self) -> &'static str {
        match self {
            GameStatus::Ongoing => "ongoing",
            GameStatus::EvadersWinTarget => "evaders_win_target",
            GameStatus::PursuersWinTarget => "pursuers_win_target",
            GameStatus::PursuersWinCaptureAll => "pursuers_win_capture_all",
            GameStatus::Draw => "draw",
        }
    }
}

/// Team-total terminal rewards.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RewardSpec {
    pub evader_win: f64,
    pub pursuer_lose_target: f64,
    pub pursuer_win_target: f64,
    pub evader_lose_target: f64,
    pub pursuer_capture_all: f64,
    pub evader_all_captured: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            evader_win: 0.5,
            pursuer_lose_target: -0.5,
            pursuer_win_target: 0.5,
            evader_lose_target: -0.5,
            pursuer_capture_all: 1.0,
            evader_all_captured: -1.0,
        }
    }
}

impl RewardSpec {
    /// `(pursuer team total, evader team total)` for a terminal status.
    pub fn team_totals(&self, status: GameStatus) -> Result<(f64, f64)> {
        Ok(match status {
            GameStatus::Ongoing => return Err(Error::NonTerminalStatus),
            GameStatus::EvadersWinTarget => (self.pursuer_lose_target, self.evader_win),
            GameStatus::PursuersWinTarget => (self.pursuer_win_target, self.evader_lose_target),
            GameStatus::PursuersWinCaptureAll => {
                (self.pursuer_capture_all, self.evader_all_captured)
            }
            GameStatus::Draw => (0.0, 0.0),
        })
    }

    pub fn is_zero_sum(&self) -> bool {
        self.evader_win + self.pursuer_lose_target == 0.0
            && self.pursuer_win_target + self.evader_lose_target == 0.0
            && self.pursuer_capture_all + self.evader_all_captured == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GameConfig {
    /// Columns.
    pub width: usize,
    /// Rows.
    pub height: usize,
    pub n_pursuers: usize,
    pub n_evaders: usize,
    /// Horizontal extent of the sensing rectangle (odd).
    pub sense_length: usize,
    /// Vertical extent of the sensing rectangle (odd).
    pub sense_width: usize,
    pub speed: usize,
    pub target_size: usize,
    pub obstacle_count: usize,
    pub obstacle_size_min: usize,
    pub obstacle_size_max: usize,
    pub max_steps: u32,
    pub connectivity: Connectivity,
    pub seed: u64,
    pub rewards: RewardSpec,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            n_pursuers: 2,
            n_evaders: 2,
            sense_length: 9,
            sense_width: 9,
            speed: 1,
            target_size: 4,
            obstacle_count: 10,
            obstacle_size_min: 1,
            obstacle_size_max: 4,
            max_steps: 512,
            connectivity: Connectivity::FourPlusStay,
            seed: 0,
            rewards: RewardSpec::default(),
        }
    }
}

impl GameConfig {
    /// The scaled-down 16x16 profile used for desk-scale training.
    pub fn desk() -> Self {
        Self {
            width: 16,
            height: 16,
            sense_length: 7,
            sense_width: 7,
            obstacle_count: 4,
            obstacle_size_min: 1,
            obstacle_size_max: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg| Err(Error::InvalidConfig(msg));
        if self.width < 4 || self.height < 4 {
            return fail("grid must be at least 4x4");
        }
        if self.n_pursuers == 0 || self.n_evaders == 0 {
            return fail("each team needs at least one agent");
        }
        if self.sense_length.is_multiple_of(2) || self.sense_width.is_multiple_of(2) {
            return fail("sensing rectangle sides must be odd");
        }
        if self.speed != 1 {
            return fail("speed is fixed at 1 cell per step");
        }
        if self.target_size == 0 {
            return fail("target_size must be at least 1");
        }
        if self.obstacle_size_min == 0 || self.obstacle_size_min > self.obstacle_size_max {
            return fail("obstacle size range must satisfy 1 <= min <= max");
        }
        if self.max_steps == 0 {
            return fail("max_steps must be at least 1");
        }
        if !self.rewards.is_zero_sum() {
            return fail("reward spec must be zero-sum");
        }
        Ok(())
    }

    pub fn team_size(&self, team: Team) -> usize {
        match team {
            Team::Pursuer => self.n_pursuers,
            Team::Evader => self.n_evaders,
        }
    }

    pub fn action_count(&self) -> usize {
        self.connectivity.action_count()
    }
}

/// Per-agent rewards for one transition.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TeamRewards {
    pub pursuers: Vec<f64>,
    pub evaders: Vec<f64>,
}

impl TeamRewards {
    pub fn zeros(n_pursuers: usize, n_evaders: usize) -> Self {
        Self { pursuers: vec![0.0; n_pursuers], evaders: vec![0.0; n_evaders] }
    }

    pub fn team(&self, team: Team) -> &[f64] {
        match team {
            Team::Pursuer => &self.pursuers,
            Team::Evader => &self.evaders,
        }
    }

    /// Sum over every agent, pursuers first.
    pub fn total(&self) -> f64 {
        self.pursuers.iter().chain(&self.evaders).sum()
    }
}

/// Splits a terminal outcome's team totals evenly within each team.
pub fn outcome_rewards(
    status: GameStatus,
    spec: &RewardSpec,
    n_pursuers: usize,
    n_evaders: usize,
) -> Result<TeamRewards> {
    let (p, e) = spec.team_totals(status)?;
    Ok(TeamRewards {
        pursuers: vec![p / n_pursuers as f64; n_pursuers],
        evaders: vec![e / n_evaders as f64; n_evaders],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub status: GameStatus,
    pub rewards: TeamRewards,
}

/// Full world truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub config: GameConfig,
    pub grid: Grid,
    pub targets: Vec<Pos>,
    pub pursuers: Vec<Pos>,
    pub evaders: Vec<Pos>,
    pub evader_captured: Vec<bool>,
    pub step: u32,
    pub status: GameStatus,
}

impl GameState {
    /// Spawns a fresh game. Obstacles are random axis-aligned rectangles;
    /// the whole layout is resampled until every spawn cell can reach every
    /// target cell.
    pub fn new(config: &GameConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, Stream::Spawn);
        let shapes = target_placements(config);
        if shapes.is_empty() {
            return Err(Error::PlacementInfeasible { attempts: 0 });
        }
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            if let Some(state) = try_layout(config, &shapes, &mut rng) {
                return Ok(state);
            }
        }
        Err(Error::PlacementInfeasible { attempts: MAX_PLACEMENT_ATTEMPTS })
    }

    /// Assembles a state from explicit parts (scripted scenarios and tests).
    pub fn from_parts(
        config: GameConfig,
        grid: Grid,
        pursuers: Vec<Pos>,
        evaders: Vec<Pos>,
    ) -> Result<Self> {
        config.validate()?;
        if grid.rows() != config.height || grid.cols() != config.width {
            return Err(Error::InvalidConfig("grid size differs from config"));
        }
        if pursuers.len() != config.n_pursuers || evaders.len() != config.n_evaders {
            return Err(Error::InvalidConfig("agent count differs from config"));
        }
        for &p in pursuers.iter().chain(&evaders) {
            if !grid.is_free(p) {
                return Err(Error::InvalidConfig("agent placed off-grid or on an obstacle"));
            }
        }
        let targets = grid.target_cells();
        let n_evaders = evaders.len();
        Ok(Self {
            config,
            grid,
            targets,
            pursuers,
            evaders,
            evader_captured: vec![false; n_evaders],
            step: 0,
            status: GameStatus::Ongoing,
        })
    }

    pub fn team_positions(&self, team: Team) -> &[Pos] {
        match team {
            Team::Pursuer => &self.pursuers,
            Team::Evader => &self.evaders,
        }
    }

    pub fn position(&self, agent: AgentId) -> Result<Pos> {
        self.team_positions(agent.team)
            .get(agent.index)
            .copied()
            .ok_or(Error::UnknownAgent(agent))
    }

    pub fn is_captured(&self, agent: AgentId) -> bool {
        agent.team == Team::Evader && self.evader_captured.get(agent.index) == Some(&true)
    }

    pub fn all_captured(&self) -> bool {
        self.evader_captured.iter().all(|&c| c)
    }

    pub fn legal_actions(&self, agent: AgentId) -> Result<Vec<Action>> {
        let pos = self.position(agent)?;
        if self.is_captured(agent) {
            return Ok(vec![Action::Stay]);
        }
        let allowed: &[Action] = match self.config.connectivity {
            Connectivity::Four => &Action::ALL[..4],
            Connectivity::FourPlusStay => &Action::ALL,
        };
        Ok(allowed
            .iter()
            .copied()
            .filter(|a| {
                let (dr, dc) = a.delta();
                self.grid.offset(pos, dr, dc).is_some_and(|p| !self.grid.is_obstacle(p))
            })
            .collect())
    }

    /// Where `action` takes an agent at `pos`; illegal moves resolve to staying.
    pub fn resolve_move(&self, pos: Pos, action: Action) -> Pos {
        let (dr, dc) = action.delta();
        match self.grid.offset(pos, dr, dc) {
            Some(next) if !self.grid.is_obstacle(next) => next,
            _ => pos,
        }
    }

    /// Applies one synchronous move of every agent. Actions of captured
    /// evaders are ignored.
    pub fn step(&mut self, pursuer_actions: &[Action], evader_actions: &[Action]) -> Result<StepOutcome> {
        if self.status.is_terminal() {
            return Err(Error::EpisodeFinished);
        }
        if pursuer_actions.len() != self.pursuers.len() {
            return Err(Error::ActionArityMismatch {
                expected: self.pursuers.len(),
                got: pursuer_actions.len(),
            });
        }
        if evader_actions.len() != self.evaders.len() {
            return Err(Error::ActionArityMismatch {
                expected: self.evaders.len(),
                got: evader_actions.len(),
            });
        }

        let old_pursuers = self.pursuers.clone();
        let old_evaders = self.evaders.clone();
        for (i, &a) in pursuer_actions.iter().enumerate() {
            self.pursuers[i] = self.resolve_move(old_pursuers[i], a);
        }
        for (i, &a) in evader_actions.iter().enumerate() {
            if !self.evader_captured[i] {
                self.evaders[i] = self.resolve_move(old_evaders[i], a);
            }
        }

        // Co-location or a pursuer/evader swap captures.
        for e in 0..self.evaders.len() {
            if self.evader_captured[e] {
                continue;
            }
            let (e_old, e_new) = (old_evaders[e], self.evaders[e]);
            let caught = self.pursuers.iter().zip(&old_pursuers).any(|(&p_new, &p_old)| {
                p_new == e_new || (p_new == e_old && p_old == e_new)
            });
            if caught {
                self.evader_captured[e] = true;
            }
        }

        self.step += 1;
        let on_target = |p: &Pos| self.grid.get(*p) == Tile::Target;
        let status = if self
            .evaders
            .iter()
            .zip(&self.evader_captured)
            .any(|(p, &captured)| !captured && on_target(p))
        {
            GameStatus::EvadersWinTarget
        } else if self.pursuers.iter().any(on_target) {
            GameStatus::PursuersWinTarget
        } else if self.all_captured() {
            GameStatus::PursuersWinCaptureAll
        } else if self.step >= self.config.max_steps {
            GameStatus::Draw
        } else {
            GameStatus::Ongoing
        };
        self.status = status;

        let rewards = if status.is_terminal() {
            outcome_rewards(status, &self.config.rewards, self.pursuers.len(), self.evaders.len())?
        } else {
            TeamRewards::zeros(self.pursuers.len(), self.evaders.len())
        };
        Ok(StepOutcome { status, rewards })
    }
}

/// Cell offsets of the target footprint: a filled square of side
/// `ceil(sqrt(t))`, truncated row-major to `t` cells.
pub fn target_shape(target_size: usize) -> Vec<(usize, usize)> {
    let mut side = 1;
    while side * side < target_size {
        side += 1;
    }
    (0..target_size).map(|i| (i / side, i % side)).collect()
}

/// Every top-left anchor whose footprint fits, stays clear of the spawn
/// bands and has its centroid within a `(rows/4 x cols/4)` box around the
/// grid centre.
fn target_placements(config: &GameConfig) -> Vec<Pos> {
    let shape = target_shape(config.target_size);
    let t = shape.len() as i64;
    let (rows, cols) = (config.height as i64, config.width as i64);
    let sum_r: i64 = shape.iter().map(|&(r, _)| r as i64).sum();
    let sum_c: i64 = shape.iter().map(|&(_, c)| c as i64).sum();
    let h = shape.iter().map(|&(r, _)| r).max().unwrap_or(0) + 1;
    let w = shape.iter().map(|&(_, c)| c).max().unwrap_or(0) + 1;

    let mut out = Vec::new();
    for r0 in 0..config.height.saturating_sub(h - 1) {
        for c0 in 0..config.width.saturating_sub(w - 1) {
            // 8t * (centroid - centre) compared against t * extent, centroid on cell centres.
            let dr = 8 * (sum_r + t * r0 as i64) + 4 * t - 4 * t * rows;
            let dc = 8 * (sum_c + t * c0 as i64) + 4 * t - 4 * t * cols;
            if dr.abs() > t * rows || dc.abs() > t * cols {
                continue;
            }
            out.push(Pos::new(r0, c0));
        }
    }
    out
}

fn try_layout(config: &GameConfig, anchors: &[Pos], rng: &mut Rng) -> Option<GameState> {
    let mut grid = Grid::new(config.height, config.width);
    let anchor = anchors[rng.random_range(0..anchors.len())];
    let targets: Vec<Pos> = target_shape(config.target_size)
        .into_iter()
        .map(|(r, c)| Pos::new(anchor.row + r, anchor.col + c))
        .collect();
    for &t in &targets {
        grid.set(t, Tile::Target);
    }

    for _ in 0..config.obstacle_count {
        let h = rng.random_range(config.obstacle_size_min..=config.obstacle_size_max).min(config.height);
        let w = rng.random_range(config.obstacle_size_min..=config.obstacle_size_max).min(config.width);
        let r0 = rng.random_range(0..=config.height - h);
        let c0 = rng.random_range(0..=config.width - w);
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                let p = Pos::new(r, c);
                if grid.get(p) == Tile::Empty {
                    grid.set(p, Tile::Obstacle);
                }
            }
        }
    }

    // Target cells are contiguous, so one flood covers reachability to all of them.
    let dist = grid.flood_distances(&targets);
    if targets.iter().any(|&t| dist[grid.index(t)] == u32::MAX) {
        return None;
    }
    let band = |cols: core::ops::Range<usize>| -> Vec<Pos> {
        let mut cells = Vec::new();
        for r in 0..config.height {
            for c in cols.clone() {
                let p = Pos::new(r, c);
                if grid.get(p) == Tile::Empty && dist[grid.index(p)] != u32::MAX {
                    cells.push(p);
                }
            }
        }
        cells
    };
    let left = band(0..2);
    let right = band(config.width - 2..config.width);
    if left.len() < config.n_pursuers || right.len() < config.n_evaders {
        return None;
    }
    let pursuers = sample_distinct(&left, config.n_pursuers, rng);
    let evaders = sample_distinct(&right, config.n_evaders, rng);

    Some(GameState {
        config: *config,
        grid,
        targets,
        pursuers,
        evader_captured: vec![false; evaders.len()],
        evaders,
        step: 0,
        status: GameStatus::Ongoing,
    })
}

fn sample_distinct(cells: &[Pos], k: usize, rng: &mut Rng) -> Vec<Pos> {
    rand::seq::index::sample(rng, cells.len(), k).into_iter().map(|i| cells[i]).collect()
}
