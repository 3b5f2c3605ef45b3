//! The episode loop, team policies, per-step records and evaluation tallies.
//!
//! Each step runs in a fixed order: every agent observes, each agent raises
//! its report flag, every agent gathers its neighbours' flags, the pursuer
//! team acts, then the evader team acts, then the environment steps.

use alloc::boxed::Box;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::comms::{build_topology, gather, report_flag, Topology, TopologyKind};
use crate::env::{Action, AgentId, GameConfig, GameState, GameStatus, StepOutcome, Team, TeamRewards};
use crate::error::{Error, Result};
use crate::grid::Pos;
use crate::naive::{naive_decide, NaiveView};
use crate::sensing::{observe, Observation};
use crate::{rng_for, Rng, Stream};

/// The learning method that controls a team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Method {
    Naive,
    MaDqn,
    MapelP2psr,
    MapelRsr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Naive, Method::MaDqn, Method::MapelP2psr, Method::MapelRsr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::MaDqn => "ma-dqn",
            Method::MapelP2psr => "mapel-p2psr",
            Method::MapelRsr => "mapel-rsr",
        }
    }

    pub fn from_name(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn topology_kind(self) -> TopologyKind {
        match self {
            Method::MapelRsr => TopologyKind::Rsr,
            _ => TopologyKind::P2psr,
        }
    }
}

/// What a team sees when it has to act.
pub struct TeamView<'a> {
    pub state: &'a GameState,
    pub team: Team,
    /// One per team member, in index order.
    pub observations: &'a [Observation],
    /// Gathered report vector per team member.
    pub gathered: &'a [Vec<u8>],
    pub topology: &'a Topology,
}

/// Chooses the joint action of one team.
pub trait TeamPolicy {
    /// Topology the team communicates over.
    fn topology_kind(&self) -> TopologyKind {
        TopologyKind::P2psr
    }

    fn begin_episode(&mut self) {}

    fn act(&mut self, view: &TeamView<'_>, rng: &mut Rng) -> Vec<Action>;

    /// Per-agent rewards of the step just taken and the resulting status.
    fn end_step(&mut self, _rewards: &[f64], _status: GameStatus) {}
}

impl<P: TeamPolicy + ?Sized> TeamPolicy for Box<P> {
    fn topology_kind(&self) -> TopologyKind {
        (**self).topology_kind()
    }
    fn begin_episode(&mut self) {
        (**self).begin_episode()
    }
    fn act(&mut self, view: &TeamView<'_>, rng: &mut Rng) -> Vec<Action> {
        (**self).act(view, rng)
    }
    fn end_step(&mut self, rewards: &[f64], status: GameStatus) {
        (**self).end_step(rewards, status)
    }
}

/// Per-agent BFS / straight-line baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaivePolicy;

impl TeamPolicy for NaivePolicy {
    fn act(&mut self, view: &TeamView<'_>, rng: &mut Rng) -> Vec<Action> {
        view.observations
            .iter()
            .map(|obs| {
                let nv = NaiveView::new(view.state, obs).expect("observation belongs to a live game");
                naive_decide(&nv, view.team, rng)
            })
            .collect()
    }
}

/// Every agent stays put.
#[derive(Debug, Clone, Copy, Default)]
pub struct StationaryPolicy;

impl TeamPolicy for StationaryPolicy {
    fn act(&mut self, view: &TeamView<'_>, _rng: &mut Rng) -> Vec<Action> {
        alloc::vec![Action::Stay; view.observations.len()]
    }
}

/// Replays a fixed action list, then stays.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    pub actions: Vec<Vec<Action>>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(actions: Vec<Vec<Action>>) -> Self {
        Self { actions, cursor: 0 }
    }
}

impl TeamPolicy for ScriptedPolicy {
    fn begin_episode(&mut self) {
        self.cursor = 0;
    }

    fn act(&mut self, view: &TeamView<'_>, _rng: &mut Rng) -> Vec<Action> {
        let out = self
            .actions
            .get(self.cursor)
            .cloned()
            .unwrap_or_else(|| alloc::vec![Action::Stay; view.observations.len()]);
        self.cursor += 1;
        out
    }
}

/// Hooks into the episode loop, called in step order.
pub trait EpisodeObserver {
    fn on_observe(&mut self, _step: u32, _team: Team, _observations: &[Observation]) {}
    fn on_flags(&mut self, _step: u32, _team: Team, _flags: &[u8]) {}
    fn on_gather(&mut self, _step: u32, _team: Team, _gathered: &[Vec<u8>]) {}
    fn on_actions(&mut self, _step: u32, _team: Team, _actions: &[Action]) {}
    fn on_step(&mut self, _state: &GameState, _outcome: &StepOutcome) {}
}

/// Observer that ignores everything.
pub struct NoObserver;

impl EpisodeObserver for NoObserver {}

/// Agent positions after a step.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Snapshot {
    pub pursuers: Vec<Pos>,
    pub evaders: Vec<Pos>,
    pub captured: Vec<bool>,
}

impl Snapshot {
    pub fn of(state: &GameState) -> Self {
        Self {
            pursuers: state.pursuers.clone(),
            evaders: state.evaders.clone(),
            captured: state.evader_captured.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StepRecord {
    pub step: u32,
    pub pursuer_flags: Vec<u8>,
    pub evader_flags: Vec<u8>,
    pub pursuer_gathered: Vec<Vec<u8>>,
    pub evader_gathered: Vec<Vec<u8>>,
    pub pursuer_actions: Vec<Action>,
    pub evader_actions: Vec<Action>,
    pub after: Snapshot,
    pub status: GameStatus,
}

/// Everything needed to re-simulate and render one episode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EpisodeRecord {
    pub config: GameConfig,
    pub seed: u64,
    pub pursuer_method: Method,
    pub evader_method: Method,
    pub pursuer_topology: Topology,
    pub evader_topology: Topology,
    pub initial: Snapshot,
    pub steps: Vec<StepRecord>,
    pub status: GameStatus,
    pub rewards: TeamRewards,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub status: GameStatus,
    pub rewards: TeamRewards,
    pub steps: u32,
    pub record: Option<EpisodeRecord>,
}

/// Which teams run which method, for records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Matchup {
    pub pursuers: Method,
    pub evaders: Method,
}

impl Default for Matchup {
    fn default() -> Self {
        Self { pursuers: Method::Naive, evaders: Method::Naive }
    }
}

fn team_observations(state: &GameState, team: Team) -> Result<Vec<Observation>> {
    (0..state.config.team_size(team))
        .map(|i| observe(state, AgentId { team, index: i }))
        .collect()
}

fn team_reports(topology: &Topology, observations: &[Observation]) -> Result<(Vec<u8>, Vec<Vec<u8>>)> {
    let flags: Vec<u8> = observations.iter().map(report_flag).collect();
    let gathered = (0..flags.len()).map(|i| gather(topology, &flags, i)).collect::<Result<_>>()?;
    Ok((flags, gathered))
}

/// Plays one episode to its terminal status.
pub fn run_episode(
    config: &GameConfig,
    seed: u64,
    pursuers: &mut dyn TeamPolicy,
    evaders: &mut dyn TeamPolicy,
    matchup: Matchup,
    record: bool,
    observer: &mut dyn EpisodeObserver,
) -> Result<EpisodeResult> {
    let mut state = GameState::new(config, seed)?;
    let mut topo_rng = rng_for(seed, Stream::Topology);
    let p_topo = build_topology(pursuers.topology_kind(), config.n_pursuers, &mut topo_rng);
    let e_topo = build_topology(evaders.topology_kind(), config.n_evaders, &mut topo_rng);
    let mut p_rng = rng_for(seed, Stream::PursuerPolicy);
    let mut e_rng = rng_for(seed, Stream::EvaderPolicy);
    pursuers.begin_episode();
    evaders.begin_episode();

    let initial = Snapshot::of(&state);
    let mut steps = Vec::new();
    let mut rewards = TeamRewards::zeros(config.n_pursuers, config.n_evaders);
    while !state.status.is_terminal() {
        let step = state.step;
        let p_obs = team_observations(&state, Team::Pursuer)?;
        let e_obs = team_observations(&state, Team::Evader)?;
        observer.on_observe(step, Team::Pursuer, &p_obs);
        observer.on_observe(step, Team::Evader, &e_obs);
        let (p_flags, p_gathered) = team_reports(&p_topo, &p_obs)?;
        let (e_flags, e_gathered) = team_reports(&e_topo, &e_obs)?;
        observer.on_flags(step, Team::Pursuer, &p_flags);
        observer.on_flags(step, Team::Evader, &e_flags);
        observer.on_gather(step, Team::Pursuer, &p_gathered);
        observer.on_gather(step, Team::Evader, &e_gathered);

        let p_actions = pursuers.act(
            &TeamView {
                state: &state,
                team: Team::Pursuer,
                observations: &p_obs,
                gathered: &p_gathered,
                topology: &p_topo,
            },
            &mut p_rng,
        );
        observer.on_actions(step, Team::Pursuer, &p_actions);
        let e_actions = evaders.act(
            &TeamView {
                state: &state,
                team: Team::Evader,
                observations: &e_obs,
                gathered: &e_gathered,
                topology: &e_topo,
            },
            &mut e_rng,
        );
        observer.on_actions(step, Team::Evader, &e_actions);

        let outcome = state.step(&p_actions, &e_actions)?;
        pursuers.end_step(&outcome.rewards.pursuers, outcome.status);
        evaders.end_step(&outcome.rewards.evaders, outcome.status);
        observer.on_step(&state, &outcome);
        if record {
            steps.push(StepRecord {
                step,
                pursuer_flags: p_flags,
                evader_flags: e_flags,
                pursuer_gathered: p_gathered,
                evader_gathered: e_gathered,
                pursuer_actions: p_actions,
                evader_actions: e_actions,
                after: Snapshot::of(&state),
                status: outcome.status,
            });
        }
        rewards = outcome.rewards;
    }
    let record = record.then(|| EpisodeRecord {
        config: *config,
        seed,
        pursuer_method: matchup.pursuers,
        evader_method: matchup.evaders,
        pursuer_topology: p_topo,
        evader_topology: e_topo,
        initial,
        steps,
        status: state.status,
        rewards: rewards.clone(),
    });
    Ok(EpisodeResult { status: state.status, rewards, steps: state.step, record })
}

/// Re-runs a record's actions from its seed and checks every snapshot.
pub fn resimulate(record: &EpisodeRecord) -> Result<GameState> {
    let mut state = GameState::new(&record.config, record.seed)?;
    if Snapshot::of(&state) != record.initial {
        return Err(Error::ShapeMismatch("record initial positions differ from seed"));
    }
    for s in &record.steps {
        state.step(&s.pursuer_actions, &s.evader_actions)?;
        if Snapshot::of(&state) != s.after || state.status != s.status {
            return Err(Error::ShapeMismatch("record diverges from replay"));
        }
    }
    if state.status != record.status {
        return Err(Error::ShapeMismatch("record status differs from replay"));
    }
    Ok(state)
}

/// Aggregate outcome counts and rewards over many episodes. Rewards are kept
/// both per agent (the team total over the team size) and per team.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvalReport {
    pub episodes: u64,
    pub evaders_win_target: u64,
    pub pursuers_win_target: u64,
    pub pursuers_win_capture: u64,
    pub draws: u64,
    /// Sum over episodes of the mean pursuer reward.
    pub pursuer_reward_sum: f64,
    pub evader_reward_sum: f64,
    /// Sum over episodes of the pursuer team's total reward.
    pub pursuer_team_reward_sum: f64,
    pub evader_team_reward_sum: f64,
    pub total_steps: u64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

impl EvalReport {
    pub fn add(&mut self, status: GameStatus, rewards: &TeamRewards, steps: u32) {
        self.episodes += 1;
        match status {
            GameStatus::EvadersWinTarget => self.evaders_win_target += 1,
            GameStatus::PursuersWinTarget => self.pursuers_win_target += 1,
            GameStatus::PursuersWinCaptureAll => self.pursuers_win_capture += 1,
            GameStatus::Draw => self.draws += 1,
            GameStatus::Ongoing => {}
        }
        self.pursuer_reward_sum += mean(&rewards.pursuers);
        self.evader_reward_sum += mean(&rewards.evaders);
        self.pursuer_team_reward_sum += rewards.pursuers.iter().sum::<f64>();
        self.evader_team_reward_sum += rewards.evaders.iter().sum::<f64>();
        self.total_steps += steps as u64;
    }

    /// Mean per-agent reward of `team`.
    pub fn avg_reward(&self, team: Team) -> f64 {
        if self.episodes == 0 {
            return 0.0;
        }
        let sum = match team {
            Team::Pursuer => self.pursuer_reward_sum,
            Team::Evader => self.evader_reward_sum,
        };
        sum / self.episodes as f64
    }

    /// Mean total reward of `team` per episode.
    pub fn avg_team_reward(&self, team: Team) -> f64 {
        if self.episodes == 0 {
            return 0.0;
        }
        let sum = match team {
            Team::Pursuer => self.pursuer_team_reward_sum,
            Team::Evader => self.evader_team_reward_sum,
        };
        sum / self.episodes as f64
    }

    pub fn pursuer_wins(&self) -> u64 {
        self.pursuers_win_target + self.pursuers_win_capture
    }

    pub fn win_rate(&self, team: Team) -> f64 {
        if self.episodes == 0 {
            return 0.0;
        }
        let wins = match team {
            Team::Pursuer => self.pursuer_wins(),
            Team::Evader => self.evaders_win_target,
        };
        wins as f64 / self.episodes as f64
    }

    /// Fraction of episodes in which every evader was captured.
    pub fn complete_win_rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.pursuers_win_capture as f64 / self.episodes as f64
        }
    }

    /// Status counts sum to `episodes`.
    pub fn is_consistent(&self) -> bool {
        self.evaders_win_target + self.pursuers_win_target + self.pursuers_win_capture + self.draws == self.episodes
    }
}

/// Plays `episodes` games with seeds `base_seed + i`.
pub fn evaluate(
    config: &GameConfig,
    pursuers: &mut dyn TeamPolicy,
    evaders: &mut dyn TeamPolicy,
    episodes: u64,
    base_seed: u64,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for i in 0..episodes {
        let r = run_episode(
            config,
            base_seed.wrapping_add(i),
            pursuers,
            evaders,
            Matchup::default(),
            false,
            &mut NoObserver,
        )?;
        report.add(r.status, &r.rewards, r.steps);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_episode_terminates_and_replays() {
        let cfg = GameConfig::desk();
        let r = run_episode(&cfg, 7, &mut NaivePolicy, &mut NaivePolicy, Matchup::default(), true, &mut NoObserver)
            .unwrap();
        assert!(r.status.is_terminal());
        assert!(r.steps <= cfg.max_steps);
        let rec = r.record.unwrap();
        assert_eq!(rec.steps.len() as u32, r.steps);
        assert_eq!(resimulate(&rec).unwrap().status, r.status);
    }

    #[test]
    fn same_seed_same_episode() {
        let cfg = GameConfig::desk();
        let run = |s| {
            run_episode(&cfg, s, &mut NaivePolicy, &mut NaivePolicy, Matchup::default(), true, &mut NoObserver)
                .unwrap()
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn stationary_evaders_never_move() {
        let cfg = GameConfig::desk();
        let r = run_episode(&cfg, 3, &mut NaivePolicy, &mut StationaryPolicy, Matchup::default(), true, &mut NoObserver)
            .unwrap();
        let rec = r.record.unwrap();
        for s in &rec.steps {
            assert_eq!(s.after.evaders, rec.initial.evaders);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::from_name(m.name()), Some(m));
        }
        assert_eq!(Method::from_name("dqn"), None);
    }
}
