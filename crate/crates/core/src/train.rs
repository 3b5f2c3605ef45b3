//! Epoch-level training driver.

use alloc::vec::Vec;

use crate::env::{GameConfig, Team};
use crate::error::{Error, Result};
use crate::nn::ParamLayout;
use crate::qlearning::{epsilon_at, lr_at, MaDqnLearner, MapelLearner, NetState, TrainConfig};
use crate::rollout::{
    evaluate, run_episode, EvalReport, Matchup, Method, NaivePolicy, NoObserver, StationaryPolicy, TeamPolicy,
};
use crate::{rng_for, Rng, Stream};

/// Whatever drives one team.
#[derive(Debug, Clone)]
pub enum Controller {
    Naive(NaivePolicy),
    Stationary(StationaryPolicy),
    Mapel(MapelLearner),
    MaDqn(MaDqnLearner),
}

impl Controller {
    pub fn for_method(method: Method, game: &GameConfig, train: &TrainConfig, team: Team, rng: &mut Rng) -> Self {
        match method {
            Method::Naive => Controller::Naive(NaivePolicy),
            Method::MaDqn => Controller::MaDqn(MaDqnLearner::new(game, train, team, rng)),
            Method::MapelP2psr | Method::MapelRsr => {
                Controller::Mapel(MapelLearner::new(game, train, team, method.topology_kind(), rng))
            }
        }
    }

    pub fn policy(&mut self) -> &mut dyn TeamPolicy {
        match self {
            Controller::Naive(p) => p,
            Controller::Stationary(p) => p,
            Controller::Mapel(l) => l,
            Controller::MaDqn(l) => l,
        }
    }

    pub fn is_learner(&self) -> bool {
        matches!(self, Controller::Mapel(_) | Controller::MaDqn(_))
    }

    pub fn updates(&self) -> u64 {
        match self {
            Controller::Mapel(l) => l.updates,
            Controller::MaDqn(l) => l.updates,
            _ => 0,
        }
    }

    /// Tensor layout and parameter sets of a learner.
    pub fn nets(&self) -> Option<(&ParamLayout, &[NetState])> {
        match self {
            Controller::Mapel(l) => Some((&l.net.layout, &l.nets)),
            Controller::MaDqn(l) => Some((&l.net.layout, &l.nets)),
            _ => None,
        }
    }

    /// Installs loaded parameter sets; counts must match.
    pub fn load_nets(&mut self, nets: Vec<NetState>, updates: u64) -> Result<()> {
        let (slot, count) = match self {
            Controller::Mapel(l) => (&mut l.nets, &mut l.updates),
            Controller::MaDqn(l) => (&mut l.nets, &mut l.updates),
            _ => return Err(Error::ShapeMismatch("controller has no parameters")),
        };
        if slot.len() != nets.len() || slot.iter().zip(&nets).any(|(a, b)| a.params.len() != b.params.len()) {
            return Err(Error::ShapeMismatch("parameter set count or length"));
        }
        *slot = nets;
        *count = updates;
        Ok(())
    }

    /// Sets exploration and whether acted steps go to replay memory.
    pub fn set_mode(&mut self, epsilon: f64, recording: bool) {
        match self {
            Controller::Mapel(l) => {
                l.epsilon = epsilon;
                l.set_recording(recording);
            }
            Controller::MaDqn(l) => {
                l.epsilon = epsilon;
                l.set_recording(recording);
            }
            _ => {}
        }
    }

    fn finish_episode(&mut self) {
        match self {
            Controller::Mapel(l) => l.finish_episode(),
            Controller::MaDqn(l) => l.finish_episode(),
            _ => {}
        }
    }

    fn train_step(&mut self, lr: f64, rng: &mut Rng) -> Result<Option<f64>> {
        match self {
            Controller::Mapel(l) => l.train_step(lr, rng),
            Controller::MaDqn(l) => l.train_step(lr, rng),
            _ => Ok(None),
        }
    }
}

/// Per-epoch training summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 0-based index of the epoch.
    pub epoch: u32,
    pub episodes: u32,
    pub env_steps: u64,
    pub updates: u64,
    pub epsilon: f64,
    pub lr: f64,
    /// Mean loss over this epoch's updates (NaN when none ran).
    pub mean_loss: f64,
    pub outcomes: EvalReport,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub game: GameConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub matchup: Matchup,
    pub pursuers: Controller,
    pub evaders: Controller,
    pub epoch: u32,
    pub episodes_done: u64,
    pub env_steps: u64,
    replay_rng: Rng,
}

impl Trainer {
    pub fn new(game: &GameConfig, train: &TrainConfig, matchup: Matchup, seed: u64) -> Result<Self> {
        game.validate()?;
        train.validate()?;
        if !train.batch_size.is_multiple_of(train.bptt_len) {
            return Err(Error::InvalidTrainConfig("batch_size must be a multiple of bptt_len"));
        }
        let mut init = rng_for(seed, Stream::Init);
        let pursuers = Controller::for_method(matchup.pursuers, game, train, Team::Pursuer, &mut init);
        let evaders = Controller::for_method(matchup.evaders, game, train, Team::Evader, &mut init);
        Ok(Self {
            game: *game,
            train: *train,
            seed,
            matchup,
            pursuers,
            evaders,
            epoch: 0,
            episodes_done: 0,
            env_steps: 0,
            replay_rng: rng_for(seed, Stream::Replay),
        })
    }

    /// Replaces a team's controller (e.g. a stationary opponent).
    pub fn with_controller(mut self, team: Team, controller: Controller) -> Self {
        match team {
            Team::Pursuer => self.pursuers = controller,
            Team::Evader => self.evaders = controller,
        }
        self
    }

    pub fn controller(&self, team: Team) -> &Controller {
        match team {
            Team::Pursuer => &self.pursuers,
            Team::Evader => &self.evaders,
        }
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.train.epochs
            || (self.train.max_train_steps > 0 && self.env_steps >= self.train.max_train_steps)
    }

    /// Runs one epoch of episodes, each followed by one update per environment step.
    /// Episode `i` of the run is played with seed `seed + i`.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let lr = lr_at(self.epoch, &self.train.lr_schedule());
        let schedule = self.train.epsilon_schedule();
        let mut outcomes = EvalReport::default();
        let (mut loss_sum, mut loss_n) = (0.0, 0u64);
        let mut epsilon = epsilon_at(self.episodes_done, &schedule);
        let mut episodes = 0;
        for _ in 0..self.train.episodes_per_epoch {
            if self.train.max_train_steps > 0 && self.env_steps >= self.train.max_train_steps {
                break;
            }
            epsilon = epsilon_at(self.episodes_done, &schedule);
            self.pursuers.set_mode(epsilon, true);
            self.evaders.set_mode(epsilon, true);
            let seed = self.seed.wrapping_add(self.episodes_done);
            let r = run_episode(
                &self.game,
                seed,
                self.pursuers.policy(),
                self.evaders.policy(),
                self.matchup,
                false,
                &mut NoObserver,
            )?;
            outcomes.add(r.status, &r.rewards, r.steps);
            self.pursuers.finish_episode();
            self.evaders.finish_episode();
            self.env_steps += r.steps as u64;
            for _ in 0..r.steps {
                for c in [&mut self.pursuers, &mut self.evaders] {
                    if let Some(l) = c.train_step(lr, &mut self.replay_rng)? {
                        loss_sum += l;
                        loss_n += 1;
                    }
                }
            }
            self.episodes_done += 1;
            episodes += 1;
        }
        let index = self.epoch;
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch: index,
            episodes,
            env_steps: self.env_steps,
            updates: self.pursuers.updates() + self.evaders.updates(),
            epsilon,
            lr,
            mean_loss: if loss_n == 0 { f64::NAN } else { loss_sum / loss_n as f64 },
            outcomes,
        })
    }

    /// Greedy evaluation of the current controllers; replay memory is untouched.
    pub fn evaluate(&mut self, episodes: u64, base_seed: u64) -> Result<EvalReport> {
        self.pursuers.set_mode(0.0, false);
        self.evaders.set_mode(0.0, false);
        evaluate(&self.game, self.pursuers.policy(), self.evaders.policy(), episodes, base_seed)
    }

    pub fn run(&mut self) -> Result<Vec<EpochMetrics>> {
        let mut out = Vec::new();
        while !self.finished() {
            out.push(self.run_epoch()?);
        }
        Ok(out)
    }
}
