//! Value-function learning: schedules, epsilon-greedy selection, TD targets,
//! Huber regression with exact gradients, Adam, replay memory, and the two
//! team learners.
//!
//! * [`MapelLearner`] runs one recurrent Q-network per agent (weights shared
//!   across the team by default) fed with the agent's own observation and
//!   the situation reports gathered from its topology. Training samples
//!   fixed-length subsequences of stored episodes, hidden state starting at
//!   zero.
//! * [`MaDqnLearner`] is a single network over the whole team's stacked
//!   observation history that scores every joint action.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::comms::TopologyKind;
use crate::env::{Action, GameConfig, GameStatus, Team};
use crate::error::{Error, Result};
use crate::nn::{
    decode_joint, EncoderSpec, JointArch, JointQNet, ParamLayout, RecurrentArch, RecurrentQNet, Scalar, SeqInput,
};
use crate::rollout::{TeamPolicy, TeamView};
use crate::sensing::{BitPlanes, N_PLANES};
use crate::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    /// Epochs between learning-rate decays.
    pub lr_decay_every: u32,
    pub lr_decay_factor: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all training episodes over which epsilon anneals.
    pub epsilon_decay_fraction: f64,
    /// Transitions per gradient update.
    pub batch_size: usize,
    pub epochs: u32,
    pub episodes_per_epoch: u32,
    pub target_sync: u64,
    /// Subsequence length for recurrent training.
    pub bptt_len: usize,
    /// Stacked frames for the joint learner.
    pub history_len: usize,
    pub replay_transitions: usize,
    pub replay_episodes: usize,
    pub hidden_size: usize,
    pub conv1_maps: usize,
    pub conv2_maps: usize,
    /// Stored transitions required before updates begin.
    pub learning_starts: usize,
    pub checkpoint_every: u32,
    /// Stop after this many environment steps (0 = no limit).
    pub max_train_steps: u64,
    pub share_parameters: bool,
    pub huber_delta: f64,
    /// Score the online network's greedy next action with the target
    /// network instead of taking the target network's maximum.
    pub double_q: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 0.001,
            lr_decay_every: 200,
            lr_decay_factor: 0.1,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_fraction: 0.5,
            batch_size: 64,
            epochs: 400,
            episodes_per_epoch: 500,
            target_sync: 1000,
            bptt_len: 8,
            history_len: 5,
            replay_transitions: 100_000,
            replay_episodes: 10_000,
            hidden_size: 128,
            conv1_maps: 16,
            conv2_maps: 32,
            learning_starts: 64,
            checkpoint_every: 10,
            max_train_steps: 0,
            share_parameters: true,
            huber_delta: 1.0,
            double_q: true,
        }
    }
}

impl TrainConfig {
    /// 30 epochs x 100 episodes.
    pub fn desk() -> Self {
        Self { epochs: 30, episodes_per_epoch: 100, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m| Err(Error::InvalidTrainConfig(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1)");
        }
        if !(self.lr > 0.0) {
            return fail("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return fail("epsilon endpoints must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.bptt_len == 0 || self.history_len == 0 {
            return fail("batch_size, bptt_len and history_len must be positive");
        }
        if !self.batch_size.is_multiple_of(self.bptt_len) {
            return fail("batch_size must be a multiple of bptt_len");
        }
        if self.target_sync == 0 || self.lr_decay_every == 0 {
            return fail("target_sync and lr_decay_every must be positive");
        }
        if self.hidden_size == 0 || self.conv1_maps == 0 || self.conv2_maps == 0 {
            return fail("layer sizes must be positive");
        }
        if self.replay_transitions == 0 || self.replay_episodes == 0 {
            return fail("replay capacities must be positive");
        }
        if !(self.huber_delta > 0.0) {
            return fail("huber_delta must be positive");
        }
        Ok(())
    }

    pub fn total_episodes(&self) -> u64 {
        self.epochs as u64 * self.episodes_per_epoch as u64
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            decay_steps: ((self.total_episodes() as f64 * self.epsilon_decay_fraction) as u64).max(1),
        }
    }

    pub fn lr_schedule(&self) -> LrSchedule {
        LrSchedule { base: self.lr, every: self.lr_decay_every, factor: self.lr_decay_factor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

/// Linear anneal from `start` to `end`, clamped at `end` afterwards.
pub fn epsilon_at(step: u64, schedule: &EpsilonSchedule) -> f64 {
    if step >= schedule.decay_steps {
        return schedule.end;
    }
    let frac = step as f64 / schedule.decay_steps as f64;
    schedule.start + (schedule.end - schedule.start) * frac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub every: u32,
    pub factor: f64,
}

/// Step decay: `base * factor^(epoch / every)`.
pub fn lr_at(epoch: u32, schedule: &LrSchedule) -> f64 {
    schedule.base * num_traits::Float::powi(schedule.factor, (epoch / schedule.every) as i32)
}

/// Epsilon-greedy over `q`; greedy ties go to the lowest index.
pub fn select_action<T: Scalar>(q: &[T], epsilon: f64, rng: &mut Rng) -> usize {
    assert!(!q.is_empty());
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return rng.random_range(0..q.len());
    }
    argmax(q)
}

pub fn argmax<T: Scalar>(q: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// `reward` at terminals, `reward + gamma * max_next_q` otherwise.
pub fn td_target<T: Scalar>(reward: T, done: bool, gamma: T, max_next_q: T) -> T {
    if done {
        reward
    } else {
        reward + gamma * max_next_q
    }
}

/// `(loss, dloss/derror)` of the Huber function.
pub fn huber<T: Scalar>(err: T, delta: T) -> (T, T) {
    let a = err.abs();
    if a <= delta {
        (T::lit(0.5) * err * err, err)
    } else {
        (delta * (a - T::lit(0.5) * delta), delta * err.signum())
    }
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn apply_update(&mut self, params: &mut [T], grads: &[T], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::ShapeMismatch("adam parameter/gradient length"));
        }
        self.t += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = 1.0 - num_traits::Float::powi(self.beta1, self.t as i32);
        let c2 = 1.0 - num_traits::Float::powi(self.beta2, self.t as i32);
        let step = T::lit(lr / c1);
        let inv_c2 = T::lit(1.0 / c2);
        let eps = T::lit(self.eps);
        let one = T::one();
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p = *p - step * *m / ((*v * inv_c2).sqrt() + eps);
        }
        Ok(())
    }
}

/// Fixed-capacity ring with uniform sampling with replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { items: Vec::new(), capacity, next: 0 }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sample(&self, rng: &mut Rng) -> Option<&T> {
        if self.items.is_empty() {
            None
        } else {
            Some(&self.items[rng.random_range(0..self.items.len())])
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

/// A padded recurrent training batch with its regression targets.
#[derive(Debug, Clone)]
pub struct SeqBatch<T> {
    pub input: SeqInput<T>,
    /// Action taken at each `(t, b)` slot.
    pub actions: Vec<usize>,
    pub targets: Vec<T>,
    pub mask: Vec<bool>,
}

/// Mean Huber loss over the masked `(t, b)` slots and its exact gradient.
pub fn recurrent_loss_and_grads<T: Scalar>(
    net: &RecurrentQNet,
    params: &[T],
    batch: &SeqBatch<T>,
    delta: T,
) -> Result<(T, Vec<T>)> {
    let slots = batch.input.batch * batch.input.steps;
    if batch.actions.len() != slots || batch.targets.len() != slots || batch.mask.len() != slots {
        return Err(Error::ShapeMismatch("batch slot arrays"));
    }
    let count = batch.mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::ShapeMismatch("empty batch"));
    }
    let a = net.arch.actions;
    let mut loss = T::zero();
    let (_, grads) = net.sequence_backward(params, &batch.input, |q| {
        let mut dq = vec![T::zero(); q.len()];
        let scale = T::one() / T::lit(count as f64);
        for i in 0..slots {
            if batch.mask[i] {
                let j = i * a + batch.actions[i];
                let (l, g) = huber(q[j] - batch.targets[i], delta);
                loss = loss + l;
                dq[j] = g * scale;
            }
        }
        dq
    })?;
    Ok((loss / T::lit(count as f64), grads))
}

#[derive(Debug, Clone)]
pub struct JointBatch<T> {
    pub n: usize,
    pub inputs: Vec<T>,
    pub actions: Vec<usize>,
    pub targets: Vec<T>,
}

pub fn joint_loss_and_grads<T: Scalar>(
    net: &JointQNet,
    params: &[T],
    batch: &JointBatch<T>,
    delta: T,
) -> Result<(T, Vec<T>)> {
    let n = batch.n;
    if n == 0 || batch.actions.len() != n || batch.targets.len() != n {
        return Err(Error::ShapeMismatch("batch slot arrays"));
    }
    let k = net.arch.outputs();
    let mut loss = T::zero();
    let (_, grads) = net.backward(params, &batch.inputs, n, |q| {
        let mut dq = vec![T::zero(); q.len()];
        let scale = T::one() / T::lit(n as f64);
        for i in 0..n {
            let j = i * k + batch.actions[i];
            let (l, g) = huber(q[j] - batch.targets[i], delta);
            loss = loss + l;
            dq[j] = g * scale;
        }
        dq
    })?;
    Ok((loss / T::lit(n as f64), grads))
}

/// Online parameters, their periodically synced copy, and optimiser state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    pub params: Vec<f32>,
    pub target: Vec<f32>,
    pub adam: Adam<f32>,
}

impl NetState {
    /// Random init with a zeroed output head, so every action starts at
    /// the value of a draw.
    fn new(layout: &ParamLayout, rng: &mut Rng) -> Self {
        let mut params: Vec<f32> = layout.init(rng);
        for t in layout.tensors.iter().filter(|t| t.name.starts_with("head.")) {
            params[t.range()].iter_mut().for_each(|p| *p = 0.0);
        }
        let n = params.len();
        Self { target: params.clone(), params, adam: Adam::new(n) }
    }
}

/// Bootstrap value of one next state: `max_a target[a]`, or
/// `target[argmax_a online[a]]` when `online` is given.
pub fn bootstrap_value<T: Scalar>(target: &[T], online: Option<&[T]>) -> T {
    match online {
        Some(q) => target[argmax(q)],
        None => target[argmax(target)],
    }
}

/// One team's stored episode for the recurrent learner.
#[derive(Debug, Clone, Default)]
pub struct TeamEpisode {
    /// `[step][agent]`.
    pub obs: Vec<Vec<BitPlanes>>,
    pub reports: Vec<Vec<Vec<u8>>>,
    pub actions: Vec<Vec<u8>>,
    pub rewards: Vec<Vec<f32>>,
    /// True when the last step ended the game; a timeout does not count.
    pub terminal: bool,
}

impl TeamEpisode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

fn recurrent_arch(game: &GameConfig, train: &TrainConfig, kind: TopologyKind, n: usize) -> RecurrentArch {
    RecurrentArch {
        encoder: EncoderSpec {
            channels: N_PLANES,
            rows: game.height,
            cols: game.width,
            maps1: train.conv1_maps,
            maps2: train.conv2_maps,
        },
        report_width: kind.report_width(n),
        hidden: train.hidden_size,
        actions: game.action_count(),
    }
}

/// Situation-report learner: per-agent recurrent Q-networks.
#[derive(Debug, Clone)]
pub struct MapelLearner {
    pub team: Team,
    pub kind: TopologyKind,
    pub n_agents: usize,
    pub net: RecurrentQNet,
    pub nets: Vec<NetState>,
    pub train: TrainConfig,
    pub epsilon: f64,
    pub updates: u64,
    replay: ReplayBuffer<Rc<TeamEpisode>>,
    stored_steps: usize,
    hidden: Vec<f32>,
    current: TeamEpisode,
    recording: bool,
}

impl MapelLearner {
    pub fn new(game: &GameConfig, train: &TrainConfig, team: Team, kind: TopologyKind, rng: &mut Rng) -> Self {
        let n = game.team_size(team);
        let net = RecurrentQNet::new(recurrent_arch(game, train, kind, n));
        let copies = if train.share_parameters { 1 } else { n };
        let nets = (0..copies).map(|_| NetState::new(&net.layout, rng)).collect();
        Self {
            team,
            kind,
            n_agents: n,
            net,
            nets,
            train: *train,
            epsilon: 0.0,
            updates: 0,
            replay: ReplayBuffer::new(train.replay_episodes),
            stored_steps: 0,
            hidden: Vec::new(),
            current: TeamEpisode::default(),
            recording: false,
        }
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    fn net_for(&self, agent: usize) -> usize {
        agent % self.nets.len()
    }

    /// Pushes the finished episode into replay memory.
    pub fn finish_episode(&mut self) {
        let ep = core::mem::take(&mut self.current);
        if !ep.is_empty() {
            self.stored_steps += ep.len();
            self.replay.push(Rc::new(ep));
        }
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    /// Builds one padded batch for network `which`: `batch_size / bptt_len`
    /// subsequences with one extra step for bootstrapping.
    fn build_batch(&self, which: usize, rng: &mut Rng) -> (SeqInput<f32>, Vec<usize>, Vec<f32>, Vec<bool>, Vec<bool>) {
        let seq_len = self.train.bptt_len;
        let b = self.train.batch_size / seq_len;
        let steps = seq_len + 1;
        let obs_len = self.net.arch.encoder.input_len();
        let rw = self.net.arch.report_width;
        let mut obs = vec![0.0f32; steps * b * obs_len];
        let mut reports = vec![0.0f32; steps * b * rw];
        let mut actions = vec![0usize; steps * b];
        let mut rewards = vec![0.0f32; steps * b];
        let mut valid = vec![false; steps * b];
        let mut done = vec![false; steps * b];
        let agents: Vec<usize> = (0..self.n_agents).filter(|&a| self.net_for(a) == which).collect();
        for s in 0..b {
            let ep = self.replay.sample(rng).expect("replay is non-empty");
            let agent = agents[rng.random_range(0..agents.len())];
            let len = ep.len();
            // Window start in -(L-1)..len, clipped: every step lies in exactly L windows.
            let lead = rng.random_range(0..len + seq_len - 1) as isize - (seq_len as isize - 1);
            let start = lead.max(0) as usize;
            let avail = ((lead + seq_len as isize) as usize).min(len) - start;
            // Frames start..start+avail, plus the bootstrap frame if it exists.
            let frames = (avail + 1).min(len - start);
            for t in 0..frames {
                let slot = t * b + s;
                ep.obs[start + t][agent].write_dense(&mut obs[slot * obs_len..][..obs_len]);
                for (k, &f) in ep.reports[start + t][agent].iter().enumerate() {
                    reports[slot * rw + k] = f as f32;
                }
            }
            for t in 0..avail {
                let slot = t * b + s;
                let step = start + t;
                actions[slot] = ep.actions[step][agent] as usize;
                rewards[slot] = ep.rewards[step][agent];
                done[slot] = ep.terminal && step + 1 == len;
                // A timed-out final step has no successor frame to bootstrap from.
                valid[slot] = done[slot] || step + 1 < len;
            }
        }
        (SeqInput { batch: b, steps, obs, reports }, actions, rewards, valid, done)
    }

    /// One gradient update per network; returns the mean loss.
    pub fn train_step(&mut self, lr: f64, rng: &mut Rng) -> Result<Option<f64>> {
        if self.replay.is_empty() || self.stored_steps < self.train.learning_starts {
            return Ok(None);
        }
        let mut total = 0.0;
        for which in 0..self.nets.len() {
            let (input, actions, rewards, valid, done) = self.build_batch(which, rng);
            if !valid.contains(&true) {
                continue;
            }
            let b = input.batch;
            let a = self.net.arch.actions;
            let target_q = self.net.sequence_q(&self.nets[which].target, &input)?;
            let online_q =
                if self.train.double_q { Some(self.net.sequence_q(&self.nets[which].params, &input)?) } else { None };
            let gamma = self.train.gamma as f32;
            let targets: Vec<f32> = (0..valid.len())
                .map(|slot| {
                    if !valid[slot] {
                        return 0.0;
                    }
                    let next = slot + b;
                    let bootstrap = if done[slot] {
                        0.0
                    } else {
                        bootstrap_value(&target_q[next * a..][..a], online_q.as_ref().map(|q| &q[next * a..][..a]))
                    };
                    td_target(rewards[slot], done[slot], gamma, bootstrap)
                })
                .collect();
            let batch = SeqBatch { input, actions, targets, mask: valid };
            let state = &mut self.nets[which];
            let (loss, grads) =
                recurrent_loss_and_grads(&self.net, &state.params, &batch, self.train.huber_delta as f32)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { update: self.updates });
            }
            state.adam.apply_update(&mut state.params, &grads, lr)?;
            total += loss as f64;
        }
        self.updates += 1;
        if self.updates.is_multiple_of(self.train.target_sync) {
            for s in &mut self.nets {
                s.target.clone_from(&s.params);
            }
        }
        Ok(Some(total / self.nets.len() as f64))
    }

    /// Greedy Q-values for every agent from the current observation, advancing hidden state.
    fn q_values(&mut self, view: &TeamView<'_>) -> Result<Vec<f32>> {
        let n = self.n_agents;
        let obs_len = self.net.arch.encoder.input_len();
        let (h, rw, a) = (self.net.arch.hidden, self.net.arch.report_width, self.net.arch.actions);
        if self.hidden.len() != n * h {
            self.hidden = vec![0.0; n * h];
        }
        let mut q_all = vec![0.0f32; n * a];
        for which in 0..self.nets.len() {
            let agents: Vec<usize> = (0..n).filter(|&i| self.net_for(i) == which).collect();
            let m = agents.len();
            let mut obs = vec![0.0f32; m * obs_len];
            let mut reports = vec![0.0f32; m * rw];
            let mut hidden = vec![0.0f32; m * h];
            for (k, &i) in agents.iter().enumerate() {
                view.observations[i].planes.write_dense(&mut obs[k * obs_len..][..obs_len]);
                for (j, &f) in view.gathered[i].iter().enumerate() {
                    reports[k * rw + j] = f as f32;
                }
                hidden[k * h..][..h].copy_from_slice(&self.hidden[i * h..][..h]);
            }
            let (q, next) = self.net.step(&self.nets[which].params, &obs, &reports, &hidden, m)?;
            for (k, &i) in agents.iter().enumerate() {
                self.hidden[i * h..][..h].copy_from_slice(&next[k * h..][..h]);
                q_all[i * a..][..a].copy_from_slice(&q[k * a..][..a]);
            }
        }
        Ok(q_all)
    }
}

impl TeamPolicy for MapelLearner {
    fn topology_kind(&self) -> TopologyKind {
        self.kind
    }

    fn begin_episode(&mut self) {
        self.hidden = vec![0.0; self.n_agents * self.net.arch.hidden];
        self.current = TeamEpisode::default();
    }

    fn act(&mut self, view: &TeamView<'_>, rng: &mut Rng) -> Vec<Action> {
        let a = self.net.arch.actions;
        let q = self.q_values(view).expect("network shapes are fixed at construction");
        let chosen: Vec<usize> =
            (0..self.n_agents).map(|i| select_action(&q[i * a..][..a], self.epsilon, rng)).collect();
        if self.recording {
            self.current.obs.push(view.observations.iter().map(|o| o.planes.clone()).collect());
            self.current.reports.push(view.gathered.to_vec());
            self.current.actions.push(chosen.iter().map(|&c| c as u8).collect());
        }
        chosen.into_iter().map(|c| Action::ALL[c]).collect()
    }

    fn end_step(&mut self, rewards: &[f64], status: GameStatus) {
        if self.recording {
            self.current.rewards.push(rewards.iter().map(|&r| r as f32).collect());
            self.current.terminal = status.is_terminal() && status != GameStatus::Draw;
        }
    }
}

/// Stored joint episode for the joint learner: one frame per step holding
/// every agent's five planes.
#[derive(Debug, Clone, Default)]
pub struct JointEpisode {
    pub frames: Vec<BitPlanes>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f32>,
    /// As for [`TeamEpisode::terminal`].
    pub terminal: bool,
}

#[derive(Debug, Clone)]
struct TransitionRef {
    episode: Rc<JointEpisode>,
    step: usize,
}

/// Joint-action learner over the stacked team history.
#[derive(Debug, Clone)]
pub struct MaDqnLearner {
    pub team: Team,
    pub n_agents: usize,
    pub net: JointQNet,
    pub nets: Vec<NetState>,
    pub train: TrainConfig,
    pub epsilon: f64,
    pub updates: u64,
    replay: ReplayBuffer<TransitionRef>,
    history: Vec<BitPlanes>,
    current: JointEpisode,
    recording: bool,
    rows: usize,
    cols: usize,
}

impl MaDqnLearner {
    pub fn new(game: &GameConfig, train: &TrainConfig, team: Team, rng: &mut Rng) -> Self {
        let n = game.team_size(team);
        let arch = JointArch {
            encoder: EncoderSpec {
                channels: N_PLANES * n * train.history_len,
                rows: game.height,
                cols: game.width,
                maps1: train.conv1_maps,
                maps2: train.conv2_maps,
            },
            hidden: train.hidden_size,
            n_agents: n,
            actions_per_agent: game.action_count(),
        };
        let net = JointQNet::new(arch);
        let nets = vec![NetState::new(&net.layout, rng)];
        Self {
            team,
            n_agents: n,
            net,
            nets,
            train: *train,
            epsilon: 0.0,
            updates: 0,
            replay: ReplayBuffer::new(train.replay_transitions),
            history: Vec::new(),
            current: JointEpisode::default(),
            recording: false,
            rows: game.height,
            cols: game.width,
        }
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    fn frame_len(&self) -> usize {
        N_PLANES * self.n_agents * self.rows * self.cols
    }

    /// Writes the `history_len` frames ending at `frames[end]` (oldest first,
    /// zeros before the episode start).
    fn write_stack(&self, frames: &[BitPlanes], end: usize, out: &mut [f32]) {
        let fl = self.frame_len();
        let hist = self.train.history_len;
        for k in 0..hist {
            let slot = &mut out[k * fl..][..fl];
            let back = hist - 1 - k;
            if back <= end {
                frames[end - back].write_dense(slot);
            } else {
                slot.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    pub fn finish_episode(&mut self) {
        let ep = Rc::new(core::mem::take(&mut self.current));
        let len = ep.actions.len();
        let usable = if ep.terminal { len } else { len.saturating_sub(1) };
        for step in 0..usable {
            self.replay.push(TransitionRef { episode: Rc::clone(&ep), step });
        }
    }

    pub fn train_step(&mut self, lr: f64, rng: &mut Rng) -> Result<Option<f64>> {
        if self.replay.len() < self.train.learning_starts.max(1) {
            return Ok(None);
        }
        let n = self.train.batch_size;
        let in_len = self.net.arch.encoder.input_len();
        let mut inputs = vec![0.0f32; n * in_len];
        let mut next_inputs = vec![0.0f32; n * in_len];
        let mut actions = vec![0usize; n];
        let mut rewards = vec![0.0f32; n];
        let mut done = vec![false; n];
        for i in 0..n {
            let tr = self.replay.sample(rng).expect("non-empty").clone();
            let ep = &tr.episode;
            self.write_stack(&ep.frames, tr.step, &mut inputs[i * in_len..][..in_len]);
            actions[i] = ep.actions[tr.step];
            rewards[i] = ep.rewards[tr.step];
            done[i] = ep.terminal && tr.step + 1 == ep.actions.len();
            if tr.step + 1 < ep.frames.len() {
                self.write_stack(&ep.frames, tr.step + 1, &mut next_inputs[i * in_len..][..in_len]);
            }
        }
        let k = self.net.arch.outputs();
        let state = &self.nets[0];
        let next_q = self.net.forward(&state.target, &next_inputs, n)?;
        let online_q = if self.train.double_q { Some(self.net.forward(&state.params, &next_inputs, n)?) } else { None };
        let gamma = self.train.gamma as f32;
        let targets = (0..n)
            .map(|i| {
                let boot = if done[i] {
                    0.0
                } else {
                    bootstrap_value(&next_q[i * k..][..k], online_q.as_ref().map(|q| &q[i * k..][..k]))
                };
                td_target(rewards[i], done[i], gamma, boot)
            })
            .collect();
        let batch = JointBatch { n, inputs, actions, targets };
        let state = &mut self.nets[0];
        let (loss, grads) = joint_loss_and_grads(&self.net, &state.params, &batch, self.train.huber_delta as f32)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { update: self.updates });
        }
        state.adam.apply_update(&mut state.params, &grads, lr)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.train.target_sync) {
            state.target.clone_from(&state.params);
        }
        Ok(Some(loss as f64))
    }
}

impl TeamPolicy for MaDqnLearner {
    fn begin_episode(&mut self) {
        self.history.clear();
        self.current = JointEpisode::default();
    }

    fn act(&mut self, view: &TeamView<'_>, rng: &mut Rng) -> Vec<Action> {
        let mut frame = BitPlanes::new(N_PLANES * self.n_agents, self.rows, self.cols);
        for (i, obs) in view.observations.iter().enumerate() {
            for ch in 0..N_PLANES {
                for p in obs.planes.cells(ch) {
                    frame.set(i * N_PLANES + ch, p);
                }
            }
        }
        self.history.push(frame);
        let mut input = vec![0.0f32; self.net.arch.encoder.input_len()];
        self.write_stack(&self.history, self.history.len() - 1, &mut input);
        let q = self.net.forward(&self.nets[0].params, &input, 1).expect("fixed shapes");
        let joint = select_action(&q, self.epsilon, rng);
        if self.recording {
            self.current.frames.push(self.history.last().expect("just pushed").clone());
            self.current.actions.push(joint);
        }
        decode_joint(joint, self.net.arch.actions_per_agent, self.n_agents)
            .into_iter()
            .map(|a| Action::ALL[a])
            .collect()
    }

    fn end_step(&mut self, rewards: &[f64], status: GameStatus) {
        if self.recording {
            self.current.rewards.push(rewards.first().copied().unwrap_or(0.0) as f32);
            self.current.terminal = status.is_terminal() && status != GameStatus::Draw;
        }
    }
}
