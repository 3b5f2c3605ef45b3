//! Training runs on disk and checkpoint evaluation.
//!
//! A run directory holds `metrics.csv` (one row per epoch, `epoch` counted
//! from 0) and checkpoints `epoch-NNNN.ckpt` holding the network after NNNN
//! completed epochs: 0 is the untrained network, then every
//! `checkpoint_every` epochs and the last epoch. `final.ckpt` duplicates the
//! last one.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pursuit_core::env::Team;
use pursuit_core::rollout::{evaluate, run_episode, EpisodeRecord, EvalReport, Matchup, Method, NaivePolicy, NoObserver, TeamPolicy};
use pursuit_core::train::{EpochMetrics, Trainer};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

pub const METRICS_HEADER: &str = "epoch,episodes,env_steps,updates,avg_pursuer_reward,avg_evader_reward,\
avg_pursuer_team_reward,avg_evader_team_reward,pursuer_win_rate,evader_win_rate,complete_win_rate,draw_rate,mean_loss,epsilon,lr";

pub fn metrics_row(m: &EpochMetrics) -> String {
    let o = &m.outcomes;
    let draw_rate = if o.episodes == 0 { 0.0 } else { o.draws as f64 / o.episodes as f64 };
    let mut s = String::new();
    write!(
        s,
        "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.8},{:.6},{:e}",
        m.epoch,
        m.episodes,
        m.env_steps,
        m.updates,
        o.avg_reward(Team::Pursuer),
        o.avg_reward(Team::Evader),
        o.avg_team_reward(Team::Pursuer),
        o.avg_team_reward(Team::Evader),
        o.win_rate(Team::Pursuer),
        o.win_rate(Team::Evader),
        o.complete_win_rate(),
        draw_rate,
        m.mean_loss,
        m.epsilon,
        m.lr,
    )
    .expect("string write");
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub untrained_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
    pub metrics: Vec<EpochMetrics>,
}

pub fn checkpoint_path(dir: &Path, epoch: u32) -> PathBuf {
    dir.join(format!("epoch-{epoch:04}.ckpt"))
}

fn save(run: &RunConfig, trainer: &Trainer, path: &Path) -> Result<()> {
    let team = run.team();
    Checkpoint::capture(&run.settings, run.method(), team, run.seed, trainer.epoch, trainer.controller(team))?.save(path)
}

/// Trains the learning team of `run`, writing metrics and checkpoints.
/// On divergence the error is returned and earlier checkpoints stay intact.
pub fn train(run: &RunConfig, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainOutcome> {
    run.validate()?;
    let dir = &run.out_dir;
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut trainer = Trainer::new(&run.settings.game, &run.settings.train, run.matchup, run.seed)?;
    let untrained = checkpoint_path(dir, 0);
    save(run, &trainer, &untrained)?;

    let metrics_path = dir.join("metrics.csv");
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    let write_csv = |csv: &str| fs::write(&metrics_path, csv).map_err(|e| HarnessError::io(&metrics_path, e));
    write_csv(&csv)?;

    let every = run.settings.train.checkpoint_every.max(1);
    let mut metrics = Vec::new();
    let mut last = untrained.clone();
    while !trainer.finished() {
        let m = trainer.run_epoch()?;
        csv.push_str(&metrics_row(&m));
        csv.push('\n');
        write_csv(&csv)?;
        on_epoch(&m);
        metrics.push(m);
        if trainer.epoch % every == 0 || trainer.finished() {
            last = checkpoint_path(dir, trainer.epoch);
            save(run, &trainer, &last)?;
        }
    }
    let final_checkpoint = dir.join("final.ckpt");
    fs::copy(&last, &final_checkpoint).map_err(|e| HarnessError::io(&final_checkpoint, e))?;
    Ok(TrainOutcome { final_checkpoint, untrained_checkpoint: untrained, metrics_path, metrics })
}

/// Greedy play of a checkpoint against `opponent`; episode `i` uses seed `seed + i`.
pub fn evaluate_checkpoint(ck: &Checkpoint, opponent: Method, episodes: u64, seed: u64) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(HarnessError::Usage("episodes must be at least 1".into()));
    }
    if opponent != Method::Naive {
        return Err(HarnessError::Usage(format!(
            "opponent {} needs its own checkpoint; only naive opponents are supported here",
            opponent.name()
        )));
    }
    let mut learner = ck.controller()?;
    learner.set_mode(0.0, false);
    let mut naive = NaivePolicy;
    let game = &ck.settings.game;
    let (p, e): (&mut dyn TeamPolicy, &mut dyn TeamPolicy) = match ck.team {
        Team::Pursuer => (learner.policy(), &mut naive),
        Team::Evader => (&mut naive, learner.policy()),
    };
    Ok(evaluate(game, p, e, episodes, seed)?)
}

/// The greedy episode with seed `seed` between a checkpoint and naive opponents, recorded.
pub fn record_checkpoint_episode(ck: &Checkpoint, seed: u64) -> Result<EpisodeRecord> {
    let mut learner = ck.controller()?;
    learner.set_mode(0.0, false);
    let mut naive = NaivePolicy;
    let (p, e, matchup): (&mut dyn TeamPolicy, &mut dyn TeamPolicy, Matchup) = match ck.team {
        Team::Pursuer => (learner.policy(), &mut naive, Matchup { pursuers: ck.method, evaders: Method::Naive }),
        Team::Evader => (&mut naive, learner.policy(), Matchup { pursuers: Method::Naive, evaders: ck.method }),
    };
    let res = run_episode(&ck.settings.game, seed, p, e, matchup, true, &mut NoObserver)?;
    Ok(res.record.expect("recording was requested"))
}

pub fn report_text(r: &EvalReport) -> String {
    format!(
        "episodes {}\navg_pursuer_reward {:.6}\navg_evader_reward {:.6}\navg_pursuer_team_reward {:.6}\n\
avg_evader_team_reward {:.6}\nevaders_win_target {}\n\
pursuers_win_target {}\npursuers_win_capture_all {}\ndraws {}\ncomplete_win_rate {:.6}\n",
        r.episodes,
        r.avg_reward(Team::Pursuer),
        r.avg_reward(Team::Evader),
        r.avg_team_reward(Team::Pursuer),
        r.avg_team_reward(Team::Evader),
        r.evaders_win_target,
        r.pursuers_win_target,
        r.pursuers_win_capture,
        r.draws,
        r.complete_win_rate(),
    )
}
