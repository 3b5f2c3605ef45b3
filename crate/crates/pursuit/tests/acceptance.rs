//! Exit criteria, run in order with one PASS/FAIL line each.
//!
//! Runs under `cargo test`; the process fails if any gating criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pursuit::config::{RunConfig, Scenario, Settings};
use pursuit::core::comms::{build_topology, TopologyKind};
use pursuit::core::env::{GameConfig, GameState, GameStatus, RewardSpec, Team};
use pursuit::core::naive::bfs_shortest_path;
use pursuit::core::qlearning::TrainConfig;
use pursuit::core::rollout::{run_episode, Matchup, Method, NaivePolicy, NoObserver, StationaryPolicy};
use pursuit::core::sensing::line_of_sight;
use pursuit::core::train::{Controller, Trainer};
use pursuit::core::{rng_for, Error, Pos, Stream};
use pursuit::checkpoint::Checkpoint;
use pursuit::run;
use rand::Rng;
use support::gradcheck::{joint_case, recurrent_case};
use support::{check_record, dense_touched, flood_distance, random_free_cell, random_grid, visible_via};

/// Outcome detail on success, reason on failure.
type Verdict = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    gating: bool,
    run: fn() -> Verdict,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn env_invariants() -> Verdict {
    let mut statuses = [0u64; 4];
    for seed in 0..10_000u64 {
        let config = GameConfig {
            n_pursuers: 2 + (seed % 4) as usize,
            n_evaders: 2 + (seed / 4 % 4) as usize,
            ..GameConfig::default()
        };
        let res = run_episode(&config, seed, &mut NaivePolicy, &mut NaivePolicy, Matchup::default(), true, &mut NoObserver)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let rec = res.record.expect("recording was requested");
        check_record(&rec).map_err(|m| format!("seed {seed}: {m}"))?;
        statuses[match res.status {
            GameStatus::EvadersWinTarget => 0,
            GameStatus::PursuersWinTarget => 1,
            GameStatus::PursuersWinCaptureAll => 2,
            _ => 3,
        }] += 1;
    }
    Ok(format!(
        "10000 episodes on 32x32; evader wins {}, pursuer target wins {}, complete wins {}, draws {}",
        statuses[0], statuses[1], statuses[2], statuses[3]
    ))
}

fn bfs_oracle() -> Verdict {
    let mut rng = rng_for(2024, Stream::Init);
    let (mut grids, mut unreachable) = (0, 0);
    while grids < 1000 {
        let density = rng.random_range(0.0..0.45);
        let grid = random_grid(&mut rng, 32, 32, density);
        let Some(from) = random_free_cell(&mut rng, &grid) else { continue };
        let goals: Vec<Pos> =
            (0..rng.random_range(1..=4)).map(|_| Pos::new(rng.random_range(0..32), rng.random_range(0..32))).collect();
        grids += 1;
        let oracle = flood_distance(&grid, from, &goals);
        match bfs_shortest_path(&grid, from, &goals) {
            Ok(path) => ensure(Some(path.len() - 1) == oracle, || {
                format!("{from:?} -> {goals:?}: bfs {} vs flood {oracle:?}", path.len() - 1)
            })?,
            Err(Error::NoPath) => {
                unreachable += 1;
                ensure(oracle.is_none(), || format!("{from:?} -> {goals:?}: bfs found no path, flood {oracle:?}"))?;
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(format!("1000/1000 grids agree ({unreachable} unreachable)"))
}

fn los_oracle() -> Verdict {
    let mut rng = rng_for(2025, Stream::Init);
    let (mut triples, mut blocked) = (0, 0);
    while triples < 10_000 {
        let density = rng.random_range(0.0..0.35);
        let grid = random_grid(&mut rng, 32, 32, density);
        let Some(a) = random_free_cell(&mut rng, &grid) else { continue };
        let b = Pos::new(rng.random_range(0..32), rng.random_range(0..32));
        triples += 1;
        let expected = visible_via(&grid, a, &dense_touched(a, b));
        let got = line_of_sight(&grid, a, b).map_err(|e| e.to_string())?;
        ensure(got == expected, || format!("{a:?} -> {b:?}: supercover {got}, dense {expected}"))?;
        blocked += usize::from(!got);
    }
    let mut pairs = 0u64;
    for _ in 0..2 {
        let grid = random_grid(&mut rng, 32, 32, 0.25);
        let free: Vec<Pos> = grid.cells().filter(|&p| !grid.is_obstacle(p)).collect();
        for (i, &a) in free.iter().enumerate() {
            for &b in &free[i + 1..] {
                let ab = line_of_sight(&grid, a, b).map_err(|e| e.to_string())?;
                let ba = line_of_sight(&grid, b, a).map_err(|e| e.to_string())?;
                ensure(ab == ba, || format!("asymmetric pair {a:?} {b:?}"))?;
                pairs += 1;
            }
        }
    }
    Ok(format!("10000/10000 triples agree ({blocked} blocked); {pairs} pairs symmetric"))
}

fn topology_counts() -> Verdict {
    let mut rng = rng_for(7, Stream::Topology);
    for n in 2..=16usize {
        for _ in 0..20 {
            let p2p = build_topology(TopologyKind::P2psr, n, &mut rng).message_edges.len();
            ensure(p2p == n * (n - 1) / 2, || format!("P2PSR n={n}: {p2p} edges"))?;
            let rsr = build_topology(TopologyKind::Rsr, n, &mut rng).message_edges.len();
            let want = if n >= 3 { n } else { 1 };
            ensure(rsr == want, || format!("RSR n={n}: {rsr} edges"))?;
        }
    }
    Ok("n = 2..16: P2PSR n(n-1)/2, RSR n (n >= 3)".into())
}

fn gradient_check() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 100..105 {
        worst = worst.max(recurrent_case(seed)).max(joint_case(seed));
    }
    ensure(worst <= 1e-4, || format!("max relative error {worst:e} > 1e-4"))?;
    Ok(format!("10 networks, max relative error {worst:.2e}"))
}

fn trivial_mdp() -> Verdict {
    let rewards = RewardSpec { pursuer_capture_all: 0.0, evader_all_captured: 0.0, ..RewardSpec::default() };
    let game = GameConfig {
        width: 5,
        height: 5,
        n_pursuers: 1,
        n_evaders: 1,
        sense_length: 5,
        sense_width: 5,
        target_size: 1,
        obstacle_count: 0,
        max_steps: 20,
        rewards,
        ..GameConfig::default()
    };
    let train = TrainConfig { epochs: 25, episodes_per_epoch: 200, max_train_steps: 50_000, ..TrainConfig::default() };
    let matchup = Matchup { pursuers: Method::MaDqn, evaders: Method::Naive };
    let mut trainer = Trainer::new(&game, &train, matchup, 3)
        .map_err(|e| e.to_string())?
        .with_controller(Team::Evader, Controller::Stationary(StationaryPolicy));
    while !trainer.finished() {
        trainer.run_epoch().map_err(|e| e.to_string())?;
    }
    ensure(trainer.env_steps <= 50_000, || format!("{} training steps", trainer.env_steps))?;

    trainer.pursuers.set_mode(0.0, false);
    let mut optimal = 0;
    for i in 0..100u64 {
        let seed = 9_000_000 + i;
        let start = GameState::new(&game, seed).map_err(|e| e.to_string())?;
        let shortest = flood_distance(&start.grid, start.pursuers[0], &start.targets).expect("open grid");
        let res = run_episode(&game, seed, trainer.pursuers.policy(), &mut StationaryPolicy, Matchup::default(), false, &mut NoObserver)
            .map_err(|e| e.to_string())?;
        if res.status == GameStatus::PursuersWinTarget && res.steps as usize == shortest {
            optimal += 1;
        }
    }
    ensure(optimal >= 95, || format!("{optimal}/100 optimal episodes after {} steps", trainer.env_steps))?;
    Ok(format!("{optimal}/100 optimal episodes after {} training steps", trainer.env_steps))
}

fn desk_run(dir: &std::path::Path, scenario: Scenario, method: Method, settings: Settings, seed: u64) -> Result<RunConfig, String> {
    RunConfig::new(scenario, Team::Pursuer, method, Method::Naive, settings, dir.to_path_buf(), seed).map_err(|e| e.to_string())
}

fn desk_learning_signal() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = Scenario { pursuers: 2, evaders: 2 };
    let cfg = desk_run(dir.path(), scenario, Method::MapelP2psr, Settings::default(), 1)?;
    let (epochs, episodes) = (cfg.settings.train.epochs, cfg.settings.train.episodes_per_epoch);
    ensure((epochs, episodes) == (30, 100), || format!("desk profile is {epochs} x {episodes}"))?;
    let out = run::train(&cfg, |_| {}).map_err(|e| e.to_string())?;
    let load = |p: &std::path::Path| Checkpoint::load(p).map_err(|e| e.to_string());
    let eval = |ck: &Checkpoint| run::evaluate_checkpoint(ck, Method::Naive, 500, 1_000_000).map_err(|e| e.to_string());
    let before = eval(&load(&out.untrained_checkpoint)?)?;
    let after = eval(&load(&out.final_checkpoint)?)?;
    let gain = after.avg_team_reward(Team::Pursuer) - before.avg_team_reward(Team::Pursuer);
    let detail = format!(
        "pursuer team reward {:.3} -> {:.3} (gain {gain:.3}; per agent {:.3} -> {:.3}); pursuer wins {} -> {} of 500",
        before.avg_team_reward(Team::Pursuer),
        after.avg_team_reward(Team::Pursuer),
        before.avg_reward(Team::Pursuer),
        after.avg_reward(Team::Pursuer),
        before.pursuer_wins(),
        after.pursuer_wins(),
    );
    ensure(gain >= 0.1, || detail.clone())?;
    Ok(detail)
}

fn reproducible_metrics() -> Verdict {
    let mut settings = Settings::default();
    settings.train.epochs = 3;
    settings.train.episodes_per_epoch = 10;
    let scenario = Scenario { pursuers: 2, evaders: 2 };
    for method in [Method::MapelP2psr, Method::MapelRsr, Method::MaDqn] {
        let mut files = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let out = run::train(&desk_run(dir.path(), scenario, method, settings.clone(), 42)?, |_| {})
                .map_err(|e| e.to_string())?;
            files.push(std::fs::read(&out.metrics_path).map_err(|e| e.to_string())?);
        }
        ensure(files[0] == files[1], || format!("{} metrics differ", method.name()))?;
    }
    Ok("metrics.csv byte-identical across repeated runs for mapel-p2psr, mapel-rsr, ma-dqn".into())
}

fn p2psr_vs_rsr() -> Verdict {
    let mut settings = Settings::default();
    settings.train.epochs = 10;
    settings.train.episodes_per_epoch = 50;
    let scenario = Scenario { pursuers: 4, evaders: 4 };
    let mut reports = Vec::new();
    for method in [Method::MapelP2psr, Method::MapelRsr] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = run::train(&desk_run(dir.path(), scenario, method, settings.clone(), 11)?, |_| {})
            .map_err(|e| e.to_string())?;
        let ck = Checkpoint::load(&out.final_checkpoint).map_err(|e| e.to_string())?;
        reports.push(run::evaluate_checkpoint(&ck, Method::Naive, 500, 2_000_000).map_err(|e| e.to_string())?);
    }
    let (p, r) = (&reports[0], &reports[1]);
    Ok(format!(
        "4v4, 10 x 50 episodes: complete wins p2psr {:.1}% vs rsr {:.1}%, team reward {:.3} vs {:.3}; p2psr ahead on complete wins: {}",
        100.0 * p.complete_win_rate(),
        100.0 * r.complete_win_rate(),
        p.avg_team_reward(Team::Pursuer),
        r.avg_team_reward(Team::Pursuer),
        if p.complete_win_rate() > r.complete_win_rate() { "yes" } else { "no" },
    ))
}

const CRITERIA: [Criterion; 9] = [
    Criterion { id: 1, name: "environment invariants", limit: Some(Duration::from_secs(120)), gating: true, run: env_invariants },
    Criterion { id: 2, name: "BFS vs flood fill", limit: Some(Duration::from_secs(60)), gating: true, run: bfs_oracle },
    Criterion { id: 3, name: "line of sight vs dense sampling", limit: Some(Duration::from_secs(60)), gating: true, run: los_oracle },
    Criterion { id: 4, name: "topology edge counts", limit: None, gating: true, run: topology_counts },
    Criterion { id: 5, name: "gradient check", limit: Some(Duration::from_secs(60)), gating: true, run: gradient_check },
    Criterion { id: 6, name: "trivial MDP convergence", limit: Some(Duration::from_secs(600)), gating: true, run: trivial_mdp },
    Criterion { id: 7, name: "desk-scale learning signal", limit: Some(Duration::from_secs(1800)), gating: true, run: desk_learning_signal },
    Criterion { id: 8, name: "reproducible metrics", limit: None, gating: true, run: reproducible_metrics },
    Criterion { id: 9, name: "P2PSR vs RSR report (non-gating)", limit: None, gating: false, run: p2psr_vs_rsr },
];

fn main() -> ExitCode {
    // Honour `cargo test <filter>`: only run when the filter names this suite or nothing at all.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    for c in &CRITERIA {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs())),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} [{}] {}: {detail} ({:.1}s)", c.id, c.name, elapsed.as_secs_f64());
        if outcome.is_err() && c.gating {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("acceptance: all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} gating criteria failed");
        ExitCode::FAILURE
    }
}
