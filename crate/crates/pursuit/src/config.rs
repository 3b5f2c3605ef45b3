//! Flat `key = value` run configuration.
//!
//! Every [`GameConfig`] and [`TrainConfig`] field has a key. Blank lines and
//! `#` comments are ignored; unknown or repeated keys are errors. Keys not
//! present keep the desk-scale defaults. [`canonical_text`] writes every key
//! in a fixed order and is what checkpoints embed and hash.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use pursuit_core::comms::TopologyKind;
use pursuit_core::env::{Connectivity, GameConfig, Team};
use pursuit_core::qlearning::TrainConfig;
use pursuit_core::rollout::{Matchup, Method};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

/// Both configs, starting from the desk-scale profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub game: GameConfig,
    pub train: TrainConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Self { game: GameConfig::desk(), train: TrainConfig::desk() }
    }
}

fn connectivity_name(c: Connectivity) -> &'static str {
    match c {
        Connectivity::Four => "four",
        Connectivity::FourPlusStay => "four_plus_stay",
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, HarnessError> {
    value.parse().map_err(|_| HarnessError::Config { line, msg: format!("bad value {value:?} for {key}") })
}

macro_rules! settings_keys {
    ($($key:literal => $($field:ident).+ ;)*) => {
        const KEYS: &[&str] = &[$($key,)* "connectivity"];

        fn assign(s: &mut Settings, key: &str, value: &str, line: usize) -> Result<(), HarnessError> {
            match key {
                $($key => s.$($field).+ = parse_value(key, value, line)?,)*
                "connectivity" => {
                    s.game.connectivity = match value {
                        "four" => Connectivity::Four,
                        "four_plus_stay" => Connectivity::FourPlusStay,
                        _ => return Err(HarnessError::Config { line, msg: format!("bad connectivity {value:?}") }),
                    }
                }
                _ => return Err(HarnessError::Config { line, msg: format!("unknown key {key:?}") }),
            }
            Ok(())
        }

        /// Every key in a fixed order, one `key = value` per line.
        pub fn canonical_text(s: &Settings) -> String {
            let mut out = String::new();
            $(writeln!(out, "{} = {}", $key, s.$($field).+).expect("string write");)*
            writeln!(out, "connectivity = {}", connectivity_name(s.game.connectivity)).expect("string write");
            out
        }
    };
}

settings_keys! {
    "width" => game.width;
    "height" => game.height;
    "n_pursuers" => game.n_pursuers;
    "n_evaders" => game.n_evaders;
    "sense_length" => game.sense_length;
    "sense_width" => game.sense_width;
    "speed" => game.speed;
    "target_size" => game.target_size;
    "obstacle_count" => game.obstacle_count;
    "obstacle_size_min" => game.obstacle_size_min;
    "obstacle_size_max" => game.obstacle_size_max;
    "max_steps" => game.max_steps;
    "seed" => game.seed;
    "reward_evader_win" => game.rewards.evader_win;
    "reward_pursuer_lose_target" => game.rewards.pursuer_lose_target;
    "reward_pursuer_win_target" => game.rewards.pursuer_win_target;
    "reward_evader_lose_target" => game.rewards.evader_lose_target;
    "reward_pursuer_capture_all" => game.rewards.pursuer_capture_all;
    "reward_evader_all_captured" => game.rewards.evader_all_captured;
    "gamma" => train.gamma;
    "lr" => train.lr;
    "lr_decay_every" => train.lr_decay_every;
    "lr_decay_factor" => train.lr_decay_factor;
    "epsilon_start" => train.epsilon_start;
    "epsilon_end" => train.epsilon_end;
    "epsilon_decay_fraction" => train.epsilon_decay_fraction;
    "batch_size" => train.batch_size;
    "epochs" => train.epochs;
    "episodes_per_epoch" => train.episodes_per_epoch;
    "target_sync" => train.target_sync;
    "bptt_len" => train.bptt_len;
    "history_len" => train.history_len;
    "replay_transitions" => train.replay_transitions;
    "replay_episodes" => train.replay_episodes;
    "hidden_size" => train.hidden_size;
    "conv1_maps" => train.conv1_maps;
    "conv2_maps" => train.conv2_maps;
    "learning_starts" => train.learning_starts;
    "checkpoint_every" => train.checkpoint_every;
    "max_train_steps" => train.max_train_steps;
    "share_parameters" => train.share_parameters;
    "huber_delta" => train.huber_delta;
    "double_q" => train.double_q;
}

/// All recognised keys.
pub fn keys() -> &'static [&'static str] {
    KEYS
}

/// Applies `text` on top of `base`.
pub fn parse_onto(base: Settings, text: &str) -> Result<Settings, HarnessError> {
    let mut s = base;
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| HarnessError::Config { line, msg: format!("expected `key = value`, got {content:?}") })?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(HarnessError::Config { line, msg: format!("duplicate key {key:?}") });
        }
        assign(&mut s, key, value, line)?;
    }
    s.game.validate()?;
    s.train.validate()?;
    Ok(s)
}

pub fn parse(text: &str) -> Result<Settings, HarnessError> {
    parse_onto(Settings::default(), text)
}

/// First 8 bytes of SHA-256 over the canonical text.
pub fn config_hash(s: &Settings) -> [u8; 8] {
    let digest = Sha256::digest(canonical_text(s).as_bytes());
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

pub fn hash_hex(hash: &[u8; 8]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// `PvE` team sizes such as `2v2` or `4v3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub pursuers: usize,
    pub evaders: usize,
}

impl FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::Usage(format!("scenario must look like 2v2, got {s:?}"));
        let (p, e) = s.split_once(['v', 'V']).ok_or_else(bad)?;
        Ok(Scenario { pursuers: p.parse().map_err(|_| bad())?, evaders: e.parse().map_err(|_| bad())? })
    }
}

pub fn parse_team(s: &str) -> Result<Team, HarnessError> {
    match s {
        "pursuers" | "pursuer" => Ok(Team::Pursuer),
        "evaders" | "evader" => Ok(Team::Evader),
        _ => Err(HarnessError::Usage(format!("team must be pursuers or evaders, got {s:?}"))),
    }
}

pub fn parse_method(s: &str) -> Result<Method, HarnessError> {
    Method::from_name(s).ok_or_else(|| {
        HarnessError::Usage(format!("method must be one of naive, ma-dqn, mapel-p2psr, mapel-rsr; got {s:?}"))
    })
}

/// One training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub matchup: Matchup,
    pub settings: Settings,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    /// `team` learns with `method` against `opponent`.
    pub fn new(
        scenario: Scenario,
        team: Team,
        method: Method,
        opponent: Method,
        mut settings: Settings,
        out_dir: PathBuf,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        settings.game.n_pursuers = scenario.pursuers;
        settings.game.n_evaders = scenario.evaders;
        settings.game.seed = seed;
        let matchup = match team {
            Team::Pursuer => Matchup { pursuers: method, evaders: opponent },
            Team::Evader => Matchup { pursuers: opponent, evaders: method },
        };
        let run = Self { scenario, matchup, settings, out_dir, seed };
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        for (n, method) in [(self.scenario.pursuers, self.matchup.pursuers), (self.scenario.evaders, self.matchup.evaders)] {
            if !(2..=5).contains(&n) {
                return Err(HarnessError::Usage(format!("team sizes must lie in 2..=5, got {n}")));
            }
            if method.topology_kind() == TopologyKind::Rsr && n < 2 {
                return Err(HarnessError::Usage("mapel-rsr needs at least 2 agents".into()));
            }
        }
        let learners = [self.matchup.pursuers, self.matchup.evaders].iter().filter(|m| **m != Method::Naive).count();
        if learners != 1 {
            return Err(HarnessError::Usage("exactly one team learns; the other plays naive".into()));
        }
        self.settings.game.validate()?;
        self.settings.train.validate()?;
        Ok(())
    }

    /// The learning team.
    pub fn team(&self) -> Team {
        if self.matchup.pursuers != Method::Naive {
            Team::Pursuer
        } else {
            Team::Evader
        }
    }

    pub fn method(&self) -> Method {
        match self.team() {
            Team::Pursuer => self.matchup.pursuers,
            Team::Evader => self.matchup.evaders,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip() {
        let mut s = Settings::default();
        s.game.width = 20;
        s.train.lr = 0.0025;
        s.game.connectivity = Connectivity::Four;
        let text = canonical_text(&s);
        assert_eq!(parse(&text).unwrap(), s);
        assert_eq!(text.lines().count(), keys().len());
    }

    #[test]
    fn comments_and_defaults() {
        let s = parse("# desk\n\nwidth = 12   # narrower\nheight=12\n").unwrap();
        assert_eq!((s.game.width, s.game.height), (12, 12));
        assert_eq!(s.train, TrainConfig::desk());
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse("width = 16\nwidht = 3\n") {
            Err(HarnessError::Config { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("widht"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("lr = fast"), Err(HarnessError::Config { line: 1, .. })));
        assert!(matches!(parse("lr = 1\nlr = 2"), Err(HarnessError::Config { line: 2, .. })));
        assert!(matches!(parse("just words"), Err(HarnessError::Config { .. })));
        assert!(matches!(parse("gamma = 1.5"), Err(HarnessError::Core(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Settings::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.train.epochs += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn scenario_and_run_checks() {
        assert_eq!("3v4".parse::<Scenario>().unwrap(), Scenario { pursuers: 3, evaders: 4 });
        assert!("3x4".parse::<Scenario>().is_err());
        let mk = |sc: &str, m: Method| {
            RunConfig::new(sc.parse().unwrap(), Team::Pursuer, m, Method::Naive, Settings::default(), "out".into(), 1)
        };
        assert!(mk("2v2", Method::MapelRsr).is_ok());
        assert!(mk("6v2", Method::MapelP2psr).is_err());
        assert!(mk("1v2", Method::MaDqn).is_err());
        assert!(mk("2v2", Method::Naive).is_err());
    }
}
