//! Episode records as JSON lines: one header, one line per step, one footer.

use std::io::{BufRead, Write};

use pursuit_core::comms::Topology;
use pursuit_core::env::{GameConfig, GameStatus, TeamRewards};
use pursuit_core::rollout::{resimulate, EpisodeRecord, Method, Snapshot, StepRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header {
        config_hash: String,
        seed: u64,
        config: GameConfig,
        pursuer_method: Method,
        evader_method: Method,
        pursuer_topology: Topology,
        evader_topology: Topology,
        initial: Snapshot,
    },
    Step(StepRecord),
    Footer {
        steps: usize,
        status: GameStatus,
        rewards: TeamRewards,
    },
}

/// Hex of the first 8 bytes of SHA-256 over the JSON form of `config`.
pub fn game_hash(config: &GameConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(json.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn corrupt(msg: impl Into<String>) -> HarnessError {
    HarnessError::CorruptRecord(msg.into())
}

pub fn write_record(mut w: impl Write, record: &EpisodeRecord) -> std::io::Result<()> {
    let header = Line::Header {
        config_hash: game_hash(&record.config),
        seed: record.seed,
        config: record.config,
        pursuer_method: record.pursuer_method,
        evader_method: record.evader_method,
        pursuer_topology: record.pursuer_topology.clone(),
        evader_topology: record.evader_topology.clone(),
        initial: record.initial.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for s in &record.steps {
        serde_json::to_writer(&mut w, &Line::Step(s.clone()))?;
        w.write_all(b"\n")?;
    }
    let footer = Line::Footer { steps: record.steps.len(), status: record.status, rewards: record.rewards.clone() };
    serde_json::to_writer(&mut w, &footer)?;
    w.write_all(b"\n")
}

pub fn to_string(record: &EpisodeRecord) -> String {
    let mut buf = Vec::new();
    write_record(&mut buf, record).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Parses one record and checks it against a fresh re-simulation.
pub fn read_record(r: impl BufRead) -> Result<EpisodeRecord> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
    let mut next = || -> Result<Option<(usize, Line)>> {
        match lines.next() {
            None => Ok(None),
            Some((i, Err(e))) => Err(corrupt(format!("line {}: {e}", i + 1))),
            Some((i, Ok(text))) => serde_json::from_str(&text)
                .map(|l| Some((i + 1, l)))
                .map_err(|e| corrupt(format!("line {}: {e}", i + 1))),
        }
    };
    let Some((_, Line::Header { config_hash, seed, config, pursuer_method, evader_method, pursuer_topology, evader_topology, initial })) = next()? else {
        return Err(corrupt("first line must be the header"));
    };
    if game_hash(&config) != config_hash {
        return Err(corrupt("config hash does not match the embedded config"));
    }
    let mut steps = Vec::new();
    let (status, rewards) = loop {
        match next()? {
            Some((_, Line::Step(s))) => steps.push(s),
            Some((line, Line::Footer { steps: n, status, rewards })) => {
                if n != steps.len() {
                    return Err(corrupt(format!("line {line}: footer counts {n} steps, found {}", steps.len())));
                }
                break (status, rewards);
            }
            Some((line, Line::Header { .. })) => return Err(corrupt(format!("line {line}: unexpected header"))),
            None => return Err(corrupt("missing footer")),
        }
    };
    if next()?.is_some() {
        return Err(corrupt("content after footer"));
    }
    let record = EpisodeRecord {
        config,
        seed,
        pursuer_method,
        evader_method,
        pursuer_topology,
        evader_topology,
        initial,
        steps,
        status,
        rewards,
    };
    resimulate(&record).map_err(|e| corrupt(format!("re-simulation: {e}")))?;
    Ok(record)
}

pub fn from_str(text: &str) -> Result<EpisodeRecord> {
    read_record(text.as_bytes())
}
