//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      6 bytes  "MAPEL1"
//! hash       8 bytes  config hash of the embedded text
//! text       u32 length + UTF-8 canonical config
//! method     u8 length + name
//! team       u8 (0 pursuers, 1 evaders)
//! seed       u64
//! epoch      u32
//! updates    u64
//! nets       u32 count, then per net:
//!              four tensor groups (params, target, adam_m, adam_v), each
//!              u32 count then per tensor: u16 name length, name, u8 rank,
//!              u32 dims, f32 data
//!              adam_t u64
//! ```
//!
//! Identical inputs give identical bytes.

use std::path::Path;

use pursuit_core::env::Team;
use pursuit_core::nn::ParamLayout;
use pursuit_core::qlearning::{Adam, NetState};
use pursuit_core::rollout::Method;
use pursuit_core::train::Controller;
use pursuit_core::{rng_for, Stream};

use crate::config::{self, Settings};
use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 6] = b"MAPEL1";

const GROUPS: [&str; 4] = ["params", "target", "adam_m", "adam_v"];

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub settings: Settings,
    pub method: Method,
    pub team: Team,
    pub seed: u64,
    pub epoch: u32,
    pub updates: u64,
    pub nets: Vec<NetState>,
}

impl Checkpoint {
    /// Snapshot of `controller`, which must be a learner.
    pub fn capture(
        settings: &Settings,
        method: Method,
        team: Team,
        seed: u64,
        epoch: u32,
        controller: &Controller,
    ) -> Result<Self> {
        let (_, nets) = controller
            .nets()
            .ok_or_else(|| HarnessError::Usage(format!("{} has no parameters to save", method.name())))?;
        Ok(Self {
            settings: settings.clone(),
            method,
            team,
            seed,
            epoch,
            updates: controller.updates(),
            nets: nets.to_vec(),
        })
    }

    /// A fresh controller with this checkpoint's parameters installed.
    pub fn controller(&self) -> Result<Controller> {
        let mut rng = rng_for(self.seed, Stream::Init);
        let mut c = Controller::for_method(self.method, &self.settings.game, &self.settings.train, self.team, &mut rng);
        c.load_nets(self.nets.clone(), self.updates)?;
        Ok(c)
    }

    fn layout(&self) -> Result<ParamLayout> {
        let mut rng = rng_for(0, Stream::Init);
        let c = Controller::for_method(self.method, &self.settings.game, &self.settings.train, self.team, &mut rng);
        c.nets()
            .map(|(l, _)| l.clone())
            .ok_or_else(|| HarnessError::CorruptCheckpoint(format!("method {} has no parameters", self.method.name())))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let layout = self.layout()?;
        let text = config::canonical_text(&self.settings);
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&config::config_hash(&self.settings));
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        let name = self.method.name();
        out.push(name.len() as u8);
        out.extend_from_slice(name.as_bytes());
        out.push(match self.team {
            Team::Pursuer => 0,
            Team::Evader => 1,
        });
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.updates.to_le_bytes());
        out.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for net in &self.nets {
            for (group, data) in GROUPS.iter().zip([&net.params, &net.target, &net.adam.m, &net.adam.v]) {
                if data.len() != layout.total() {
                    return Err(HarnessError::CorruptCheckpoint(format!("{group} has {} values", data.len())));
                }
                out.extend_from_slice(&(layout.tensors.len() as u32).to_le_bytes());
                for t in &layout.tensors {
                    let full = format!("{group}.{}", t.name);
                    out.extend_from_slice(&(full.len() as u16).to_le_bytes());
                    out.extend_from_slice(full.as_bytes());
                    out.push(t.shape.len() as u8);
                    for &d in &t.shape {
                        out.extend_from_slice(&(d as u32).to_le_bytes());
                    }
                    for v in &data[t.range()] {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            out.extend_from_slice(&net.adam.t.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(MAGIC.len()).map_err(|_| HarnessError::CorruptCheckpoint("file too short".into()))?;
        if magic != MAGIC {
            let found = String::from_utf8_lossy(magic).into_owned();
            return Err(if magic.starts_with(b"MAPEL") {
                HarnessError::CheckpointVersionMismatch { expected: "MAPEL1".into(), found }
            } else {
                HarnessError::CorruptCheckpoint(format!("bad magic {found:?}"))
            });
        }
        let hash: [u8; 8] = r.take(8)?.try_into().expect("8 bytes");
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| HarnessError::CorruptCheckpoint("config text is not UTF-8".into()))?;
        let settings = config::parse(text).map_err(|e| HarnessError::CorruptCheckpoint(format!("config: {e}")))?;
        if config::config_hash(&settings) != hash {
            return Err(HarnessError::CorruptCheckpoint("config hash mismatch".into()));
        }
        let name_len = r.u8()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).unwrap_or("");
        let method = Method::from_name(name)
            .ok_or_else(|| HarnessError::CorruptCheckpoint(format!("unknown method {name:?}")))?;
        let team = match r.u8()? {
            0 => Team::Pursuer,
            1 => Team::Evader,
            b => return Err(HarnessError::CorruptCheckpoint(format!("bad team byte {b}"))),
        };
        let seed = r.u64()?;
        let epoch = r.u32()?;
        let updates = r.u64()?;
        let mut ck = Checkpoint { settings, method, team, seed, epoch, updates, nets: Vec::new() };
        let layout = ck.layout()?;
        let n_nets = r.u32()? as usize;
        for _ in 0..n_nets {
            let mut groups: Vec<Vec<f32>> = Vec::with_capacity(4);
            for group in GROUPS {
                let count = r.u32()? as usize;
                if count != layout.tensors.len() {
                    return Err(HarnessError::CorruptCheckpoint(format!("{group}: {count} tensors")));
                }
                let mut data = Vec::with_capacity(layout.total());
                for t in &layout.tensors {
                    let nl = r.u16()? as usize;
                    let got = r.take(nl)?;
                    if got != format!("{group}.{}", t.name).as_bytes() {
                        return Err(HarnessError::CorruptCheckpoint(format!(
                            "expected tensor {group}.{}, found {:?}",
                            t.name,
                            String::from_utf8_lossy(got)
                        )));
                    }
                    let rank = r.u8()? as usize;
                    let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
                    if dims != t.shape {
                        return Err(HarnessError::CorruptCheckpoint(format!("shape of {} is {dims:?}", t.name)));
                    }
                    for _ in 0..t.len() {
                        data.push(f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")));
                    }
                }
                groups.push(data);
            }
            let t = r.u64()?;
            let v = groups.pop().expect("four groups");
            let m = groups.pop().expect("four groups");
            let target = groups.pop().expect("four groups");
            let params = groups.pop().expect("four groups");
            let mut adam = Adam::new(params.len());
            adam.m = m;
            adam.v = v;
            adam.t = t;
            ck.nets.push(NetState { params, target, adam });
        }
        if r.pos != bytes.len() {
            return Err(HarnessError::CorruptCheckpoint("trailing bytes".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| HarnessError::CorruptCheckpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
