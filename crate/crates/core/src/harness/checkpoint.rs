//! Versioned parameter snapshots.
//!
//! File layout (little endian):
//!
//! ```text
//! magic "MARLCKPT" | version u32 | payload length u64 | payload | sha256(payload)
//! payload = meta length u32 | meta JSON | tensor count u32 | tensors
//! tensor  = name length u16 | name | rows u32 | cols u32 | rows*cols f64
//! ```
//!
//! Optimizer moments and replay contents are not stored.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{parse_entries, RunConfig};
use crate::algos::{AgentLayout, Trainer};
use crate::error::{Error, Result};
use crate::nn::Params;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MARLCKPT";
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub scenario: String,
    pub algo: String,
    pub mixer: String,
    pub sharing: String,
    pub staged_watershed: Option<u64>,
    pub obs_lens: Vec<usize>,
    pub state_len: usize,
    pub teams: Vec<Vec<usize>>,
    pub timestep: u64,
    pub updates: u64,
    /// The run's resolved configuration text.
    pub config: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<(String, [usize; 2], Vec<f64>)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corrupt("truncated payload".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    /// The stored configuration omits the output directory so identical runs
    /// written to different places give identical files.
    pub fn from_trainer(trainer: &Trainer, cfg: &RunConfig, timestep: u64) -> Self {
        let cfg = RunConfig { out: None, ..cfg.clone() };
        Checkpoint {
            meta: CheckpointMeta {
                format_version: FORMAT_VERSION,
                scenario: cfg.scenario.to_string(),
                algo: trainer.cfg.algo.to_string(),
                mixer: trainer.cfg.mixer.as_str().to_string(),
                sharing: trainer.cfg.sharing.as_str().to_string(),
                staged_watershed: trainer.cfg.staged_watershed,
                obs_lens: trainer.layout.obs_lens.clone(),
                state_len: trainer.layout.state_len,
                teams: trainer.layout.teams.clone(),
                timestep,
                updates: trainer.updates,
                config: cfg.resolved(),
            },
            tensors: trainer.named(""),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let mut payload = Vec::new();
        payload.extend((meta.len() as u32).to_le_bytes());
        payload.extend(&meta);
        payload.extend((self.tensors.len() as u32).to_le_bytes());
        for (name, shape, values) in &self.tensors {
            payload.extend((name.len() as u16).to_le_bytes());
            payload.extend(name.as_bytes());
            payload.extend((shape[0] as u32).to_le_bytes());
            payload.extend((shape[1] as u32).to_le_bytes());
            for v in values {
                payload.extend(v.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(payload.len() + 52);
        out.extend(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        out.extend((payload.len() as u64).to_le_bytes());
        out.extend(&payload);
        out.extend(Sha256::digest(&payload));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Corrupt("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Incompatible(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if bytes.len() != 20usize.saturating_add(len).saturating_add(DIGEST_LEN) {
            return Err(Error::Corrupt(format!("expected {len} payload bytes, file has {}", bytes.len())));
        }
        let payload = &bytes[20..20 + len];
        if Sha256::digest(payload).as_slice() != &bytes[20 + len..] {
            return Err(Error::Corrupt("digest mismatch".into()));
        }

        let mut r = Reader { bytes: payload, pos: 0 };
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::Corrupt(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Corrupt("tensor name is not utf-8".into()))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Corrupt("tensor too large".into()))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("tensor too large".into()))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, [rows, cols], values));
        }
        if r.pos != payload.len() {
            return Err(Error::Corrupt("trailing bytes after tensors".into()));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        RunConfig::resolve(&parse_entries(&self.meta.config)?, &[])
    }

    pub fn layout(&self) -> AgentLayout {
        AgentLayout {
            obs_lens: self.meta.obs_lens.clone(),
            state_len: self.meta.state_len,
            teams: self.meta.teams.clone(),
        }
    }

    /// Incompatibility error unless the stored networks fit `layout`.
    pub fn check_layout(&self, layout: &AgentLayout) -> Result<()> {
        let mine = self.layout();
        if mine.obs_lens != layout.obs_lens || mine.state_len != layout.state_len {
            return Err(Error::Incompatible(format!(
                "checkpoint (version {}) was trained on {} with observation lengths {:?}, scenario has {:?}",
                self.meta.format_version, self.meta.scenario, mine.obs_lens, layout.obs_lens
            )));
        }
        Ok(())
    }

    /// Rebuild the trainer with every stored parameter restored bit-exactly.
    pub fn to_trainer(&self) -> Result<Trainer> {
        let cfg = self.run_config()?;
        let mut trainer = Trainer::new(cfg.algo_config(), self.layout(), &mut ChaCha8Rng::seed_from_u64(0))?;
        let expected: Vec<(String, [usize; 2])> = trainer.named("").into_iter().map(|(n, s, _)| (n, s)).collect();
        let stored: Vec<(String, [usize; 2])> = self.tensors.iter().map(|(n, s, _)| (n.clone(), *s)).collect();
        if expected != stored {
            return Err(Error::Incompatible("stored tensors do not match the configured networks".into()));
        }
        let flat: Vec<f64> = self.tensors.iter().flat_map(|(_, _, v)| v.iter().copied()).collect();
        trainer.set_flat_values(&flat)?;
        trainer.updates = self.meta.updates;
        Ok(trainer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{Scenario, ScenarioId};

    fn sample() -> (Trainer, RunConfig) {
        let mut cfg = RunConfig::default();
        cfg.set("scenario", "spread-3a").unwrap();
        cfg.set("Num-adversaries", "0").unwrap();
        cfg.set("hidden", "8").unwrap();
        cfg.set("algo", "facmac").unwrap();
        cfg.validate().unwrap();
        let layout = AgentLayout::from_scenario(&Scenario::new(ScenarioId::Spread3a));
        let trainer = Trainer::new(cfg.algo_config(), layout, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        (trainer, cfg)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (trainer, cfg) = sample();
        let ck = Checkpoint::from_trainer(&trainer, &cfg, 42);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta.timestep, 42);
        let restored = back.to_trainer().unwrap();
        let bits = |t: &Trainer| t.flat_values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&restored), bits(&trainer));
    }

    #[test]
    fn every_corrupted_byte_is_detected() {
        let (trainer, cfg) = sample();
        let bytes = Checkpoint::from_trainer(&trainer, &cfg, 0).to_bytes();
        let step = (bytes.len() / 997).max(1);
        for i in (0..bytes.len()).step_by(step) {
            let mut bad = bytes.clone();
            bad[i] ^= 0x5a;
            assert!(Checkpoint::from_bytes(&bad).is_err(), "byte {i}");
        }
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut future = bytes.clone();
        future[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&future), Err(Error::Incompatible(_))));
    }

    #[test]
    fn layout_mismatch_is_incompatible() {
        let (trainer, cfg) = sample();
        let ck = Checkpoint::from_trainer(&trainer, &cfg, 0);
        let other = AgentLayout::from_scenario(&Scenario::new(ScenarioId::Spread6a));
        assert!(matches!(ck.check_layout(&other), Err(Error::Incompatible(_))));
        assert!(ck.check_layout(&trainer.layout).is_ok());
    }
}
