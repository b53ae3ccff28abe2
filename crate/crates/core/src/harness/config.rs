//! Run configuration: flat `key = value` files, scenario presets and the
//! resolved echo written next to every run.
//!
//! Resolution order is defaults, then the scenario preset for the chosen scale,
//! then the file, then command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::algos::{AlgoConfig, AlgoId, CriticSharing};
use crate::error::{Error, Result};
use crate::nn::MixerKind;
use crate::scenarios::{Scenario, ScenarioId, ScenarioKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// Hyperparameters of the published runs.
    Full,
    /// Short runs that finish in minutes on one core.
    Desk,
}

impl Scale {
    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Full => "full",
            Scale::Desk => "desk",
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            _ => Err(Error::config("scale", format!("expected full or desk, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioId,
    pub algo: AlgoId,
    pub scale: Scale,
    pub time_steps: u64,
    pub max_episode_len: usize,
    pub num_adversaries: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub epsilon: f64,
    pub noise_rate: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub seq_length: usize,
    pub tau: f64,
    pub mixer: MixerKind,
    pub sharing: CriticSharing,
    pub staged_watershed: Option<u64>,
    pub hidden: usize,
    pub mixer_embed: usize,
    pub grad_clip: Option<f64>,
    pub replay_capacity: usize,
    pub seed: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub record_wall_clock: bool,
    pub out: Option<PathBuf>,
}

/// Every key accepted in a config file, in echo order.
pub const KEYS: &[&str] = &[
    "scenario",
    "algo",
    "scale",
    "max-episode-len",
    "time-steps",
    "Num-adversaries",
    "Lr-actor",
    "Lr-critic",
    "Epsilon",
    "Noise-rate",
    "Gamma",
    "Batch-size",
    "seq-length",
    "tau",
    "mixer",
    "sharing",
    "staged-watershed",
    "hidden",
    "mixer-embed",
    "grad-clip",
    "replay-capacity",
    "seed",
    "eval-every",
    "eval-episodes",
    "record-wall-clock",
    "out",
];

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioId::Spread3a,
            algo: AlgoId::Maddpg,
            scale: Scale::Full,
            time_steps: 2_000_000,
            max_episode_len: 100,
            num_adversaries: 1,
            lr_actor: 0.001,
            lr_critic: 0.01,
            epsilon: 0.1,
            noise_rate: 0.1,
            gamma: 0.95,
            batch_size: 256,
            seq_length: 5,
            tau: 0.01,
            mixer: MixerKind::NonMonotonic,
            sharing: CriticSharing::OwnCritics,
            staged_watershed: None,
            hidden: 64,
            mixer_embed: 32,
            grad_clip: None,
            replay_capacity: crate::buffers::DEFAULT_REPLAY_CAPACITY,
            seed: 0,
            eval_every: 5000,
            eval_episodes: 10,
            record_wall_clock: false,
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_float(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, "must be finite"))
    }
}

/// Scenario hyperparameter tables, plus the shorter desk schedule.
pub fn preset(scenario: ScenarioId, scale: Scale) -> Vec<(&'static str, String)> {
    let (adversaries, lr_critic, batch, seq) = match scenario {
        ScenarioId::ObstaclePredatorPrey => (1, 0.01, 256, 3),
        ScenarioId::Spread3a => (0, 0.01, 128, 5),
        ScenarioId::Spread6a | ScenarioId::Spread9a => (0, 0.01, 32, 3),
        ScenarioId::Tunnel | ScenarioId::SimpleTunnel => (0, 0.01, 128, 5),
        ScenarioId::SimpleTunnel6a => (0, 0.001, 32, 3),
    };
    let mut out = vec![
        ("Num-adversaries", adversaries.to_string()),
        ("Lr-actor", "0.001".to_string()),
        ("Lr-critic", lr_critic.to_string()),
        ("Batch-size", batch.to_string()),
        ("seq-length", seq.to_string()),
    ];
    if scale == Scale::Desk {
        out.push(("time-steps", "100000".to_string()));
        out.push(("eval-every", "5000".to_string()));
        out.push(("eval-episodes", "10".to_string()));
    }
    out
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "scenario" => self.scenario = value.parse()?,
            "algo" => self.algo = value.parse()?,
            "scale" => self.scale = value.parse()?,
            "max-episode-len" => self.max_episode_len = parse(key, value)?,
            "time-steps" => self.time_steps = parse(key, value)?,
            "Num-adversaries" => self.num_adversaries = parse(key, value)?,
            "Lr-actor" => self.lr_actor = parse_float(key, value)?,
            "Lr-critic" => self.lr_critic = parse_float(key, value)?,
            "Epsilon" => self.epsilon = parse_float(key, value)?,
            "Noise-rate" => self.noise_rate = parse_float(key, value)?,
            "Gamma" => self.gamma = parse_float(key, value)?,
            "Batch-size" => self.batch_size = parse(key, value)?,
            "seq-length" => self.seq_length = parse(key, value)?,
            "tau" => self.tau = parse_float(key, value)?,
            "mixer" => self.mixer = value.parse()?,
            "sharing" => self.sharing = value.parse()?,
            "staged-watershed" => {
                self.staged_watershed = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "hidden" => self.hidden = parse(key, value)?,
            "mixer-embed" => self.mixer_embed = parse(key, value)?,
            "grad-clip" => {
                self.grad_clip = match value {
                    "" | "none" => None,
                    v => Some(parse_float(key, v)?),
                }
            }
            "replay-capacity" => self.replay_capacity = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "eval-every" => self.eval_every = parse(key, value)?,
            "eval-episodes" => self.eval_episodes = parse(key, value)?,
            "record-wall-clock" => self.record_wall_clock = parse(key, value)?,
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "scenario" => self.scenario.to_string(),
            "algo" => self.algo.to_string(),
            "scale" => self.scale.as_str().to_string(),
            "max-episode-len" => self.max_episode_len.to_string(),
            "time-steps" => self.time_steps.to_string(),
            "Num-adversaries" => self.num_adversaries.to_string(),
            "Lr-actor" => self.lr_actor.to_string(),
            "Lr-critic" => self.lr_critic.to_string(),
            "Epsilon" => self.epsilon.to_string(),
            "Noise-rate" => self.noise_rate.to_string(),
            "Gamma" => self.gamma.to_string(),
            "Batch-size" => self.batch_size.to_string(),
            "seq-length" => self.seq_length.to_string(),
            "tau" => self.tau.to_string(),
            "mixer" => self.mixer.as_str().to_string(),
            "sharing" => self.sharing.as_str().to_string(),
            "staged-watershed" => self
                .staged_watershed
                .map_or_else(|| "none".to_string(), |w| w.to_string()),
            "hidden" => self.hidden.to_string(),
            "mixer-embed" => self.mixer_embed.to_string(),
            "grad-clip" => self
                .grad_clip
                .map_or_else(|| "none".to_string(), |c| c.to_string()),
            "replay-capacity" => self.replay_capacity.to_string(),
            "seed" => self.seed.to_string(),
            "eval-every" => self.eval_every.to_string(),
            "eval-episodes" => self.eval_episodes.to_string(),
            "record-wall-clock" => self.record_wall_clock.to_string(),
            "out" => self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            _ => return None,
        })
    }

    /// Resolve defaults, preset, file entries and overrides in that order.
    pub fn resolve(file: &[(String, String)], overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        // The preset depends on the scenario and scale, which may come from
        // either layer.
        for (k, v) in file.iter().chain(overrides) {
            match k.as_str() {
                "scenario" | "scale" => cfg.set(k, v)?,
                k if !KEYS.contains(&k) => return Err(Error::config(k, "unknown configuration key")),
                _ => {}
            }
        }
        for (k, v) in preset(cfg.scenario, cfg.scale) {
            cfg.set(k, &v)?;
        }
        for (k, v) in file.iter().chain(overrides) {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let scenario = Scenario::new(self.scenario);
        if self.num_adversaries != scenario.n_adversaries {
            return Err(Error::config(
                "Num-adversaries",
                format!("{} has {} adversaries, got {}", self.scenario, scenario.n_adversaries, self.num_adversaries),
            ));
        }
        if self.algo == AlgoId::Facmac && self.scenario.kind() == ScenarioKind::SimpleTunnel {
            return Err(Error::config(
                "algo",
                "facmac needs a shared reward; simple tunnel rewards agents individually",
            ));
        }
        if self.max_episode_len == 0 {
            return Err(Error::config("max-episode-len", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("Epsilon", "must lie in [0, 1]"));
        }
        if self.noise_rate < 0.0 {
            return Err(Error::config("Noise-rate", "must be non-negative"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval-every", "must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval-episodes", "must be positive"));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::config("replay-capacity", "must hold at least one batch"));
        }
        self.algo_config().validate()
    }

    pub fn algo_config(&self) -> AlgoConfig {
        AlgoConfig {
            algo: self.algo,
            gamma: self.gamma,
            lr_actor: self.lr_actor,
            lr_critic: self.lr_critic,
            tau: self.tau,
            batch_size: self.batch_size,
            seq_length: if self.algo.uses_windows() { self.seq_length } else { 1 },
            mixer: self.mixer,
            sharing: self.sharing,
            staged_watershed: self.staged_watershed,
            hidden: self.hidden,
            mixer_embed: self.mixer_embed,
            grad_clip: self.grad_clip,
        }
    }

    /// The `config.resolved` text; loading it reproduces this configuration.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).unwrap_or_default());
        }
        s
    }
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", i + 1), format!("expected `key = value`, got `{line}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Read an optional config file and apply `overrides` on top.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_entries(&text)?
        }
        None => Vec::new(),
    };
    RunConfig::resolve(&file, overrides)
}
