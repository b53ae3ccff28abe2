//! Mixing functions that combine per-agent utilities into a joint value.
//!
//! The hypernetwork mixer computes, for each sample with state `s` and local
//! values `q` (length n):
//!
//! ```text
//! W1 = w(hyper_w1(s))   reshaped n x E
//! b1 = hyper_b1(s)
//! hidden = elu(q W1 + b1)
//! w2 = w(hyper_w2(s))
//! Q_tot = hidden . w2 + hyper_b2(s)
//! ```
//!
//! where `w = abs` for the monotonic variant and the identity otherwise.

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Linear, Mlp, MlpCache, MlpSpec};
use super::tensor::{join, ParamTensor, Params};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MixerKind {
    Vdn,
    Monotonic,
    NonMonotonic,
}

impl MixerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MixerKind::Vdn => "vdn",
            MixerKind::Monotonic => "monotonic",
            MixerKind::NonMonotonic => "nonmonotonic",
        }
    }
}

impl std::str::FromStr for MixerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vdn" => Ok(MixerKind::Vdn),
            "monotonic" | "qmix" => Ok(MixerKind::Monotonic),
            "nonmonotonic" => Ok(MixerKind::NonMonotonic),
            other => Err(Error::config("mixer", format!("unknown mixer `{other}`"))),
        }
    }
}

/// Exact sum of local values.
pub fn mixer_vdn(local_qs: &[f64]) -> Result<f64> {
    if local_qs.is_empty() {
        return Err(Error::Input("vdn mixer needs at least one value".into()));
    }
    Ok(local_qs.iter().sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperMixer {
    pub n_agents: usize,
    pub state_len: usize,
    pub embed: usize,
    pub monotonic: bool,
    pub hyper_w1: Linear,
    pub hyper_b1: Linear,
    pub hyper_w2: Linear,
    pub hyper_b2: Mlp,
}

#[derive(Clone, Debug)]
pub struct HyperCache {
    state: Array2<f64>,
    qs: Array2<f64>,
    raw_w1: Array2<f64>,
    raw_w2: Array2<f64>,
    hidden: Array2<f64>,
    pre: Array2<f64>,
    b2: MlpCache,
}

fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

fn elu_grad(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        v.exp()
    }
}

impl HyperMixer {
    pub fn new(
        n_agents: usize,
        state_len: usize,
        embed: usize,
        monotonic: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let b2_spec =
            MlpSpec::new(vec![state_len, embed, 1], Activation::Identity).expect("positive widths");
        HyperMixer {
            n_agents,
            state_len,
            embed,
            monotonic,
            hyper_w1: Linear::new(state_len, n_agents * embed, rng),
            hyper_b1: Linear::new(state_len, embed, rng),
            hyper_w2: Linear::new(state_len, embed, rng),
            hyper_b2: Mlp::new(b2_spec, rng),
        }
    }

    fn weight(&self, raw: f64) -> f64 {
        if self.monotonic {
            raw.abs()
        } else {
            raw
        }
    }

    fn weight_grad(&self, raw: f64) -> f64 {
        if self.monotonic {
            raw.signum() * (raw != 0.0) as u8 as f64
        } else {
            1.0
        }
    }

    pub fn forward(
        &self,
        state: &Array2<f64>,
        qs: &Array2<f64>,
    ) -> Result<(Array2<f64>, HyperCache)> {
        let (batch, n, e) = (state.nrows(), self.n_agents, self.embed);
        if state.ncols() != self.state_len || qs.ncols() != n || qs.nrows() != batch {
            return Err(Error::Shape(format!(
                "mixer expects state {} and {} local values, got {:?} / {:?}",
                self.state_len,
                n,
                state.dim(),
                qs.dim()
            )));
        }
        let raw_w1 = self.hyper_w1.forward(state)?;
        let b1 = self.hyper_b1.forward(state)?;
        let raw_w2 = self.hyper_w2.forward(state)?;
        let (b2, b2_cache) = self.hyper_b2.forward(state)?;

        let mut pre = b1;
        for r in 0..batch {
            for a in 0..n {
                let q = qs[[r, a]];
                for k in 0..e {
                    pre[[r, k]] += q * self.weight(raw_w1[[r, a * e + k]]);
                }
            }
        }
        let hidden = pre.mapv(elu);
        let mut out = b2;
        for r in 0..batch {
            let mut acc = 0.0;
            for k in 0..e {
                acc += hidden[[r, k]] * self.weight(raw_w2[[r, k]]);
            }
            out[[r, 0]] += acc;
        }
        let cache = HyperCache {
            state: state.clone(),
            qs: qs.clone(),
            raw_w1,
            raw_w2,
            hidden,
            pre,
            b2: b2_cache,
        };
        Ok((out, cache))
    }

    /// Accumulates hypernetwork gradients; returns `dQ_tot/dq` scaled by `dy`.
    pub fn backward(&mut self, cache: &HyperCache, dy: &Array2<f64>) -> Result<Array2<f64>> {
        let (batch, n, e) = (cache.state.nrows(), self.n_agents, self.embed);
        if dy.dim() != (batch, 1) {
            return Err(Error::Shape("mixer gradient must be batch x 1".into()));
        }
        let mut d_raw_w2 = Array2::zeros((batch, e));
        let mut d_pre = Array2::zeros((batch, e));
        for r in 0..batch {
            let g = dy[[r, 0]];
            for k in 0..e {
                let raw = cache.raw_w2[[r, k]];
                d_raw_w2[[r, k]] = g * cache.hidden[[r, k]] * self.weight_grad(raw);
                d_pre[[r, k]] = g * self.weight(raw) * elu_grad(cache.pre[[r, k]]);
            }
        }
        let mut d_raw_w1 = Array2::zeros((batch, n * e));
        let mut dqs = Array2::zeros((batch, n));
        for r in 0..batch {
            for a in 0..n {
                let q = cache.qs[[r, a]];
                let mut dq = 0.0;
                for k in 0..e {
                    let raw = cache.raw_w1[[r, a * e + k]];
                    dq += d_pre[[r, k]] * self.weight(raw);
                    d_raw_w1[[r, a * e + k]] = d_pre[[r, k]] * q * self.weight_grad(raw);
                }
                dqs[[r, a]] = dq;
            }
        }
        self.hyper_w1.backward(&cache.state, &d_raw_w1);
        self.hyper_b1.backward(&cache.state, &d_pre);
        self.hyper_w2.backward(&cache.state, &d_raw_w2);
        self.hyper_b2.backward(&cache.b2, dy)?;
        Ok(dqs)
    }
}

impl Params for HyperMixer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
        self.hyper_w1.visit(&join(prefix, "hyper_w1"), f);
        self.hyper_b1.visit(&join(prefix, "hyper_b1"), f);
        self.hyper_w2.visit(&join(prefix, "hyper_w2"), f);
        self.hyper_b2.visit(&join(prefix, "hyper_b2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        self.hyper_w1.visit_mut(&join(prefix, "hyper_w1"), f);
        self.hyper_b1.visit_mut(&join(prefix, "hyper_b1"), f);
        self.hyper_w2.visit_mut(&join(prefix, "hyper_w2"), f);
        self.hyper_b2.visit_mut(&join(prefix, "hyper_b2"), f);
    }
}

/// A mixer of any kind. VDN has no parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Mixer {
    Vdn { n_agents: usize },
    Hyper(HyperMixer),
}

#[derive(Clone, Debug)]
pub enum MixerCache {
    Vdn { batch: usize },
    Hyper(Box<HyperCache>),
}

impl Mixer {
    pub fn new(
        kind: MixerKind,
        n_agents: usize,
        state_len: usize,
        embed: usize,
        rng: &mut impl Rng,
    ) -> Self {
        match kind {
            MixerKind::Vdn => Mixer::Vdn { n_agents },
            MixerKind::Monotonic => {
                Mixer::Hyper(HyperMixer::new(n_agents, state_len, embed, true, rng))
            }
            MixerKind::NonMonotonic => {
                Mixer::Hyper(HyperMixer::new(n_agents, state_len, embed, false, rng))
            }
        }
    }

    pub fn kind(&self) -> MixerKind {
        match self {
            Mixer::Vdn { .. } => MixerKind::Vdn,
            Mixer::Hyper(h) if h.monotonic => MixerKind::Monotonic,
            Mixer::Hyper(_) => MixerKind::NonMonotonic,
        }
    }

    pub fn forward(
        &self,
        state: &Array2<f64>,
        qs: &Array2<f64>,
    ) -> Result<(Array2<f64>, MixerCache)> {
        match self {
            Mixer::Vdn { n_agents } => {
                if qs.ncols() != *n_agents || qs.nrows() != state.nrows() {
                    return Err(Error::Shape(format!("vdn expects {n_agents} local values")));
                }
                let out = qs.sum_axis(Axis(1)).insert_axis(Axis(1));
                Ok((out, MixerCache::Vdn { batch: qs.nrows() }))
            }
            Mixer::Hyper(h) => {
                let (out, cache) = h.forward(state, qs)?;
                Ok((out, MixerCache::Hyper(Box::new(cache))))
            }
        }
    }

    pub fn backward(&mut self, cache: &MixerCache, dy: &Array2<f64>) -> Result<Array2<f64>> {
        match (self, cache) {
            (Mixer::Vdn { n_agents }, MixerCache::Vdn { batch }) => {
                if dy.dim() != (*batch, 1) {
                    return Err(Error::Shape("mixer gradient must be batch x 1".into()));
                }
                Ok(Array2::from_shape_fn((*batch, *n_agents), |(r, _)| {
                    dy[[r, 0]]
                }))
            }
            (Mixer::Hyper(h), MixerCache::Hyper(c)) => h.backward(c, dy),
            _ => Err(Error::Shape(
                "mixer cache from a different mixer kind".into(),
            )),
        }
    }
}

impl Params for Mixer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
        if let Mixer::Hyper(h) = self {
            h.visit(prefix, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        if let Mixer::Hyper(h) = self {
            h.visit_mut(prefix, f);
        }
    }
}
