use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    tensor::join, Activation, AdamState, LstmActor, LstmActorCache, Mlp, MlpCache, MlpSpec,
    ParamTensor, Params,
};
use crate::world::Vec2;

pub const ACTION_LEN: usize = 2;

/// Deterministic policy network: a dense body on the latest observation or an
/// LSTM unrolled over an observation window.
#[derive(Clone, Debug, PartialEq)]
pub enum Actor {
    Mlp(Mlp),
    Lstm(LstmActor),
}

#[derive(Clone, Debug)]
pub enum ActorCache {
    Mlp(MlpCache),
    Lstm(LstmActorCache),
}

impl Actor {
    pub fn mlp(obs_len: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let spec = MlpSpec::new(vec![obs_len, hidden, hidden, ACTION_LEN], Activation::Tanh)
            .expect("positive widths");
        Actor::Mlp(Mlp::new(spec, rng))
    }

    pub fn lstm(obs_len: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Actor::Lstm(LstmActor::new(obs_len, hidden, hidden, ACTION_LEN, rng))
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, Actor::Lstm(_))
    }

    /// `window` is oldest first; the dense actor only reads the last element.
    pub fn forward(&self, window: &[Array2<f64>]) -> Result<(Array2<f64>, ActorCache)> {
        match self {
            Actor::Mlp(net) => {
                let x = window
                    .last()
                    .ok_or_else(|| Error::Input("actor needs at least one observation".into()))?;
                let (y, cache) = net.forward(x)?;
                Ok((y, ActorCache::Mlp(cache)))
            }
            Actor::Lstm(net) => {
                let (y, cache) = net.forward(window)?;
                Ok((y, ActorCache::Lstm(cache)))
            }
        }
    }

    pub fn predict(&self, window: &[Array2<f64>]) -> Result<Array2<f64>> {
        self.forward(window).map(|(y, _)| y)
    }

    /// Accumulate parameter gradients for `dy` (gradient w.r.t. the action).
    pub fn backward(&mut self, cache: &ActorCache, dy: &Array2<f64>) -> Result<()> {
        match (self, cache) {
            (Actor::Mlp(net), ActorCache::Mlp(c)) => net.backward(c, dy).map(|_| ()),
            (Actor::Lstm(net), ActorCache::Lstm(c)) => net.backward(c, dy).map(|_| ()),
            _ => Err(Error::Shape("actor cache does not match actor kind".into())),
        }
    }

    /// Single-observation case of [`Actor::forward`].
    pub fn act(&self, window: &[&[f64]]) -> Result<Vec2> {
        let mats: Vec<Array2<f64>> = window
            .iter()
            .map(|o| Array2::from_shape_vec((1, o.len()), o.to_vec()).expect("row vector"))
            .collect();
        let y = self.predict(&mats)?;
        Ok(Vec2::new(y[[0, 0]], y[[0, 1]]))
    }
}

impl Params for Actor {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
        match self {
            Actor::Mlp(n) => n.visit(prefix, f),
            Actor::Lstm(n) => n.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        match self {
            Actor::Mlp(n) => n.visit_mut(prefix, f),
            Actor::Lstm(n) => n.visit_mut(prefix, f),
        }
    }
}

pub fn critic_net(input_len: usize, hidden: usize, rng: &mut impl Rng) -> Mlp {
    let spec = MlpSpec::new(vec![input_len, hidden, hidden, 1], Activation::Identity)
        .expect("positive widths");
    Mlp::new(spec, rng)
}

/// Online and target actor/critic for one agent, with one optimizer per network.
#[derive(Clone, Debug)]
pub struct AgentNets {
    pub actor: Actor,
    pub critic: Mlp,
    pub target_actor: Actor,
    pub target_critic: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

impl AgentNets {
    pub fn new(actor: Actor, critic: Mlp) -> Self {
        AgentNets {
            actor_opt: AdamState::for_params(&actor),
            critic_opt: AdamState::for_params(&critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        }
    }
}

impl Params for AgentNets {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
        self.actor.visit(&join(prefix, "actor"), f);
        self.critic.visit(&join(prefix, "critic"), f);
        self.target_actor.visit(&join(prefix, "target_actor"), f);
        self.target_critic.visit(&join(prefix, "target_critic"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        self.actor.visit_mut(&join(prefix, "actor"), f);
        self.critic.visit_mut(&join(prefix, "critic"), f);
        self.target_actor
            .visit_mut(&join(prefix, "target_actor"), f);
        self.target_critic
            .visit_mut(&join(prefix, "target_critic"), f);
    }
}
