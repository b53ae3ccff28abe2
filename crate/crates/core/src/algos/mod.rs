//! Batch update rules for the five training algorithms.
//!
//! Every algorithm is driven through one [`Trainer`]; the variants differ in
//! what the critic sees and in how actor gradients reach the critic:
//!
//! | algo        | critic input              | actor          |
//! |-------------|---------------------------|----------------|
//! | iddpg       | `[obs_a, u_a]`            | dense          |
//! | maddpg      | `[s, u_1..u_n]`           | dense          |
//! | maddpg-lstm | `[s, u_1..u_n]`           | LSTM on window |
//! | maddpg-l    | `[s, u_a]`                | dense          |
//! | facmac      | `[obs_a, u_a]` then mixer | dense          |
//!
//! The `*_loss` methods compute the pre-step loss and fill gradients without
//! stepping, so they double as gradient-check entry points.

mod batch;
mod nets;

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

pub use batch::Batch;
pub use nets::{critic_net, Actor, ActorCache, AgentNets, ACTION_LEN};

use crate::error::{Error, Result};
use crate::nn::{
    adam_step, clip_grad_norm, soft_update, tensor::join, AdamState, Mixer, MixerKind, ParamTensor, Params,
};
use crate::scenarios::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlgoId {
    Iddpg,
    Maddpg,
    MaddpgLstm,
    MaddpgL,
    Facmac,
}

impl AlgoId {
    pub const ALL: [AlgoId; 5] = [
        AlgoId::Iddpg,
        AlgoId::Maddpg,
        AlgoId::MaddpgLstm,
        AlgoId::MaddpgL,
        AlgoId::Facmac,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgoId::Iddpg => "iddpg",
            AlgoId::Maddpg => "maddpg",
            AlgoId::MaddpgLstm => "maddpg-lstm",
            AlgoId::MaddpgL => "maddpg-l",
            AlgoId::Facmac => "facmac",
        }
    }

    pub fn uses_windows(self) -> bool {
        self == AlgoId::MaddpgLstm
    }

    fn critic_view(self) -> CriticView {
        match self {
            AlgoId::Maddpg | AlgoId::MaddpgLstm => CriticView::StateAllActions,
            AlgoId::MaddpgL => CriticView::StateOwnAction,
            AlgoId::Iddpg | AlgoId::Facmac => CriticView::Local,
        }
    }
}

impl fmt::Display for AlgoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgoId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgoId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config("algo", format!("unknown algorithm `{s}`")))
    }
}

/// How FACMAC evaluates the local values fed to the mixer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CriticSharing {
    /// Q_b uses agent b's own critic.
    OwnCritics,
    /// During agent a's update every Q_b is evaluated with agent a's critic.
    SimulateWithOwn,
}

impl CriticSharing {
    pub fn as_str(self) -> &'static str {
        match self {
            CriticSharing::OwnCritics => "own-critics",
            CriticSharing::SimulateWithOwn => "simulate-with-own",
        }
    }
}

impl fmt::Display for CriticSharing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriticSharing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "own" | "own-critics" => Ok(CriticSharing::OwnCritics),
            "simulate" | "simulate-with-own" => Ok(CriticSharing::SimulateWithOwn),
            _ => Err(Error::config(
                "sharing",
                format!("unknown sharing mode `{s}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CriticView {
    StateAllActions,
    StateOwnAction,
    Local,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgoConfig {
    pub algo: AlgoId,
    pub gamma: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub seq_length: usize,
    pub mixer: MixerKind,
    pub sharing: CriticSharing,
    pub staged_watershed: Option<u64>,
    pub hidden: usize,
    pub mixer_embed: usize,
    /// Largest L2 norm of one network's gradient before each optimizer step.
    pub grad_clip: Option<f64>,
}

impl AlgoConfig {
    pub fn new(algo: AlgoId) -> Self {
        AlgoConfig {
            algo,
            gamma: 0.95,
            lr_actor: 1e-3,
            lr_critic: 1e-2,
            tau: 0.01,
            batch_size: 256,
            seq_length: 1,
            mixer: MixerKind::NonMonotonic,
            sharing: CriticSharing::OwnCritics,
            staged_watershed: None,
            hidden: 64,
            mixer_embed: 32,
            grad_clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(
                "Gamma",
                format!("must lie in [0, 1), got {}", self.gamma),
            ));
        }
        for (key, lr) in [("Lr-actor", self.lr_actor), ("Lr-critic", self.lr_critic)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::config(key, format!("must be positive, got {lr}")));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config(
                "tau",
                format!("must lie in [0, 1], got {}", self.tau),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("Batch-size", "must be positive"));
        }
        if self.seq_length == 0 {
            return Err(Error::config("seq-length", "must be at least 1"));
        }
        if self.hidden == 0 || self.mixer_embed == 0 {
            return Err(Error::config("hidden", "layer widths must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::config("grad-clip", format!("must be positive, got {c}")));
            }
        }
        if self.staged_watershed.is_some() && self.algo != AlgoId::Facmac {
            return Err(Error::config("staged-watershed", "only applies to facmac"));
        }
        Ok(())
    }
}

/// `reward + gamma * next_value * (1 - terminal)`.
pub fn td_target(reward: f64, next_value: f64, gamma: f64, terminal: bool) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_value
    }
}

/// Observation sizes, global state size and FACMAC teams of a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentLayout {
    pub obs_lens: Vec<usize>,
    pub state_len: usize,
    pub teams: Vec<Vec<usize>>,
}

impl AgentLayout {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        AgentLayout {
            obs_lens: (0..scenario.n_actors())
                .map(|a| scenario.observation_len(a))
                .collect(),
            state_len: scenario.state_len(),
            teams: scenario.teams(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.obs_lens.len()
    }
}

pub fn critic_input_len(algo: AlgoId, layout: &AgentLayout, agent: usize) -> usize {
    match algo.critic_view() {
        CriticView::StateAllActions => layout.state_len + layout.n_agents() * ACTION_LEN,
        CriticView::StateOwnAction => layout.state_len + ACTION_LEN,
        CriticView::Local => layout.obs_lens[agent] + ACTION_LEN,
    }
}

/// Online/target mixer of one team.
#[derive(Clone, Debug)]
pub struct TeamMixer {
    pub members: Vec<usize>,
    pub online: Mixer,
    pub target: Mixer,
    pub opt: AdamState,
}

impl Params for TeamMixer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
        self.online.visit(&join(prefix, "online"), f);
        self.target.visit(&join(prefix, "target"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        self.online.visit_mut(&join(prefix, "online"), f);
        self.target.visit_mut(&join(prefix, "target"), f);
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: Vec<f64>,
    pub actor_objective: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub cfg: AlgoConfig,
    pub layout: AgentLayout,
    pub agents: Vec<AgentNets>,
    /// One per team; empty unless the algorithm is FACMAC.
    pub mixers: Vec<TeamMixer>,
    pub updates: u64,
}

fn hcat(parts: &[&Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(1), &views).expect("batch rows agree")
}

fn mse(q: &Array2<f64>, y: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = q.nrows() as f64;
    let diff = q - y;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (loss, diff * (2.0 / n))
}

fn finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl Trainer {
    /// Networks are initialised agent by agent (actor, then critic), then one
    /// mixer per team. At n = 1 every algorithm consumes `rng` identically.
    pub fn new(cfg: AlgoConfig, layout: AgentLayout, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        if layout.n_agents() == 0 {
            return Err(Error::Input("at least one agent is required".into()));
        }
        if cfg.algo == AlgoId::Facmac {
            Self::check_teams(&layout)?;
            let uneven = layout.teams.iter().any(|t| {
                t.iter()
                    .any(|&b| layout.obs_lens[b] != layout.obs_lens[t[0]])
            });
            if cfg.sharing == CriticSharing::SimulateWithOwn && uneven {
                return Err(Error::config(
                    "sharing",
                    "simulate-with-own needs equal observation lengths within a team",
                ));
            }
        }
        let agents = (0..layout.n_agents())
            .map(|a| {
                let actor = if cfg.algo.uses_windows() {
                    Actor::lstm(layout.obs_lens[a], cfg.hidden, rng)
                } else {
                    Actor::mlp(layout.obs_lens[a], cfg.hidden, rng)
                };
                let critic = critic_net(critic_input_len(cfg.algo, &layout, a), cfg.hidden, rng);
                AgentNets::new(actor, critic)
            })
            .collect();
        let mixers = if cfg.algo == AlgoId::Facmac {
            layout
                .teams
                .iter()
                .map(|team| {
                    let online = Mixer::new(
                        cfg.mixer,
                        team.len(),
                        layout.state_len,
                        cfg.mixer_embed,
                        rng,
                    );
                    TeamMixer {
                        members: team.clone(),
                        target: online.clone(),
                        opt: AdamState::for_params(&online),
                        online,
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Trainer {
            cfg,
            layout,
            agents,
            mixers,
            updates: 0,
        })
    }

    fn check_teams(layout: &AgentLayout) -> Result<()> {
        let mut seen = vec![false; layout.n_agents()];
        for &a in layout.teams.iter().flatten() {
            if a >= seen.len() || std::mem::replace(&mut seen[a], true) {
                return Err(Error::Input("teams must partition the agents".into()));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Input("teams must partition the agents".into()));
        }
        if layout.teams.iter().all(|t| t.len() == 1) && layout.n_agents() > 1 {
            return Err(Error::Unsupported(
                "facmac needs a shared team reward; this scenario rewards agents individually"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn critic_input_len(&self, agent: usize) -> usize {
        critic_input_len(self.cfg.algo, &self.layout, agent)
    }

    /// Whether the staged schedule keeps the mixers frozen at `timestep`.
    pub fn mixer_frozen(&self, timestep: u64) -> bool {
        self.cfg.algo == AlgoId::Facmac && self.cfg.staged_watershed.is_some_and(|w| timestep < w)
    }

    /// Critic input for agent `a`; `actions` holds every agent's action block.
    fn critic_input(
        &self,
        a: usize,
        state: &Array2<f64>,
        obs_a: &Array2<f64>,
        actions: &[&Array2<f64>],
    ) -> Array2<f64> {
        match self.cfg.algo.critic_view() {
            CriticView::StateAllActions => {
                let mut parts = vec![state];
                parts.extend_from_slice(actions);
                hcat(&parts)
            }
            CriticView::StateOwnAction => hcat(&[state, actions[a]]),
            CriticView::Local => hcat(&[obs_a, actions[a]]),
        }
    }

    /// Column where agent `a`'s own action starts in its critic input.
    fn own_action_offset(&self, a: usize) -> usize {
        match self.cfg.algo.critic_view() {
            CriticView::StateAllActions => self.layout.state_len + a * ACTION_LEN,
            CriticView::StateOwnAction => self.layout.state_len,
            CriticView::Local => self.layout.obs_lens[a],
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.n_agents() != self.n_agents() {
            return Err(Error::Shape(format!(
                "batch has {} agents, trainer has {}",
                batch.n_agents(),
                self.n_agents()
            )));
        }
        if batch.state.ncols() != self.layout.state_len {
            return Err(Error::Shape(format!(
                "state length {} does not match {}",
                batch.state.ncols(),
                self.layout.state_len
            )));
        }
        for (a, len) in self.layout.obs_lens.iter().enumerate() {
            if batch.current_obs(a).ncols() != *len {
                return Err(Error::Shape(format!(
                    "observation length mismatch for agent {a}"
                )));
            }
        }
        Ok(())
    }

    /// Per-agent TD loss of agent `a`'s critic. Fills the critic's gradients.
    pub fn critic_loss(&mut self, a: usize, batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let all = self.cfg.algo.critic_view() == CriticView::StateAllActions;
        let mut next_actions = Vec::with_capacity(self.n_agents());
        for b in 0..self.n_agents() {
            next_actions.push(if all || b == a {
                self.agents[b].target_actor.predict(&batch.next_obs[b])?
            } else {
                Array2::zeros((0, 0))
            });
        }
        let refs: Vec<&Array2<f64>> = next_actions.iter().collect();
        let x_next = self.critic_input(a, &batch.next_state, batch.next_current_obs(a), &refs);
        let q_next = self.agents[a].target_critic.predict(&x_next)?;
        let y = &batch.rewards[a] + &(&q_next * &batch.not_done * self.cfg.gamma);

        let refs: Vec<&Array2<f64>> = batch.actions.iter().collect();
        let x = self.critic_input(a, &batch.state, batch.current_obs(a), &refs);
        let net = &mut self.agents[a];
        net.critic.zero_grad();
        let (q, cache) = net.critic.forward(&x)?;
        let (loss, dq) = mse(&q, &y);
        net.critic.backward(&cache, &dq)?;
        finite(loss, "critic loss")
    }

    /// Mean of `-Q_a` with agent `a`'s action recomputed by its online actor
    /// and every other action taken from the batch. Fills the actor's gradients.
    pub fn actor_loss(&mut self, a: usize, batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let (u, actor_cache) = self.agents[a].actor.forward(&batch.obs[a])?;
        let mut refs: Vec<&Array2<f64>> = batch.actions.iter().collect();
        refs[a] = &u;
        let x = self.critic_input(a, &batch.state, batch.current_obs(a), &refs);
        let offset = self.own_action_offset(a);
        let net = &mut self.agents[a];
        net.actor.zero_grad();
        net.critic.zero_grad();
        let (q, critic_cache) = net.critic.forward(&x)?;
        let n = batch.size as f64;
        let loss = -q.sum() / n;
        let dx = net
            .critic
            .backward(&critic_cache, &Array2::from_elem((batch.size, 1), -1.0 / n))?;
        let du = dx.slice(s![.., offset..offset + ACTION_LEN]).to_owned();
        net.actor.backward(&actor_cache, &du)?;
        finite(loss, "actor objective")
    }

    fn team_reward(&self, team: usize, batch: &Batch) -> Result<Array2<f64>> {
        let members = &self.mixers[team].members;
        let r = &batch.rewards[members[0]];
        if members.iter().any(|&b| batch.rewards[b] != *r) {
            return Err(Error::Unsupported(
                "facmac needs identical rewards within a team".into(),
            ));
        }
        Ok(r.clone())
    }

    fn critic_owner(&self, b: usize, owner: Option<usize>) -> usize {
        owner.unwrap_or(b)
    }

    /// Mixed TD loss of team `team`. With `owner = Some(a)` every local value
    /// is computed by agent a's critic. Fills critic and mixer gradients.
    pub fn facmac_critic_loss(
        &mut self,
        team: usize,
        batch: &Batch,
        owner: Option<usize>,
    ) -> Result<f64> {
        self.check_batch(batch)?;
        let r = self.team_reward(team, batch)?;
        let members = self.mixers[team].members.clone();
        let m = members.len();

        let mut q_next = Array2::zeros((batch.size, m));
        for (j, &b) in members.iter().enumerate() {
            let u = self.agents[b].target_actor.predict(&batch.next_obs[b])?;
            let x = hcat(&[batch.next_current_obs(b), &u]);
            let q = self.agents[self.critic_owner(b, owner)]
                .target_critic
                .predict(&x)?;
            q_next.column_mut(j).assign(&q.column(0));
        }
        let (tot_next, _) = self.mixers[team]
            .target
            .forward(&batch.next_state, &q_next)?;
        let y = &r + &(&tot_next * &batch.not_done * self.cfg.gamma);

        for &b in &members {
            let c = self.critic_owner(b, owner);
            self.agents[c].critic.zero_grad();
        }
        self.mixers[team].online.zero_grad();
        let mut qs = Array2::zeros((batch.size, m));
        let mut caches = Vec::with_capacity(m);
        for (j, &b) in members.iter().enumerate() {
            let x = hcat(&[batch.current_obs(b), &batch.actions[b]]);
            let (q, cache) = self.agents[self.critic_owner(b, owner)]
                .critic
                .forward(&x)?;
            qs.column_mut(j).assign(&q.column(0));
            caches.push(cache);
        }
        let (tot, mix_cache) = self.mixers[team].online.forward(&batch.state, &qs)?;
        let (loss, dtot) = mse(&tot, &y);
        let dqs = self.mixers[team].online.backward(&mix_cache, &dtot)?;
        for (j, &b) in members.iter().enumerate() {
            let dq = dqs.slice(s![.., j..j + 1]).to_owned();
            let c = self.critic_owner(b, owner);
            self.agents[c].critic.backward(&caches[j], &dq)?;
        }
        finite(loss, "mixed critic loss")
    }

    /// Mean of `-Q_tot` with every team member's action recomputed online.
    /// Fills the gradients of all team actors.
    pub fn facmac_actor_loss(
        &mut self,
        team: usize,
        batch: &Batch,
        owner: Option<usize>,
    ) -> Result<f64> {
        self.check_batch(batch)?;
        let members = self.mixers[team].members.clone();
        let m = members.len();
        for &b in &members {
            self.agents[b].actor.zero_grad();
            let c = self.critic_owner(b, owner);
            self.agents[c].critic.zero_grad();
        }
        self.mixers[team].online.zero_grad();

        let mut qs = Array2::zeros((batch.size, m));
        let mut caches = Vec::with_capacity(m);
        for (j, &b) in members.iter().enumerate() {
            let (u, actor_cache) = self.agents[b].actor.forward(&batch.obs[b])?;
            let x = hcat(&[batch.current_obs(b), &u]);
            let (q, critic_cache) = self.agents[self.critic_owner(b, owner)]
                .critic
                .forward(&x)?;
            qs.column_mut(j).assign(&q.column(0));
            caches.push((actor_cache, critic_cache));
        }
        let (tot, mix_cache) = self.mixers[team].online.forward(&batch.state, &qs)?;
        let n = batch.size as f64;
        let loss = -tot.sum() / n;
        let dqs = self.mixers[team]
            .online
            .backward(&mix_cache, &Array2::from_elem((batch.size, 1), -1.0 / n))?;
        for (j, &b) in members.iter().enumerate() {
            let dq = dqs.slice(s![.., j..j + 1]).to_owned();
            let c = self.critic_owner(b, owner);
            let dx = self.agents[c].critic.backward(&caches[j].1, &dq)?;
            let offset = self.layout.obs_lens[b];
            let du = dx.slice(s![.., offset..offset + ACTION_LEN]).to_owned();
            self.agents[b].actor.backward(&caches[j].0, &du)?;
        }
        finite(loss, "mixed actor objective")
    }

    fn step_critic(&mut self, a: usize) -> Result<()> {
        let net = &mut self.agents[a];
        if let Some(c) = self.cfg.grad_clip {
            clip_grad_norm(&mut net.critic, c);
        }
        adam_step(&mut net.critic, &mut net.critic_opt, self.cfg.lr_critic)
    }

    fn step_actor(&mut self, a: usize) -> Result<()> {
        let net = &mut self.agents[a];
        if let Some(c) = self.cfg.grad_clip {
            clip_grad_norm(&mut net.actor, c);
        }
        adam_step(&mut net.actor, &mut net.actor_opt, self.cfg.lr_actor)
    }

    fn step_mixer(&mut self, team: usize) -> Result<()> {
        let mix = &mut self.mixers[team];
        if let Some(c) = self.cfg.grad_clip {
            clip_grad_norm(&mut mix.online, c);
        }
        adam_step(&mut mix.online, &mut mix.opt, self.cfg.lr_critic)
    }

    /// Critic step then actor step for agent `a` on its own critic.
    pub fn per_agent_update(
        &mut self,
        a: usize,
        batch: &Batch,
        stats: &mut UpdateStats,
    ) -> Result<()> {
        let c = self.critic_loss(a, batch)?;
        self.step_critic(a)?;
        let o = self.actor_loss(a, batch)?;
        self.step_actor(a)?;
        stats.critic_loss.push(c);
        stats.actor_objective.push(o);
        Ok(())
    }

    /// Mixed updates for one team in the configured sharing mode.
    pub fn facmac_team_update(
        &mut self,
        team: usize,
        batch: &Batch,
        stats: &mut UpdateStats,
    ) -> Result<()> {
        let members = self.mixers[team].members.clone();
        match self.cfg.sharing {
            CriticSharing::OwnCritics => {
                let c = self.facmac_critic_loss(team, batch, None)?;
                for &b in &members {
                    self.step_critic(b)?;
                }
                self.step_mixer(team)?;
                let o = self.facmac_actor_loss(team, batch, None)?;
                for &b in &members {
                    self.step_actor(b)?;
                }
                stats.critic_loss.push(c);
                stats.actor_objective.push(o);
            }
            CriticSharing::SimulateWithOwn => {
                for &a in &members {
                    let c = self.facmac_critic_loss(team, batch, Some(a))?;
                    self.step_critic(a)?;
                    self.step_mixer(team)?;
                    let o = self.facmac_actor_loss(team, batch, Some(a))?;
                    self.step_actor(a)?;
                    stats.critic_loss.push(c);
                    stats.actor_objective.push(o);
                }
            }
        }
        Ok(())
    }

    /// One full training step at environment timestep `timestep`, followed by
    /// soft target updates.
    pub fn update(&mut self, batch: &Batch, timestep: u64) -> Result<UpdateStats> {
        let mut stats = UpdateStats::default();
        let frozen = self.mixer_frozen(timestep);
        if self.cfg.algo == AlgoId::Facmac && !frozen {
            for team in 0..self.mixers.len() {
                self.facmac_team_update(team, batch, &mut stats)?;
            }
        } else {
            for a in 0..self.n_agents() {
                self.per_agent_update(a, batch, &mut stats)?;
            }
        }
        self.soft_update_targets(!frozen)?;
        self.updates += 1;
        Ok(stats)
    }

    pub fn soft_update_targets(&mut self, include_mixers: bool) -> Result<()> {
        let tau = self.cfg.tau;
        for net in &mut self.agents {
            soft_update(&mut net.target_actor, &net.actor, tau)?;
            soft_update(&mut net.target_critic, &net.critic, tau)?;
        }
        if include_mixers {
            for mix in &mut self.mixers {
                soft_update(&mut mix.target, &mix.online, tau)?;
            }
        }
        Ok(())
    }

    /// Deterministic action of agent `a` for an observation window.
    pub fn act(&self, a: usize, window: &[&[f64]]) -> Result<crate::world::Vec2> {
        self.agents[a].actor.act(window)
    }

    pub fn actors(&self) -> Vec<Actor> {
        self.agents.iter().map(|n| n.actor.clone()).collect()
    }

    /// Mixed value of team `team` (online networks) for diagnostics and tests.
    pub fn team_value(
        &self,
        team: usize,
        batch: &Batch,
        owner: Option<usize>,
    ) -> Result<Array2<f64>> {
        let members = &self.mixers[team].members;
        let mut qs = Array2::zeros((batch.size, members.len()));
        for (j, &b) in members.iter().enumerate() {
            let x = hcat(&[batch.current_obs(b), &batch.actions[b]]);
            let q = self.agents[self.critic_owner(b, owner)]
                .critic
                .predict(&x)?;
            qs.column_mut(j).assign(&q.column(0));
        }
        self.mixers[team]
            .online
            .forward(&batch.state, &qs)
            .map(|(y, _)| y)
    }
}

impl Params for Trainer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a ParamTensor)) {
        for (a, net) in self.agents.iter().enumerate() {
            net.visit(&join(prefix, &format!("agent{a}")), f);
        }
        for (t, mix) in self.mixers.iter().enumerate() {
            mix.visit(&join(prefix, &format!("mixer{t}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ParamTensor)) {
        for (a, net) in self.agents.iter_mut().enumerate() {
            net.visit_mut(&join(prefix, &format!("agent{a}")), f);
        }
        for (t, mix) in self.mixers.iter_mut().enumerate() {
            mix.visit_mut(&join(prefix, &format!("mixer{t}")), f);
        }
    }
}

#[cfg(test)]
mod tests;
