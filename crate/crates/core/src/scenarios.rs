//! The four navigation environments built on [`crate::world`].
//!
//! Entity order is canonical for every scenario: trained agents, then
//! adversaries, then landmarks (targets), then obstacles.
//!
//! # Observation layouts
//!
//! | scenario            | role     | blocks (in order)                                                              |
//! |---------------------|----------|--------------------------------------------------------------------------------|
//! | spread              | agent    | vel(2), pos(2), target rel(2L), obstacle rel(2O), other agent rel(2(N-1))      |
//! | tunnel              | agent    | vel(2), pos(2), target rel(2L), other agent rel(2(N-1))                        |
//! | simple-tunnel       | agent    | own target rel(2), vel(2), pos(2), target rel(2L), other agent rel(2(N-1))     |
//! | predator-prey       | predator | vel(2), pos(2), obstacle rel(2O), other predator rel(2(N-1)), prey rel(2), prey vel(2) |
//! | predator-prey       | prey     | vel(2), pos(2), obstacle rel(2O), predator rel(2N)                             |
//!
//! Relative positions are `other - self`. The tunnel walls are fixed, so their
//! discs are not observed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{
    collision_test, EntityKind, EntitySpec, Rect, Vec2, WorldBuilder, WorldConfig, WorldState,
};

pub const DEFAULT_MAX_EPISODE_LEN: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    ObstaclePredatorPrey,
    Spread,
    Tunnel,
    SimpleTunnel,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::ObstaclePredatorPrey => "obstacle-predator-prey",
            ScenarioKind::Spread => "spread",
            ScenarioKind::Tunnel => "tunnel",
            ScenarioKind::SimpleTunnel => "simple-tunnel",
        }
    }

    fn supported_agents(self) -> &'static [usize] {
        match self {
            ScenarioKind::ObstaclePredatorPrey => &[3],
            ScenarioKind::Spread => &[3, 6, 9],
            ScenarioKind::Tunnel => &[3],
            ScenarioKind::SimpleTunnel => &[3, 6],
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "obstacle-predator-prey" => ScenarioKind::ObstaclePredatorPrey,
            "spread" => ScenarioKind::Spread,
            "tunnel" => ScenarioKind::Tunnel,
            "simple-tunnel" => ScenarioKind::SimpleTunnel,
            other => {
                return Err(Error::config(
                    "scenario",
                    format!("unknown scenario `{other}`"),
                ))
            }
        })
    }
}

/// A named scenario variant as exposed on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    ObstaclePredatorPrey,
    Spread3a,
    Spread6a,
    Spread9a,
    Tunnel,
    SimpleTunnel,
    SimpleTunnel6a,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::ObstaclePredatorPrey,
        ScenarioId::Spread3a,
        ScenarioId::Spread6a,
        ScenarioId::Spread9a,
        ScenarioId::Tunnel,
        ScenarioId::SimpleTunnel,
        ScenarioId::SimpleTunnel6a,
    ];

    pub fn kind(self) -> ScenarioKind {
        match self {
            ScenarioId::ObstaclePredatorPrey => ScenarioKind::ObstaclePredatorPrey,
            ScenarioId::Spread3a | ScenarioId::Spread6a | ScenarioId::Spread9a => {
                ScenarioKind::Spread
            }
            ScenarioId::Tunnel => ScenarioKind::Tunnel,
            ScenarioId::SimpleTunnel | ScenarioId::SimpleTunnel6a => ScenarioKind::SimpleTunnel,
        }
    }

    pub fn n_agents(self) -> usize {
        match self {
            ScenarioId::Spread6a | ScenarioId::SimpleTunnel6a => 6,
            ScenarioId::Spread9a => 9,
            _ => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::ObstaclePredatorPrey => "obstacle-predator-prey",
            ScenarioId::Spread3a => "spread-3a",
            ScenarioId::Spread6a => "spread-6a",
            ScenarioId::Spread9a => "spread-9a",
            ScenarioId::Tunnel => "tunnel",
            ScenarioId::SimpleTunnel => "simple-tunnel",
            ScenarioId::SimpleTunnel6a => "simple-tunnel-6a",
        }
    }

    pub fn from_kind(kind: ScenarioKind, n_agents: usize) -> Result<Self> {
        let id = match (kind, n_agents) {
            (ScenarioKind::ObstaclePredatorPrey, 3) => ScenarioId::ObstaclePredatorPrey,
            (ScenarioKind::Spread, 3) => ScenarioId::Spread3a,
            (ScenarioKind::Spread, 6) => ScenarioId::Spread6a,
            (ScenarioKind::Spread, 9) => ScenarioId::Spread9a,
            (ScenarioKind::Tunnel, 3) => ScenarioId::Tunnel,
            (ScenarioKind::SimpleTunnel, 3) => ScenarioId::SimpleTunnel,
            (ScenarioKind::SimpleTunnel, 6) => ScenarioId::SimpleTunnel6a,
            (kind, n) => {
                return Err(Error::config(
                    "n_agents",
                    format!(
                        "{} supports {:?} agents, got {n}",
                        kind.name(),
                        kind.supported_agents()
                    ),
                ))
            }
        };
        Ok(id)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::config("scenario", format!("unknown scenario `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Subtracted once per collision event.
    pub collision_penalty: f64,
    /// Predator-prey: awarded to predators (and charged to the prey) per capture.
    pub capture_bonus: f64,
    /// Predator-prey distance shaping coefficient.
    pub shaping: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            collision_penalty: 1.0,
            capture_bonus: 10.0,
            shaping: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Cooperative,
    Predator,
    Prey,
}

const AGENT_RADIUS: f64 = 0.05;
const NAV_ACCEL: f64 = 5.0;
const LANDMARK_RADIUS: f64 = 0.05;
const SPREAD_OBSTACLE_RADIUS: f64 = 0.2;
const PREDATOR_RADIUS: f64 = 0.075;
const PREY_RADIUS: f64 = 0.05;
const PP_OBSTACLE_RADIUS: f64 = 0.2;
const TUNNEL_DISC_RADIUS: f64 = 0.1;
const TUNNEL_HALF_WIDTH: f64 = 0.15;
const TUNNEL_SPAWN_X: f64 = -0.8;
const TUNNEL_TARGET_X: f64 = 0.8;

fn tunnel_discs() -> Vec<(usize, Vec2)> {
    let columns = [-0.3, -0.15, 0.0, 0.15, 0.3];
    let mut discs = Vec::new();
    for (group, sign) in [(0usize, 1.0), (1, -1.0)] {
        for row in 0..6 {
            let y = sign * (TUNNEL_HALF_WIDTH + TUNNEL_DISC_RADIUS + 0.15 * row as f64);
            for &x in &columns {
                discs.push((group, Vec2::new(x, y)));
            }
        }
    }
    discs
}

fn lane_offsets(n: usize) -> Vec<f64> {
    let spacing = 0.2;
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| (i as f64 - mid) * spacing).collect()
}

/// Static description of one environment variant.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: ScenarioId,
    pub kind: ScenarioKind,
    pub n_agents: usize,
    pub n_adversaries: usize,
    pub n_landmarks: usize,
    pub n_obstacles: usize,
    pub specs: Vec<EntitySpec>,
    pub world_cfg: WorldConfig,
    pub reward_params: RewardParams,
    pub max_episode_len: usize,
    /// Collision-penalty grouping: touching several discs of one group is one event.
    obstacle_groups: Vec<usize>,
    fixed_obstacles: Vec<Vec2>,
}

/// Build the scenario named `name` with `n_agents` trained agents and its seeded
/// initial world.
pub fn make_scenario(name: &str, n_agents: usize, seed: u64) -> Result<(Scenario, WorldState)> {
    let kind: ScenarioKind = name.parse()?;
    let scenario = Scenario::new(ScenarioId::from_kind(kind, n_agents)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = scenario.reset(&mut rng, 0);
    Ok((scenario, world))
}

impl Scenario {
    pub fn new(id: ScenarioId) -> Self {
        let kind = id.kind();
        let n = id.n_agents();
        let mut world_cfg = WorldConfig::default();
        let (n_adversaries, n_landmarks, n_obstacles) = match kind {
            ScenarioKind::ObstaclePredatorPrey => (1, 0, 2),
            ScenarioKind::Spread => (0, n, (n / 3).max(1)),
            ScenarioKind::Tunnel | ScenarioKind::SimpleTunnel => (0, n, tunnel_discs().len()),
        };
        if kind == ScenarioKind::SimpleTunnel {
            world_cfg.bounds = Some(Rect {
                min: Vec2::new(-1.0, -1.0),
                max: Vec2::new(1.0, 1.0),
            });
        }

        let mut specs = Vec::new();
        match kind {
            ScenarioKind::ObstaclePredatorPrey => {
                specs.extend((0..n).map(|_| EntitySpec::agent(PREDATOR_RADIUS, 3.0, Some(1.0))));
                specs.push(EntitySpec::adversary(PREY_RADIUS, 4.0, Some(1.3)));
            }
            _ => specs.extend((0..n).map(|_| EntitySpec::agent(AGENT_RADIUS, NAV_ACCEL, None))),
        }
        specs.extend(
            (0..n_landmarks).map(|_| EntitySpec::fixed(EntityKind::Landmark, LANDMARK_RADIUS)),
        );
        let (obstacle_groups, fixed_obstacles, obstacle_radius) = match kind {
            ScenarioKind::Tunnel | ScenarioKind::SimpleTunnel => {
                let discs = tunnel_discs();
                (
                    discs.iter().map(|d| d.0).collect(),
                    discs.iter().map(|d| d.1).collect(),
                    TUNNEL_DISC_RADIUS,
                )
            }
            ScenarioKind::Spread => (
                (0..n_obstacles).collect(),
                Vec::new(),
                SPREAD_OBSTACLE_RADIUS,
            ),
            ScenarioKind::ObstaclePredatorPrey => {
                ((0..n_obstacles).collect(), Vec::new(), PP_OBSTACLE_RADIUS)
            }
        };
        specs.extend(
            (0..n_obstacles).map(|_| EntitySpec::fixed(EntityKind::Obstacle, obstacle_radius)),
        );

        Scenario {
            id,
            kind,
            n_agents: n,
            n_adversaries,
            n_landmarks,
            n_obstacles,
            specs,
            world_cfg,
            reward_params: RewardParams::default(),
            max_episode_len: DEFAULT_MAX_EPISODE_LEN,
            obstacle_groups,
            fixed_obstacles,
        }
    }

    /// Trained agents plus adversaries: every entity that takes actions.
    pub fn n_actors(&self) -> usize {
        self.n_agents + self.n_adversaries
    }

    pub fn landmark(&self, k: usize) -> usize {
        self.n_actors() + k
    }

    pub fn obstacle(&self, k: usize) -> usize {
        self.n_actors() + self.n_landmarks + k
    }

    pub fn role(&self, agent: usize) -> Role {
        match self.kind {
            ScenarioKind::ObstaclePredatorPrey if agent < self.n_agents => Role::Predator,
            ScenarioKind::ObstaclePredatorPrey => Role::Prey,
            _ => Role::Cooperative,
        }
    }

    /// Agent groups that share one reward signal.
    pub fn teams(&self) -> Vec<Vec<usize>> {
        match self.kind {
            ScenarioKind::SimpleTunnel => (0..self.n_agents).map(|a| vec![a]).collect(),
            ScenarioKind::ObstaclePredatorPrey => {
                vec![
                    (0..self.n_agents).collect(),
                    (self.n_agents..self.n_actors()).collect(),
                ]
            }
            _ => vec![(0..self.n_agents).collect()],
        }
    }

    /// Simple tunnel pairs agent i with target i.
    pub fn designated_target(&self, agent: usize) -> Option<usize> {
        (self.kind == ScenarioKind::SimpleTunnel).then(|| self.landmark(agent))
    }

    pub fn observation_len(&self, agent: usize) -> usize {
        let n = self.n_agents;
        match self.role(agent) {
            Role::Predator => 4 + 2 * self.n_obstacles + 2 * (n - 1) + 4,
            Role::Prey => 4 + 2 * self.n_obstacles + 2 * n,
            Role::Cooperative => {
                let base = 4 + 2 * self.n_landmarks + 2 * (n - 1);
                match self.kind {
                    ScenarioKind::Spread => base + 2 * self.n_obstacles,
                    ScenarioKind::SimpleTunnel => base + 2,
                    _ => base,
                }
            }
        }
    }

    pub fn observation_lens(&self) -> Vec<usize> {
        (0..self.n_actors())
            .map(|a| self.observation_len(a))
            .collect()
    }

    /// Start a fresh episode. Spread and predator-prey draw positions from `rng`;
    /// the tunnels use fixed spawns and targets.
    pub fn reset(&self, rng: &mut impl Rng, episode_index: usize) -> WorldState {
        let mut b = WorldBuilder::new();
        match self.kind {
            ScenarioKind::Spread => {
                for a in 0..self.n_agents {
                    b.add(a, self.specs[a].clone(), uniform(rng, 1.0));
                }
                for k in 0..self.n_landmarks {
                    b.add(k, self.specs[self.landmark(k)].clone(), uniform(rng, 1.0));
                }
                for k in 0..self.n_obstacles {
                    b.add(k, self.specs[self.obstacle(k)].clone(), uniform(rng, 0.8));
                }
            }
            ScenarioKind::ObstaclePredatorPrey => {
                for a in 0..self.n_actors() {
                    b.add(a, self.specs[a].clone(), uniform(rng, 1.0));
                }
                for k in 0..self.n_obstacles {
                    b.add(k, self.specs[self.obstacle(k)].clone(), uniform(rng, 0.9));
                }
            }
            ScenarioKind::Tunnel | ScenarioKind::SimpleTunnel => {
                let lanes = lane_offsets(self.n_agents);
                for (a, &y) in lanes.iter().enumerate() {
                    b.add(a, self.specs[a].clone(), Vec2::new(TUNNEL_SPAWN_X, y));
                    b.add(
                        a,
                        self.specs[self.landmark(a)].clone(),
                        Vec2::new(TUNNEL_TARGET_X, y),
                    );
                }
                for (k, &p) in self.fixed_obstacles.iter().enumerate() {
                    b.add(k, self.specs[self.obstacle(k)].clone(), p);
                }
            }
        }
        let (_, mut world) = b.build().expect("scenario geometry is valid");
        world.episode_index = episode_index;
        world
    }

    pub fn observe(&self, world: &WorldState, agent: usize) -> Vec<f64> {
        let p = world.positions[agent];
        let v = world.velocities[agent];
        let mut out = Vec::with_capacity(self.observation_len(agent));
        let push = |out: &mut Vec<f64>, q: Vec2| {
            out.push(q.x);
            out.push(q.y);
        };
        let rel = |i: usize| world.positions[i] - p;

        if let Some(t) = self.designated_target(agent) {
            push(&mut out, rel(t));
        }
        push(&mut out, v);
        push(&mut out, p);
        match self.role(agent) {
            Role::Cooperative => {
                for k in 0..self.n_landmarks {
                    push(&mut out, rel(self.landmark(k)));
                }
                if self.kind == ScenarioKind::Spread {
                    for k in 0..self.n_obstacles {
                        push(&mut out, rel(self.obstacle(k)));
                    }
                }
                for other in (0..self.n_agents).filter(|&o| o != agent) {
                    push(&mut out, rel(other));
                }
            }
            Role::Predator => {
                for k in 0..self.n_obstacles {
                    push(&mut out, rel(self.obstacle(k)));
                }
                for other in (0..self.n_agents).filter(|&o| o != agent) {
                    push(&mut out, rel(other));
                }
                for prey in self.n_agents..self.n_actors() {
                    push(&mut out, rel(prey));
                    push(&mut out, world.velocities[prey]);
                }
            }
            Role::Prey => {
                for k in 0..self.n_obstacles {
                    push(&mut out, rel(self.obstacle(k)));
                }
                for pred in 0..self.n_agents {
                    push(&mut out, rel(pred));
                }
            }
        }
        debug_assert_eq!(out.len(), self.observation_len(agent));
        out
    }

    pub fn observe_all(&self, world: &WorldState) -> Vec<Vec<f64>> {
        (0..self.n_actors())
            .map(|a| self.observe(world, a))
            .collect()
    }

    /// Number of distinct obstacle groups `agent` overlaps.
    fn obstacle_hits(&self, world: &WorldState, agent: usize) -> usize {
        let mut groups: Vec<usize> = (0..self.n_obstacles)
            .filter(|&k| collision_test(agent, self.obstacle(k), world, &self.specs))
            .map(|k| self.obstacle_groups[k])
            .collect();
        groups.sort_unstable();
        groups.dedup();
        groups.len()
    }

    fn nearest_distance(
        &self,
        world: &WorldState,
        target: usize,
        agents: std::ops::Range<usize>,
    ) -> f64 {
        agents
            .map(|a| world.positions[a].dist(world.positions[target]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-actor reward for the transition `before --actions--> after`. Only the
    /// resulting world enters the current reward functions.
    pub fn reward(&self, _before: &WorldState, _actions: &[Vec2], after: &WorldState) -> Vec<f64> {
        let c = self.reward_params.collision_penalty;
        let n = self.n_agents;
        let agent_pair_hits = |a: usize| {
            (0..n)
                .filter(|&o| o != a && collision_test(a, o, after, &self.specs))
                .count()
        };
        match self.kind {
            ScenarioKind::Spread | ScenarioKind::Tunnel => {
                let coverage: f64 = (0..self.n_landmarks)
                    .map(|k| self.nearest_distance(after, self.landmark(k), 0..n))
                    .sum();
                // agent pairs are seen from both sides
                let pair_events: usize = (0..n).map(agent_pair_hits).sum::<usize>() / 2;
                let obstacle_events: usize = (0..n).map(|a| self.obstacle_hits(after, a)).sum();
                let shared = -coverage - c * (pair_events + obstacle_events) as f64;
                vec![shared; n]
            }
            ScenarioKind::SimpleTunnel => (0..n)
                .map(|a| {
                    let d = after.positions[a].dist(after.positions[self.landmark(a)]);
                    let hits = agent_pair_hits(a) + self.obstacle_hits(after, a);
                    -d - c * hits as f64
                })
                .collect(),
            ScenarioKind::ObstaclePredatorPrey => {
                let rp = self.reward_params;
                let preys = n..self.n_actors();
                let mut captures = 0usize;
                let mut chase = 0.0;
                for prey in preys.clone() {
                    captures += (0..n)
                        .filter(|&a| collision_test(a, prey, after, &self.specs))
                        .count();
                    chase += self.nearest_distance(after, prey, 0..n);
                }
                let predator_pairs: usize = (0..n).map(agent_pair_hits).sum::<usize>() / 2;
                let predator_obstacles: usize = (0..n).map(|a| self.obstacle_hits(after, a)).sum();
                let predator = rp.capture_bonus * captures as f64
                    - rp.shaping * chase
                    - c * (predator_pairs + predator_obstacles) as f64;
                let mut out = vec![predator; n];
                for prey in preys {
                    let own_captures = (0..n)
                        .filter(|&a| collision_test(a, prey, after, &self.specs))
                        .count();
                    let dist = self.nearest_distance(after, prey, 0..n);
                    let p = after.positions[prey];
                    out.push(
                        rp.shaping * dist
                            - rp.capture_bonus * own_captures as f64
                            - boundary_penalty(p.x)
                            - boundary_penalty(p.y)
                            - c * self.obstacle_hits(after, prey) as f64,
                    );
                }
                out
            }
        }
    }

    /// Episodes end by time limit only.
    pub fn is_terminal(&self, world: &WorldState) -> bool {
        world.step_index >= self.max_episode_len
    }

    /// Fixed-order concatenation of every actor's observation.
    pub fn global_state(&self, world: &WorldState) -> Vec<f64> {
        (0..self.n_actors())
            .flat_map(|a| self.observe(world, a))
            .collect()
    }

    pub fn state_len(&self) -> usize {
        self.observation_lens().iter().sum()
    }
}

/// Soft penalty for a prey leaving the unit square.
pub fn boundary_penalty(coord: f64) -> f64 {
    let x = coord.abs();
    if x < 0.9 {
        0.0
    } else if x < 1.0 {
        (x - 0.9) * 10.0
    } else {
        (2.0 * x - 2.0).exp().min(10.0)
    }
}

fn uniform(rng: &mut impl Rng, half_extent: f64) -> Vec2 {
    Vec2::new(
        rng.random_range(-half_extent..half_extent),
        rng.random_range(-half_extent..half_extent),
    )
}
