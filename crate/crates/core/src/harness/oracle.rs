//! Brute-force reward recomputation from raw geometry, used by the reward
//! verification suite. It shares no code with the scenario reward functions.

use rand::Rng;

use crate::scenarios::{Scenario, ScenarioKind};
use crate::world::{EntityKind, Vec2, WorldState};

fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

fn mpe_bound(x: f64) -> f64 {
    let x = x.abs();
    if x < 0.9 {
        0.0
    } else if x < 1.0 {
        10.0 * (x - 0.9)
    } else {
        f64::min((2.0 * x - 2.0).exp(), 10.0)
    }
}

struct View<'a> {
    world: &'a WorldState,
    radius: Vec<f64>,
    agents: Vec<usize>,
    adversaries: Vec<usize>,
    landmarks: Vec<usize>,
    obstacles: Vec<usize>,
    tunnel: bool,
}

impl View<'_> {
    fn touching(&self, i: usize, j: usize) -> bool {
        dist(self.world.positions[i], self.world.positions[j]) < self.radius[i] + self.radius[j]
    }

    /// Tunnel discs form two walls split by the corridor axis; elsewhere each
    /// obstacle is its own group.
    fn group(&self, k: usize) -> usize {
        if self.tunnel {
            usize::from(self.world.positions[k].y < 0.0)
        } else {
            k
        }
    }

    fn obstacle_groups_hit(&self, i: usize) -> usize {
        let mut groups: Vec<usize> = Vec::new();
        for &k in &self.obstacles {
            if self.touching(i, k) && !groups.contains(&self.group(k)) {
                groups.push(self.group(k));
            }
        }
        groups.len()
    }

    fn closest(&self, target: usize, from: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for &i in from {
            let d = dist(self.world.positions[i], self.world.positions[target]);
            if d < best {
                best = d;
            }
        }
        best
    }
}

/// Reward of every actor in `world`, recomputed from positions and radii.
pub fn oracle_reward(scenario: &Scenario, world: &WorldState) -> Vec<f64> {
    let pick = |kind: EntityKind| -> Vec<usize> {
        (0..scenario.specs.len()).filter(|&i| scenario.specs[i].kind == kind).collect()
    };
    let v = View {
        world,
        radius: scenario.specs.iter().map(|s| s.radius).collect(),
        agents: pick(EntityKind::Agent),
        adversaries: pick(EntityKind::Adversary),
        landmarks: pick(EntityKind::Landmark),
        obstacles: pick(EntityKind::Obstacle),
        tunnel: matches!(scenario.kind, ScenarioKind::Tunnel | ScenarioKind::SimpleTunnel),
    };
    let c = scenario.reward_params.collision_penalty;
    let agents = &v.agents;
    let mut pairs = 0usize;
    for x in 0..agents.len() {
        for y in x + 1..agents.len() {
            if v.touching(agents[x], agents[y]) {
                pairs += 1;
            }
        }
    }
    let obstacle_events: usize = agents.iter().map(|&a| v.obstacle_groups_hit(a)).sum();

    match scenario.kind {
        ScenarioKind::Spread | ScenarioKind::Tunnel => {
            let mut total = 0.0;
            for &l in &v.landmarks {
                total -= v.closest(l, agents);
            }
            total -= c * (pairs + obstacle_events) as f64;
            vec![total; agents.len()]
        }
        ScenarioKind::SimpleTunnel => agents
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let own_target = v.landmarks[i];
                let bumps = agents.iter().filter(|&&b| b != a && v.touching(a, b)).count();
                -dist(world.positions[a], world.positions[own_target]) - c * (bumps + v.obstacle_groups_hit(a)) as f64
            })
            .collect(),
        ScenarioKind::ObstaclePredatorPrey => {
            let rp = scenario.reward_params;
            let mut captures = 0usize;
            let mut chase = 0.0;
            for &p in &v.adversaries {
                captures += agents.iter().filter(|&&a| v.touching(a, p)).count();
                chase += v.closest(p, agents);
            }
            let team = rp.capture_bonus * captures as f64 - rp.shaping * chase - c * (pairs + obstacle_events) as f64;
            let mut out = vec![team; agents.len()];
            for &p in &v.adversaries {
                let caught = agents.iter().filter(|&&a| v.touching(a, p)).count();
                let pos = world.positions[p];
                out.push(
                    rp.shaping * v.closest(p, agents)
                        - rp.capture_bonus * caught as f64
                        - mpe_bound(pos.x)
                        - mpe_bound(pos.y)
                        - c * v.obstacle_groups_hit(p) as f64,
                );
            }
            out
        }
    }
}

/// A world with the scenario's entities scattered so that contacts are common.
/// Tunnel walls keep their fixed layout.
pub fn random_world(scenario: &Scenario, rng: &mut impl Rng, episode: usize) -> WorldState {
    let mut world = scenario.reset(rng, episode);
    let fixed_walls = matches!(scenario.kind, ScenarioKind::Tunnel | ScenarioKind::SimpleTunnel);
    let extent = if rng.random_bool(0.5) { 0.5 } else { 1.3 };
    for (i, spec) in scenario.specs.iter().enumerate() {
        if fixed_walls && spec.kind == EntityKind::Obstacle {
            continue;
        }
        world.positions[i] = Vec2::new(rng.random_range(-extent..extent), rng.random_range(-extent..extent));
        if spec.movable {
            world.velocities[i] = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    world
}
