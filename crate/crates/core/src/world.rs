//! Deterministic 2D particle physics.
//!
//! Entities are discs. Movable entities receive an applied force scaled by
//! their `accel`, plus soft contact forces from every colliding partner. The
//! integrator order is fixed:
//!
//! 1. damp velocity: `v * (1 - damping)`
//! 2. add force: `+ total_force * dt` (unit mass)
//! 3. clamp speed to `max_speed` by rescaling
//! 4. integrate position: `p + v * dt`
//! 5. project into the optional bounds, zeroing velocity on a blocked axis
//!
//! Everything here is a pure function of its inputs.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityKind {
    Agent,
    Adversary,
    Landmark,
    Obstacle,
    Wall,
}

impl EntityKind {
    /// Landmarks are targets that agents may sit on.
    pub fn collides(self) -> bool {
        matches!(
            self,
            EntityKind::Agent | EntityKind::Adversary | EntityKind::Obstacle
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntitySpec {
    pub kind: EntityKind,
    pub radius: f64,
    pub movable: bool,
    /// `None` means unbounded.
    pub max_speed: Option<f64>,
    pub accel: f64,
}

impl EntitySpec {
    pub fn agent(radius: f64, accel: f64, max_speed: Option<f64>) -> Self {
        EntitySpec {
            kind: EntityKind::Agent,
            radius,
            movable: true,
            max_speed,
            accel,
        }
    }

    pub fn adversary(radius: f64, accel: f64, max_speed: Option<f64>) -> Self {
        EntitySpec {
            kind: EntityKind::Adversary,
            ..EntitySpec::agent(radius, accel, max_speed)
        }
    }

    pub fn fixed(kind: EntityKind, radius: f64) -> Self {
        EntitySpec {
            kind,
            radius,
            movable: false,
            max_speed: None,
            accel: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::config(
                "radius",
                format!("must be positive, got {}", self.radius),
            ));
        }
        if self.movable && !(self.accel > 0.0) {
            return Err(Error::config("accel", "movable entities need accel > 0"));
        }
        if self.movable && matches!(self.kind, EntityKind::Obstacle | EntityKind::Wall) {
            return Err(Error::config(
                "movable",
                "walls and obstacles are immovable",
            ));
        }
        if let Some(s) = self.max_speed {
            if !(s > 0.0) {
                return Err(Error::config("max_speed", "must be positive when set"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub dt: f64,
    pub damping: f64,
    pub contact_stiffness: f64,
    pub contact_margin: f64,
    pub bounds: Option<Rect>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            dt: 0.1,
            damping: 0.25,
            contact_stiffness: 100.0,
            contact_margin: 1e-3,
            bounds: None,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::config("damping", "must lie in [0, 1)"));
        }
        if !(self.contact_margin > 0.0) {
            return Err(Error::config("contact_margin", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub step_index: usize,
    pub episode_index: usize,
}

impl WorldState {
    pub fn at_rest(positions: Vec<Vec2>) -> Self {
        let n = positions.len();
        WorldState {
            positions,
            velocities: vec![Vec2::ZERO; n],
            step_index: 0,
            episode_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Collects entities in any order and emits them in canonical order:
/// by kind, then by the caller-provided slot within that kind.
#[derive(Debug, Default)]
pub struct WorldBuilder {
    entries: Vec<(EntityKind, usize, EntitySpec, Vec2)>,
}

impl WorldBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, slot: usize, spec: EntitySpec, position: Vec2) -> &mut Self {
        self.entries.push((spec.kind, slot, spec, position));
        self
    }

    pub fn build(mut self) -> Result<(Vec<EntitySpec>, WorldState)> {
        self.entries
            .sort_by_key(|(kind, slot, _, _)| (*kind, *slot));
        for pair in self.entries.windows(2) {
            if (pair[0].0, pair[0].1) == (pair[1].0, pair[1].1) {
                return Err(Error::config(
                    "slot",
                    format!("duplicate {:?} slot {}", pair[0].0, pair[0].1),
                ));
            }
        }
        let mut specs = Vec::with_capacity(self.entries.len());
        let mut positions = Vec::with_capacity(self.entries.len());
        for (_, _, spec, p) in self.entries {
            spec.validate()?;
            if !p.is_finite() {
                return Err(Error::Input("non-finite entity position".into()));
            }
            specs.push(spec);
            positions.push(p);
        }
        Ok((specs, WorldState::at_rest(positions)))
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Soft contact between entities `a` and `b`. Returns `(force_on_a, force_on_b)`;
/// the second is always the exact negation of the first. Coincident centers push
/// `a` along +x.
pub fn contact_force(
    a: usize,
    b: usize,
    world: &WorldState,
    cfg: &WorldConfig,
    specs: &[EntitySpec],
) -> (Vec2, Vec2) {
    let delta = world.positions[a] - world.positions[b];
    let d = delta.norm();
    let reach = specs[a].radius + specs[b].radius;
    let k = cfg.contact_margin;
    let magnitude = cfg.contact_stiffness * k * softplus((reach - d) / k);
    let dir = if d > 0.0 {
        delta * (1.0 / d)
    } else {
        Vec2::new(1.0, 0.0)
    };
    let on_a = dir * magnitude;
    (on_a, -on_a)
}

/// Strict overlap: touching discs do not collide.
pub fn collision_test(a: usize, b: usize, world: &WorldState, specs: &[EntitySpec]) -> bool {
    world.positions[a].dist(world.positions[b]) < specs[a].radius + specs[b].radius
}

/// Advance the world by one step. `forces` holds one entry per movable entity, in
/// entity order, each component in [-1, 1].
pub fn step(
    world: &WorldState,
    forces: &[Vec2],
    cfg: &WorldConfig,
    specs: &[EntitySpec],
) -> Result<WorldState> {
    if world.len() != specs.len() || world.velocities.len() != specs.len() {
        return Err(Error::config(
            "entities",
            format!("world has {} entities, specs {}", world.len(), specs.len()),
        ));
    }
    let movable: Vec<usize> = (0..specs.len()).filter(|&i| specs[i].movable).collect();
    if forces.len() != movable.len() {
        return Err(Error::config(
            "forces",
            format!("expected {} forces, got {}", movable.len(), forces.len()),
        ));
    }
    for f in forces {
        if !f.is_finite() {
            return Err(Error::Input("non-finite force".into()));
        }
        if f.x.abs() > 1.0 || f.y.abs() > 1.0 {
            return Err(Error::Input(format!("force {f:?} outside [-1, 1]")));
        }
    }

    let mut total = vec![Vec2::ZERO; specs.len()];
    for (&i, f) in movable.iter().zip(forces) {
        total[i] = *f * specs[i].accel;
    }
    for a in 0..specs.len() {
        if !specs[a].kind.collides() {
            continue;
        }
        for b in a + 1..specs.len() {
            if !specs[b].kind.collides() || !(specs[a].movable || specs[b].movable) {
                continue;
            }
            let (fa, fb) = contact_force(a, b, world, cfg, specs);
            if specs[a].movable {
                total[a] += fa;
            }
            if specs[b].movable {
                total[b] += fb;
            }
        }
    }

    let mut next = world.clone();
    for &i in &movable {
        let mut v = world.velocities[i] * (1.0 - cfg.damping) + total[i] * cfg.dt;
        if let Some(max) = specs[i].max_speed {
            let speed = v.norm();
            if speed > max {
                v = v * (max / speed);
            }
        }
        let mut p = world.positions[i] + v * cfg.dt;
        if let Some(bounds) = cfg.bounds {
            let r = specs[i].radius;
            let (lo_x, hi_x) = (bounds.min.x + r, bounds.max.x - r);
            let (lo_y, hi_y) = (bounds.min.y + r, bounds.max.y - r);
            if p.x < lo_x || p.x > hi_x {
                p.x = p.x.clamp(lo_x, hi_x);
                v.x = 0.0;
            }
            if p.y < lo_y || p.y > hi_y {
                p.y = p.y.clamp(lo_y, hi_y);
                v.y = 0.0;
            }
        }
        if !(p.is_finite() && v.is_finite()) {
            return Err(Error::NonFinite(format!("entity {i} state after step")));
        }
        next.positions[i] = p;
        next.velocities[i] = v;
    }
    next.step_index += 1;
    Ok(next)
}
