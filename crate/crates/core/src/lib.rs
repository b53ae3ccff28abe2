//! Multi-agent actor-critic training on a deterministic particle world.
//!
//! The crate is split bottom-up:
//!
//! - [`world`]: disc physics with soft contacts.
//! - [`scenarios`]: predator-prey, spread, tunnel and simple tunnel.
//! - [`nn`]: dense/LSTM networks, mixers, Adam and gradient checking.
//! - [`buffers`]: replay ring, sequence windows and exploration noise.
//! - [`algos`]: IDDPG, MADDPG, MADDPG with an LSTM actor, MADDPG-L and FACMAC.
//! - [`harness`]: configuration, the train/eval loop, metrics, plots,
//!   checkpoints and verification suites.

pub mod algos;
pub mod buffers;
pub mod error;
pub mod harness;
pub mod nn;
pub mod scenarios;
pub mod world;

pub use error::{Error, Result};
pub use scenarios::{make_scenario, Scenario, ScenarioId, ScenarioKind};
pub use world::{EntityKind, EntitySpec, Vec2, WorldConfig, WorldState};
