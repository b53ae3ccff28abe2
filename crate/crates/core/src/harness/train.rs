//! The interaction/training loop and noise-free evaluation.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::metrics::{MetricsRow, MetricsWriter};
use super::plot::emit_plot;
use crate::algos::{Actor, AgentLayout, Batch, Trainer};
use crate::buffers::{acting_window, explore, ReplayBuffer, SequenceWindow, Transition};
use crate::error::{Error, Result};
use crate::scenarios::{Scenario, ScenarioId};
use crate::world::{self, Vec2, WorldState};

/// Named random substreams of one run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Env = 2,
    Exploration = 3,
    Sampling = 4,
    Eval = 5,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Agents whose returns enter `mean_return`: every non-adversary.
pub fn scored_agents(scenario: &Scenario) -> std::ops::Range<usize> {
    0..scenario.n_agents
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    /// Mean undiscounted return per actor.
    pub per_agent: Vec<f64>,
    /// Mean over scored agents of `per_agent`.
    pub mean: f64,
    /// `[episode][actor]` undiscounted returns.
    pub episode_returns: Vec<Vec<f64>>,
}

/// Run `episodes` episodes with `policy(agent, window, world)` choosing actions.
/// Worlds are drawn sequentially from `reset_rng`.
pub fn rollout(
    scenario: &Scenario,
    episodes: usize,
    window_len: usize,
    reset_rng: &mut ChaCha8Rng,
    mut policy: impl FnMut(usize, &[&[f64]], &WorldState) -> Result<Vec2>,
) -> Result<EvalResult> {
    let n = scenario.n_actors();
    let mut episode_returns = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut world = scenario.reset(reset_rng, e);
        let mut seq = SequenceWindow::new(window_len.max(1));
        let mut returns = vec![0.0; n];
        loop {
            let obs = scenario.observe_all(&world);
            let mut actions = Vec::with_capacity(n);
            for (a, o) in obs.iter().enumerate() {
                let window = acting_window(&seq, a, o);
                actions.push(policy(a, &window, &world)?);
            }
            let next = world::step(&world, &actions, &scenario.world_cfg, &scenario.specs)?;
            let rewards = scenario.reward(&world, &actions, &next);
            for (r, x) in returns.iter_mut().zip(&rewards) {
                *r += x;
            }
            if scenario.is_terminal(&next) {
                break;
            }
            if window_len > 1 {
                let next_obs = scenario.observe_all(&next);
                seq.push(Arc::new(Transition {
                    state: obs.concat(),
                    next_state: next_obs.concat(),
                    obs,
                    next_obs,
                    actions,
                    rewards,
                    terminal: false,
                    step_index: world.step_index,
                    episode_index: e,
                }));
            }
            world = next;
        }
        episode_returns.push(returns);
    }
    Ok(summarize(scenario, episode_returns))
}

fn summarize(scenario: &Scenario, episode_returns: Vec<Vec<f64>>) -> EvalResult {
    let n = scenario.n_actors();
    let count = episode_returns.len().max(1) as f64;
    let per_agent: Vec<f64> = (0..n)
        .map(|a| episode_returns.iter().map(|r| r[a]).sum::<f64>() / count)
        .collect();
    let scored = scored_agents(scenario);
    let mean = per_agent[scored.clone()].iter().sum::<f64>() / scored.len() as f64;
    EvalResult {
        per_agent,
        mean,
        episode_returns,
    }
}

/// Noise-free evaluation of `actors`.
pub fn evaluate_actors(
    scenario: &Scenario,
    actors: &[Actor],
    window_len: usize,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    let mut rng = substream(seed, Stream::Eval);
    rollout(scenario, episodes, window_len, &mut rng, |a, window, _| {
        if actors[a].is_recurrent() {
            actors[a].act(window)
        } else {
            actors[a].act(&window[window.len() - 1..])
        }
    })
}

/// Evaluate a stored checkpoint on `scenario`.
pub fn evaluate(checkpoint: &Checkpoint, scenario: ScenarioId, episodes: usize, seed: u64) -> Result<EvalResult> {
    let mut env = Scenario::new(scenario);
    checkpoint.check_layout(&AgentLayout::from_scenario(&env))?;
    let cfg = checkpoint.run_config()?;
    env.max_episode_len = cfg.max_episode_len;
    let trainer = checkpoint.to_trainer()?;
    evaluate_actors(&env, &trainer.actors(), trainer.cfg.seq_length, episodes, seed)
}

enum Replay {
    Flat(ReplayBuffer<Transition>),
    Windows(ReplayBuffer<SequenceWindow>),
}

impl Replay {
    fn len(&self) -> usize {
        match self {
            Replay::Flat(b) => b.len(),
            Replay::Windows(b) => b.len(),
        }
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Option<Batch>> {
        match self {
            Replay::Flat(b) => b.sample(n, rng).map(|items| Batch::from_transitions(&items)).transpose(),
            Replay::Windows(b) => b.sample(n, rng).map(|items| Batch::from_windows(&items)).transpose(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub rows: Vec<MetricsRow>,
    pub updates: u64,
    pub episodes: usize,
    pub checkpoint: Checkpoint,
    pub out: Option<PathBuf>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Train according to `cfg`, writing artifacts to `cfg.out` when set.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let started = Instant::now();
    let mut scenario = Scenario::new(cfg.scenario);
    scenario.max_episode_len = cfg.max_episode_len;
    let n = scenario.n_actors();
    let layout = AgentLayout::from_scenario(&scenario);
    let algo_cfg = cfg.algo_config();
    let window_len = algo_cfg.seq_length;
    let windowed = cfg.algo.uses_windows();

    let mut trainer = Trainer::new(algo_cfg, layout, &mut substream(cfg.seed, Stream::Init))?;
    let mut env_rng = substream(cfg.seed, Stream::Env);
    let mut explore_rng = substream(cfg.seed, Stream::Exploration);
    let mut sample_rng = substream(cfg.seed, Stream::Sampling);

    let mut writer = match &cfg.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_text(&dir.join("config.resolved"), &cfg.resolved())?;
            Some(MetricsWriter::create(&dir.join("metrics.csv"), n)?)
        }
        None => None,
    };

    let mut replay = if windowed {
        Replay::Windows(ReplayBuffer::new(cfg.replay_capacity))
    } else {
        Replay::Flat(ReplayBuffer::new(cfg.replay_capacity))
    };
    let mut rows = Vec::new();
    let mut episode = 0usize;
    let mut world = scenario.reset(&mut env_rng, episode);
    let mut seq = SequenceWindow::new(window_len);

    for t in 0..cfg.time_steps {
        let obs = scenario.observe_all(&world);
        let mut actions = Vec::with_capacity(n);
        for (a, o) in obs.iter().enumerate() {
            let u = if windowed {
                trainer.act(a, &acting_window(&seq, a, o))?
            } else {
                trainer.act(a, &[o.as_slice()])?
            };
            actions.push(explore(u, &mut explore_rng, cfg.epsilon, cfg.noise_rate));
        }
        let next = world::step(&world, &actions, &scenario.world_cfg, &scenario.specs)?;
        let rewards = scenario.reward(&world, &actions, &next);
        let next_obs = scenario.observe_all(&next);
        let terminal = scenario.is_terminal(&next);
        let transition = Transition {
            state: obs.concat(),
            next_state: next_obs.concat(),
            obs,
            next_obs,
            actions,
            rewards,
            terminal,
            step_index: world.step_index,
            episode_index: episode,
        };
        if !transition.is_finite() {
            return Err(Error::NonFinite(format!("transition at timestep {t}")));
        }
        match &mut replay {
            Replay::Flat(b) => b.push(transition),
            Replay::Windows(b) => {
                seq.push(Arc::new(transition));
                b.push(seq.clone());
            }
        }

        if replay.len() >= cfg.batch_size {
            if let Some(batch) = replay.sample(cfg.batch_size, &mut sample_rng)? {
                if let Err(e) = trainer.update(&batch, t + 1) {
                    if let Some(dir) = &cfg.out {
                        Checkpoint::from_trainer(&trainer, cfg, t + 1).save(&dir.join("failure.bin"))?;
                    }
                    return Err(match e {
                        Error::NonFinite(what) => Error::NonFinite(format!(
                            "{what} at timestep {} after {} updates (snapshot in failure.bin)",
                            t + 1,
                            trainer.updates
                        )),
                        other => other,
                    });
                }
            }
        }

        if terminal {
            episode += 1;
            world = scenario.reset(&mut env_rng, episode);
            seq.reset();
        } else {
            world = next;
        }

        if (t + 1) % cfg.eval_every == 0 {
            let result = evaluate_actors(&scenario, &trainer.actors(), window_len, cfg.eval_episodes, cfg.seed)?;
            let row = MetricsRow {
                timestep: t + 1,
                episode,
                agent_returns: result.per_agent,
                mean_return: result.mean,
                wall_clock_s: if cfg.record_wall_clock { started.elapsed().as_secs_f64() } else { 0.0 },
            };
            if let Some(w) = &mut writer {
                w.write(&row)?;
            }
            rows.push(row);
        }
    }

    let checkpoint = Checkpoint::from_trainer(&trainer, cfg, cfg.time_steps);
    if let Some(dir) = &cfg.out {
        checkpoint.save(&dir.join("checkpoint.bin"))?;
        drop(writer);
        emit_plot(&[&dir.join("metrics.csv")], &dir.join("curves.svg"))?;
    }
    Ok(TrainSummary {
        rows,
        updates: trainer.updates,
        episodes: episode,
        checkpoint,
        out: cfg.out.clone(),
    })
}
