//! Self-check suites behind the `verify` subcommand. Each suite yields one
//! result per criterion with the measured value and its threshold.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::RunConfig;
use super::oracle::{oracle_reward, random_world};
use super::train::train;
use crate::algos::{td_target, AgentLayout, AlgoConfig, AlgoId, Batch, CriticSharing, Trainer};
use crate::buffers::{acting_window, ReplayBuffer, SequenceWindow, Transition};
use crate::error::{Error, Result};
use crate::nn::gradcheck::{grad_check, GradCheckReport};
use crate::nn::mixer::{mixer_vdn, Mixer, MixerKind};
use crate::nn::Params;
use crate::scenarios::{Scenario, ScenarioId};
use crate::world::Vec2;

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const GRAD_STEP: f64 = 1e-5;
pub const REWARD_TOLERANCE: f64 = 1e-12;
pub const COLLAPSE_TOLERANCE: f64 = 1e-10;
pub const MONOTONIC_FLOOR: f64 = -1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gradients,
    Td,
    Mixers,
    Collapse,
    Buffers,
    Rewards,
    Dimensions,
    Staged,
    Determinism,
    All,
}

impl Suite {
    pub const EACH: [Suite; 9] = [
        Suite::Gradients,
        Suite::Td,
        Suite::Mixers,
        Suite::Collapse,
        Suite::Buffers,
        Suite::Rewards,
        Suite::Dimensions,
        Suite::Staged,
        Suite::Determinism,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Gradients => "gradients",
            Suite::Td => "td",
            Suite::Mixers => "mixers",
            Suite::Collapse => "collapse",
            Suite::Buffers => "buffers",
            Suite::Rewards => "rewards",
            Suite::Dimensions => "dimensions",
            Suite::Staged => "staged",
            Suite::Determinism => "determinism",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::config("suite", format!("unknown suite `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CriterionResult {
    fn at_most(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        CriterionResult {
            name: name.into(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail,
        }
    }

    fn at_least(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        CriterionResult {
            name: name.into(),
            passed: measured >= threshold,
            measured,
            threshold,
            detail,
        }
    }

    fn flag(name: &str, passed: bool, detail: String) -> Self {
        CriterionResult {
            name: name.into(),
            passed,
            measured: f64::from(u8::from(passed)),
            threshold: 1.0,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub passed: bool,
    pub results: Vec<CriterionResult>,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Added to every analytic gradient entry; a non-zero value is a negative
    /// control that must make the gradient suite fail.
    pub perturb: f64,
    /// Probed coordinates per loss and parameter group.
    pub probes_per_check: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            perturb: 0.0,
            probes_per_check: 40,
            seed: 7,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<VerifyReport> {
    let results = match suite {
        Suite::All => {
            let mut all = Vec::new();
            for s in Suite::EACH {
                all.extend(run_suite(s, opts)?.results);
            }
            all
        }
        Suite::Gradients => gradients(opts)?,
        Suite::Td => td(),
        Suite::Mixers => mixers(opts.seed)?,
        Suite::Collapse => collapse(opts.seed)?,
        Suite::Buffers => buffers(opts.seed),
        Suite::Rewards => rewards(opts.seed)?,
        Suite::Dimensions => dimensions(opts.seed)?,
        Suite::Staged => staged(opts.seed)?,
        Suite::Determinism => determinism(opts.seed)?,
    };
    Ok(VerifyReport {
        suite: suite.to_string(),
        passed: results.iter().all(|r| r.passed),
        results,
    })
}

/// Random batch for `layout` whose state is the concatenation of the current
/// observations. Every agent receives the same reward so any team split works.
pub fn random_batch(layout: &AgentLayout, size: usize, window: usize, rng: &mut impl Rng) -> Batch {
    let mut m = |d: usize| Array2::from_shape_fn((size, d), |_| rng.random_range(-1.0..1.0));
    let obs: Vec<Vec<Array2<f64>>> = layout.obs_lens.iter().map(|&d| (0..window).map(|_| m(d)).collect()).collect();
    let next_obs: Vec<Vec<Array2<f64>>> =
        layout.obs_lens.iter().map(|&d| (0..window).map(|_| m(d)).collect()).collect();
    let actions = layout.obs_lens.iter().map(|_| m(2)).collect();
    let reward = m(1);
    let cat = |o: &[Vec<Array2<f64>>]| {
        let views: Vec<_> = o.iter().map(|w| w[w.len() - 1].view()).collect();
        ndarray::concatenate(ndarray::Axis(1), &views).expect("rows agree")
    };
    Batch {
        size,
        state: cat(&obs),
        next_state: cat(&next_obs),
        actions,
        rewards: vec![reward; layout.n_agents()],
        not_done: Array2::from_shape_fn((size, 1), |(r, _)| if r % 3 == 0 { 0.0 } else { 1.0 }),
        obs,
        next_obs,
    }
}

/// Flat indices of the parameters whose names satisfy `include`.
fn indices(t: &Trainer, include: &dyn Fn(&str) -> bool) -> Vec<usize> {
    let mut out = Vec::new();
    let mut offset = 0;
    t.visit("", &mut |name, p| {
        if include(&name) {
            out.extend(offset..offset + p.len());
        }
        offset += p.len();
    });
    out
}

/// Central differences of `loss` over the selected online parameters.
fn fd_check(
    trainer: &Trainer,
    include: &dyn Fn(&str) -> bool,
    loss: &dyn Fn(&mut Trainer) -> Result<f64>,
    opts: &VerifyOptions,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport> {
    let mut t = trainer.clone();
    t.zero_grad();
    loss(&mut t)?;
    let idx = indices(&t, include);
    if idx.is_empty() {
        return Err(Error::Input("gradient check selected no parameters".into()));
    }
    let base = t.flat_values();
    let grads = t.flat_grads();
    let x0: Vec<f64> = idx.iter().map(|&i| base[i]).collect();
    let g: Vec<f64> = idx.iter().map(|&i| grads[i] + opts.perturb).collect();
    let mut probe = trainer.clone();
    let mut failure = None;
    let report = grad_check(
        |x| {
            let mut full = base.clone();
            for (k, &i) in idx.iter().enumerate() {
                full[i] = x[k];
            }
            let r = probe.set_flat_values(&full).and_then(|_| loss(&mut probe));
            r.unwrap_or_else(|e| {
                failure.get_or_insert(e);
                f64::NAN
            })
        },
        &x0,
        &g,
        opts.probes_per_check,
        GRAD_STEP,
        rng,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

fn online(prefix: String, part: &'static str) -> impl Fn(&str) -> bool {
    move |n: &str| n.starts_with(&prefix) && n.contains(part) && !n.contains("target")
}

fn small_config(algo: AlgoId) -> AlgoConfig {
    AlgoConfig {
        hidden: 8,
        mixer_embed: 6,
        grad_clip: None,
        batch_size: 6,
        seq_length: if algo == AlgoId::MaddpgLstm { 5 } else { 1 },
        ..AlgoConfig::new(algo)
    }
}

fn layout(obs: &[usize], teams: Vec<Vec<usize>>) -> AgentLayout {
    AgentLayout {
        obs_lens: obs.to_vec(),
        state_len: obs.iter().sum(),
        teams,
    }
}

fn gradients(opts: &VerifyOptions) -> Result<Vec<CriterionResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut results = Vec::new();
    let started = Instant::now();
    let uneven = layout(&[5, 4, 6], vec![vec![0, 1, 2]]);
    let even = layout(&[4, 4, 4], vec![vec![0, 1, 2]]);

    for algo in [AlgoId::Iddpg, AlgoId::Maddpg, AlgoId::MaddpgLstm, AlgoId::MaddpgL] {
        let cfg = small_config(algo);
        let trainer = Trainer::new(cfg.clone(), uneven.clone(), &mut rng)?;
        let batch = random_batch(&uneven, cfg.batch_size, cfg.seq_length, &mut rng);
        let mut report: Option<GradCheckReport> = None;
        for a in 0..3 {
            let c = fd_check(
                &trainer,
                &online(format!("agent{a}."), ".critic"),
                &|t| t.critic_loss(a, &batch),
                opts,
                &mut rng,
            )?;
            let p = fd_check(
                &trainer,
                &online(format!("agent{a}."), ".actor"),
                &|t| t.actor_loss(a, &batch),
                opts,
                &mut rng,
            )?;
            let both = c.merge(p);
            report = Some(report.map_or(both, |r| r.merge(both)));
        }
        let r = report.expect("three agents checked");
        results.push(CriterionResult::at_most(
            &format!("gradients/{algo}"),
            r.max_rel_error,
            GRAD_TOLERANCE,
            format!("{} probes, critic and actor losses", r.probes),
        ));
    }

    for mixer in [MixerKind::Vdn, MixerKind::Monotonic, MixerKind::NonMonotonic] {
        for sharing in [CriticSharing::OwnCritics, CriticSharing::SimulateWithOwn] {
            let lay = if sharing == CriticSharing::OwnCritics { &uneven } else { &even };
            let cfg = AlgoConfig {
                mixer,
                sharing,
                ..small_config(AlgoId::Facmac)
            };
            let trainer = Trainer::new(cfg.clone(), lay.clone(), &mut rng)?;
            let batch = random_batch(lay, cfg.batch_size, 1, &mut rng);
            let owners: Vec<Option<usize>> = match sharing {
                CriticSharing::OwnCritics => vec![None],
                CriticSharing::SimulateWithOwn => (0..3).map(Some).collect(),
            };
            let mut report: Option<GradCheckReport> = None;
            for owner in owners {
                let critics: Box<dyn Fn(&str) -> bool> = match owner {
                    None => Box::new(|n: &str| {
                        (n.contains(".critic") || n.starts_with("mixer0.online")) && !n.contains("target")
                    }),
                    Some(a) => {
                        let own = online(format!("agent{a}."), ".critic");
                        Box::new(move |n: &str| own(n) || n.starts_with("mixer0.online"))
                    }
                };
                let c = fd_check(&trainer, &*critics, &|t| t.facmac_critic_loss(0, &batch, owner), opts, &mut rng)?;
                let p = fd_check(
                    &trainer,
                    &|n: &str| n.contains(".actor") && !n.contains("target"),
                    &|t| t.facmac_actor_loss(0, &batch, owner),
                    opts,
                    &mut rng,
                )?;
                let both = c.merge(p);
                report = Some(report.map_or(both, |r| r.merge(both)));
            }
            let r = report.expect("at least one owner");
            results.push(CriterionResult::at_most(
                &format!("gradients/facmac-{}-{}", mixer.as_str(), sharing.as_str()),
                r.max_rel_error,
                GRAD_TOLERANCE,
                format!("{} probes, mixed critic and actor losses", r.probes),
            ));
        }
    }
    let total: usize = results
        .iter()
        .map(|r| r.detail.split(' ').next().and_then(|n| n.parse::<usize>().ok()).unwrap_or(0))
        .sum();
    results.push(CriterionResult::at_least(
        "gradients/probe-count",
        total as f64,
        1000.0,
        format!("{:.1} s", started.elapsed().as_secs_f64()),
    ));
    Ok(results)
}

fn td() -> Vec<CriterionResult> {
    let y = td_target(1.0, 2.0, 0.95, false);
    let terminal = td_target(1.0, 2.0, 0.95, true);
    vec![
        CriterionResult::at_most("td/bootstrap", (y - 2.9).abs(), 1e-12, format!("y = {y}")),
        CriterionResult::at_most("td/terminal", (terminal - 1.0).abs(), 0.0, format!("y = {terminal}")),
    ]
}

fn mixers(seed: u64) -> Result<Vec<CriterionResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vdn_err: f64 = 0.0;
    let mut min_partial = f64::INFINITY;
    let h = 1e-5;
    for sample in 0..1000 {
        let n = 1 + sample % 6;
        let state_len = 1 + rng.random_range(0..8);
        let state = Array2::from_shape_fn((1, state_len), |_| rng.random_range(-2.0..2.0));
        let qs = Array2::from_shape_fn((1, n), |_| rng.random_range(-5.0..5.0));

        let vdn = Mixer::new(MixerKind::Vdn, n, state_len, 4, &mut rng);
        let (out, _) = vdn.forward(&state, &qs)?;
        let mut sum = 0.0;
        for j in 0..n {
            sum += qs[[0, j]];
        }
        let local: Vec<f64> = qs.row(0).to_vec();
        vdn_err = vdn_err.max((out[[0, 0]] - sum).abs()).max((mixer_vdn(&local)? - sum).abs());

        let mono = Mixer::new(MixerKind::Monotonic, n, state_len, 1 + rng.random_range(0..8), &mut rng);
        for j in 0..n {
            let mut up = qs.clone();
            let mut down = qs.clone();
            up[[0, j]] += h;
            down[[0, j]] -= h;
            let partial = (mono.forward(&state, &up)?.0[[0, 0]] - mono.forward(&state, &down)?.0[[0, 0]]) / (2.0 * h);
            min_partial = min_partial.min(partial);
        }
    }
    Ok(vec![
        CriterionResult::at_most("mixers/vdn-sum", vdn_err, 0.0, "1000 samples".into()),
        CriterionResult::at_least(
            "mixers/monotonic-partials",
            min_partial,
            MONOTONIC_FLOOR,
            "1000 samples, every local value".into(),
        ),
    ])
}

fn collapse(seed: u64) -> Result<Vec<CriterionResult>> {
    let lay = layout(&[4], vec![vec![0]]);
    let algos = [AlgoId::Maddpg, AlgoId::MaddpgL, AlgoId::Iddpg, AlgoId::Facmac];
    let mut trainers = algos
        .iter()
        .map(|&algo| {
            let cfg = AlgoConfig {
                mixer: MixerKind::Vdn,
                ..small_config(algo)
            };
            Trainer::new(cfg, lay.clone(), &mut ChaCha8Rng::seed_from_u64(seed))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb47c);
    let mut worst: f64 = 0.0;
    for step in 1..=100u64 {
        let batch = random_batch(&lay, 6, 1, &mut rng);
        for t in &mut trainers {
            t.update(&batch, step)?;
        }
        let reference = trainers[0].flat_values();
        for t in &trainers[1..] {
            let v = t.flat_values();
            if v.len() != reference.len() {
                return Err(Error::Shape("collapsed trainers differ in parameter count".into()));
            }
            for (a, b) in reference.iter().zip(&v) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(vec![CriterionResult::at_most(
        "collapse/single-agent",
        worst,
        COLLAPSE_TOLERANCE,
        "maddpg, maddpg-l, iddpg, facmac-vdn over 100 updates".into(),
    )])
}

fn tagged(step: usize, episode: usize) -> Arc<Transition> {
    let tag = (episode * 10_000 + step) as f64;
    Arc::new(Transition {
        state: vec![tag],
        next_state: vec![tag + 0.5],
        obs: vec![vec![tag]],
        next_obs: vec![vec![tag + 0.5]],
        actions: vec![Vec2::ZERO],
        rewards: vec![0.0],
        terminal: false,
        step_index: step,
        episode_index: episode,
    })
}

fn buffers(seed: u64) -> Vec<CriterionResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let programs = 10_000;
    let mut ring_bad = 0usize;
    let mut window_bad = 0usize;
    for _ in 0..programs {
        let capacity = rng.random_range(1..16);
        let mut ring = ReplayBuffer::new(capacity);
        let mut oracle = VecDeque::new();
        let mut ok = true;
        for _ in 0..rng.random_range(0..64) {
            let x: u32 = rng.random();
            ring.push(x);
            oracle.push_back(x);
            if oracle.len() > capacity {
                oracle.pop_front();
            }
            ok &= ring.len() <= capacity && ring.iter().eq(oracle.iter());
        }
        ring_bad += usize::from(!ok);

        let len = rng.random_range(1..7);
        let mut window = SequenceWindow::new(len);
        let mut oracle: VecDeque<(usize, usize)> = VecDeque::new();
        let (mut episode, mut step) = (0usize, 0usize);
        let mut ok = true;
        for _ in 0..rng.random_range(0..64) {
            if rng.random_bool(0.2) {
                window.reset();
                oracle.clear();
                episode += 1;
                step = 0;
            } else {
                window.push(tagged(step, episode));
                oracle.push_back((step, episode));
                if oracle.len() > len {
                    oracle.pop_front();
                }
                step += 1;
            }
            let held: Vec<(usize, usize)> = window.transitions().map(|t| (t.step_index, t.episode_index)).collect();
            ok &= held.iter().eq(oracle.iter());
            ok &= window.is_contiguous();
            let same_episode = |o: &&[f64]| (o[0] as usize) / 10_000 == episode;
            ok &= window.observation_window(0).iter().all(same_episode);
            ok &= window.next_observation_window(0).iter().all(same_episode);
            let current = [(episode * 10_000 + step) as f64];
            let acting = acting_window(&window, 0, &current);
            ok &= acting.len() == len && acting.iter().all(same_episode);
        }
        window_bad += usize::from(!ok);
    }
    vec![
        CriterionResult::at_most(
            "buffers/replay-ring",
            ring_bad as f64,
            0.0,
            format!("{programs} programs against a bounded queue"),
        ),
        CriterionResult::at_most(
            "buffers/sequence-window",
            window_bad as f64,
            0.0,
            format!("{programs} programs with episode resets"),
        ),
    ]
}

fn rewards(seed: u64) -> Result<Vec<CriterionResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();
    for id in ScenarioId::ALL {
        let scenario = Scenario::new(id);
        let mut worst: f64 = 0.0;
        let mut contacts = 0usize;
        for e in 0..1000 {
            let world = random_world(&scenario, &mut rng, e);
            let actions = vec![Vec2::ZERO; scenario.n_actors()];
            let got = scenario.reward(&world, &actions, &world);
            let want = oracle_reward(&scenario, &world);
            if got.len() != want.len() {
                return Err(Error::Shape(format!("{id}: reward length {} vs {}", got.len(), want.len())));
            }
            for (a, b) in got.iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
            let touching = (0..world.len()).any(|i| {
                (i + 1..world.len()).any(|j| {
                    world.positions[i].dist(world.positions[j]) < scenario.specs[i].radius + scenario.specs[j].radius
                })
            });
            contacts += usize::from(touching);
        }
        results.push(CriterionResult::at_most(
            &format!("rewards/{id}"),
            worst,
            REWARD_TOLERANCE,
            format!("1000 random worlds, {contacts} with overlapping discs"),
        ));
    }
    Ok(results)
}

/// Median wall clock of `reps` updates.
fn time_updates(trainer: &mut Trainer, batch: &Batch, reps: usize) -> Result<f64> {
    let mut times = Vec::with_capacity(reps);
    for step in 1..=reps as u64 {
        let t0 = Instant::now();
        trainer.update(batch, step)?;
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[reps / 2])
}

/// Median per-update wall clock of `algo` on `id` at the given batch size.
pub fn update_seconds(id: ScenarioId, algo: AlgoId, batch_size: usize, reps: usize, seed: u64) -> Result<f64> {
    let lay = AgentLayout::from_scenario(&Scenario::new(id));
    let cfg = AlgoConfig {
        batch_size,
        ..AlgoConfig::new(algo)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trainer = Trainer::new(cfg, lay.clone(), &mut rng)?;
    let batch = random_batch(&lay, batch_size, 1, &mut rng);
    time_updates(&mut trainer, &batch, reps)
}

fn dimensions(seed: u64) -> Result<Vec<CriterionResult>> {
    let mut results = Vec::new();
    for id in [ScenarioId::Spread3a, ScenarioId::Spread6a, ScenarioId::Spread9a] {
        let scenario = Scenario::new(id);
        let lay = AgentLayout::from_scenario(&scenario);
        let n = lay.n_agents();
        let d_obs = lay.obs_lens[0];
        let even = lay.obs_lens.iter().all(|&d| d == d_obs);
        let full = crate::algos::critic_input_len(AlgoId::Maddpg, &lay, 0);
        let local = crate::algos::critic_input_len(AlgoId::MaddpgL, &lay, 0);
        results.push(CriterionResult::flag(
            &format!("dimensions/{id}"),
            even && full == n * d_obs + n * 2 && local == n * d_obs + 2,
            format!("n = {n}, d_obs = {d_obs}: maddpg {full}, maddpg-l {local}"),
        ));
    }
    let full = update_seconds(ScenarioId::Spread9a, AlgoId::Maddpg, 32, 15, seed)?;
    let local = update_seconds(ScenarioId::Spread9a, AlgoId::MaddpgL, 32, 15, seed)?;
    results.push(CriterionResult::at_most(
        "dimensions/update-time-n9",
        local,
        full,
        format!("median seconds per update: maddpg-l {local:.5}, maddpg {full:.5}"),
    ));
    Ok(results)
}

fn mixer_bits(t: &Trainer) -> Vec<u64> {
    let mut bits = Vec::new();
    for m in &t.mixers {
        bits.extend(m.flat_values().iter().map(|v| v.to_bits()));
    }
    bits
}

fn online_mixer_bits(t: &Trainer) -> Vec<u64> {
    let mut bits = Vec::new();
    for m in &t.mixers {
        bits.extend(m.online.flat_values().iter().map(|v| v.to_bits()));
    }
    bits
}

fn staged(seed: u64) -> Result<Vec<CriterionResult>> {
    let watershed = 6;
    let lay = layout(&[5, 4, 6], vec![vec![0, 1, 2]]);
    let cfg = AlgoConfig {
        mixer: MixerKind::Monotonic,
        staged_watershed: Some(watershed),
        ..small_config(AlgoId::Facmac)
    };
    let mut trainer = Trainer::new(cfg, lay.clone(), &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57a9);
    let initial = mixer_bits(&trainer);
    let mut frozen_ok = true;
    let mut agents_moved = true;
    for step in 1..watershed {
        let before = trainer.agents.clone();
        trainer.update(&random_batch(&lay, 6, 1, &mut rng), step)?;
        frozen_ok &= mixer_bits(&trainer) == initial;
        agents_moved &= before
            .iter()
            .zip(&trainer.agents)
            .all(|(b, a)| b.critic.flat_values() != a.critic.flat_values());
    }
    let before = online_mixer_bits(&trainer);
    trainer.update(&random_batch(&lay, 6, 1, &mut rng), watershed)?;
    let after = online_mixer_bits(&trainer);
    let changed = before.iter().zip(&after).filter(|(a, b)| a != b).count();
    Ok(vec![
        CriterionResult::flag(
            "staged/frozen-before-watershed",
            frozen_ok && agents_moved,
            format!("{} updates with a bit-identical mixer while every critic moved", watershed - 1),
        ),
        CriterionResult::at_least(
            "staged/mixer-moves-at-watershed",
            changed as f64,
            1.0,
            format!("{changed} of {} mixer coordinates changed", after.len()),
        ),
    ])
}

/// Short training configuration used by the determinism check.
pub fn smoke_config(seed: u64) -> Result<RunConfig> {
    let pairs: Vec<(String, String)> = [
        ("scenario", "spread-3a"),
        ("scale", "desk"),
        ("algo", "maddpg"),
        ("time-steps", "400"),
        ("Batch-size", "32"),
        ("hidden", "16"),
        ("eval-every", "200"),
        ("eval-episodes", "2"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .chain([("seed".to_string(), seed.to_string())])
    .collect();
    RunConfig::resolve(&[], &pairs)
}

fn determinism(seed: u64) -> Result<Vec<CriterionResult>> {
    let root = std::env::temp_dir().join(format!("marl-verify-{}-{seed}", std::process::id()));
    let mut digests = Vec::new();
    for run in 0..2 {
        let dir = root.join(format!("run{run}"));
        let mut cfg = smoke_config(seed)?;
        cfg.out = Some(dir.clone());
        train(&cfg)?;
        let mut files = Vec::new();
        for name in ["metrics.csv", "checkpoint.bin", "curves.svg"] {
            let p = dir.join(name);
            files.push(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
        }
        digests.push(files);
    }
    let _ = std::fs::remove_dir_all(&root);
    Ok(["metrics.csv", "checkpoint.bin", "curves.svg"]
        .iter()
        .enumerate()
        .map(|(i, name)| {
            CriterionResult::flag(
                &format!("determinism/{name}"),
                digests[0][i] == digests[1][i],
                format!("{} bytes", digests[0][i].len()),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suites_pass() {
        let opts = VerifyOptions::default();
        for suite in [Suite::Td, Suite::Staged, Suite::Collapse] {
            let report = run_suite(suite, &opts).unwrap();
            assert!(report.passed, "{}", report.to_json());
        }
    }

    #[test]
    fn perturbed_gradients_fail() {
        let opts = VerifyOptions {
            perturb: 1e-2,
            probes_per_check: 8,
            ..VerifyOptions::default()
        };
        let report = run_suite(Suite::Gradients, &opts).unwrap();
        assert!(!report.passed);
        assert!(report.results.iter().filter(|r| r.name.starts_with("gradients/")).any(|r| !r.passed));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::EACH.into_iter().chain([Suite::All]) {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
