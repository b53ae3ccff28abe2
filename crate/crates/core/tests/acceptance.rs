//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Oracles here are written independently of the library.

use std::collections::VecDeque;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use marl_core::algos::{critic_input_len, td_target, AgentLayout, AlgoConfig, AlgoId, Batch, CriticSharing, Trainer};
use marl_core::buffers::{acting_window, ReplayBuffer, SequenceWindow, Transition};
use marl_core::harness::train::{rollout, substream, Stream};
use marl_core::harness::{train, RunConfig};
use marl_core::nn::{Mixer, MixerKind, Params};
use marl_core::{EntityKind, Scenario, ScenarioId, ScenarioKind, Vec2, WorldState};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// The learning runs keep 100k replay entries alive across updates, which
// fragments glibc malloc into gigabytes.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

// ---------------------------------------------------------------- helpers

fn layout(obs: &[usize], teams: Vec<Vec<usize>>) -> AgentLayout {
    AgentLayout {
        obs_lens: obs.to_vec(),
        state_len: obs.iter().sum(),
        teams,
    }
}

fn small(algo: AlgoId) -> AlgoConfig {
    AlgoConfig {
        hidden: 10,
        mixer_embed: 6,
        batch_size: 7,
        seq_length: if algo == AlgoId::MaddpgLstm { 5 } else { 1 },
        ..AlgoConfig::new(algo)
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Batch with `state` equal to the concatenated current observations and one
/// reward column shared by every agent.
fn batch(lay: &AgentLayout, size: usize, window: usize, rng: &mut ChaCha8Rng) -> Batch {
    let seqs = |rng: &mut ChaCha8Rng| -> Vec<Vec<Array2<f64>>> {
        lay.obs_lens.iter().map(|&d| (0..window).map(|_| uniform(rng, size, d)).collect()).collect()
    };
    let obs = seqs(rng);
    let next_obs = seqs(rng);
    let concat = |o: &Vec<Vec<Array2<f64>>>| {
        let views: Vec<_> = o.iter().map(|w| w.last().unwrap().view()).collect();
        ndarray::concatenate(Axis(1), &views).unwrap()
    };
    let reward = uniform(rng, size, 1);
    Batch {
        size,
        state: concat(&obs),
        next_state: concat(&next_obs),
        actions: lay.obs_lens.iter().map(|_| uniform(rng, size, 2)).collect(),
        rewards: vec![reward; lay.n_agents()],
        not_done: Array2::from_shape_fn((size, 1), |(r, _)| if r == 2 { 0.0 } else { 1.0 }),
        obs,
        next_obs,
    }
}

fn selected(t: &Trainer, keep: &dyn Fn(&str) -> bool) -> Vec<usize> {
    let names = t.named("");
    let mut out = Vec::new();
    let mut offset = 0;
    for (name, shape, _) in names {
        let len = shape[0] * shape[1];
        if keep(&name) {
            out.extend(offset..offset + len);
        }
        offset += len;
    }
    out
}

struct FdStats {
    worst: f64,
    probes: usize,
}

/// Central differences with step `h` at `probes` random coordinates among
/// the parameters chosen by `keep`, compared against the analytic gradient.
fn finite_difference(
    trainer: &Trainer,
    keep: &dyn Fn(&str) -> bool,
    loss: &dyn Fn(&mut Trainer) -> f64,
    probes: usize,
    rng: &mut ChaCha8Rng,
    stats: &mut FdStats,
) {
    const H: f64 = 1e-5;
    let mut t = trainer.clone();
    t.zero_grad();
    loss(&mut t);
    let analytic = t.flat_grads();
    let base = t.flat_values();
    let idx = selected(&t, keep);
    assert!(!idx.is_empty());
    let mut probe = trainer.clone();
    for _ in 0..probes {
        let i = idx[rng.random_range(0..idx.len())];
        let mut x = base.clone();
        x[i] = base[i] + H;
        probe.set_flat_values(&x).unwrap();
        let up = loss(&mut probe);
        x[i] = base[i] - H;
        probe.set_flat_values(&x).unwrap();
        let down = loss(&mut probe);
        let numeric = (up - down) / (2.0 * H);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        let err = (analytic[i] - numeric).abs() / scale;
        stats.worst = if err.is_nan() { f64::INFINITY } else { stats.worst.max(err) };
        stats.probes += 1;
    }
}

fn online_part(agent: usize, part: &'static str) -> impl Fn(&str) -> bool {
    let prefix = format!("agent{agent}.{part}");
    move |n: &str| n.starts_with(&prefix)
}

// ---------------------------------------------------------------- criteria

fn gradient_fidelity() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut stats = FdStats { worst: 0.0, probes: 0 };
    let uneven = layout(&[6, 4, 5], vec![vec![0, 1, 2]]);
    let even = layout(&[5, 5, 5], vec![vec![0, 1, 2]]);

    for algo in [AlgoId::Maddpg, AlgoId::MaddpgLstm, AlgoId::MaddpgL, AlgoId::Iddpg] {
        let cfg = small(algo);
        let trainer = Trainer::new(cfg.clone(), uneven.clone(), &mut rng).unwrap();
        let b = batch(&uneven, cfg.batch_size, cfg.seq_length, &mut rng);
        for a in 0..3 {
            let critic = online_part(a, "critic");
            finite_difference(&trainer, &critic, &|t| t.critic_loss(a, &b).unwrap(), 45, &mut rng, &mut stats);
            let actor = online_part(a, "actor");
            finite_difference(&trainer, &actor, &|t| t.actor_loss(a, &b).unwrap(), 45, &mut rng, &mut stats);
        }
    }
    for mixer in [MixerKind::Vdn, MixerKind::Monotonic, MixerKind::NonMonotonic] {
        for sharing in [CriticSharing::OwnCritics, CriticSharing::SimulateWithOwn] {
            let lay = if sharing == CriticSharing::OwnCritics { &uneven } else { &even };
            let cfg = AlgoConfig {
                mixer,
                sharing,
                ..small(AlgoId::Facmac)
            };
            let trainer = Trainer::new(cfg.clone(), lay.clone(), &mut rng).unwrap();
            let b = batch(lay, cfg.batch_size, 1, &mut rng);
            let owners = match sharing {
                CriticSharing::OwnCritics => vec![None],
                CriticSharing::SimulateWithOwn => vec![Some(0), Some(1), Some(2)],
            };
            for owner in owners {
                let critics = |n: &str| {
                    let critic = match owner {
                        None => n.contains(".critic."),
                        Some(a) => n.starts_with(&format!("agent{a}.critic.")),
                    };
                    critic || n.starts_with("mixer0.online")
                };
                finite_difference(
                    &trainer,
                    &critics,
                    &|t| t.facmac_critic_loss(0, &b, owner).unwrap(),
                    45,
                    &mut rng,
                    &mut stats,
                );
                let actors = |n: &str| n.contains(".actor.");
                finite_difference(
                    &trainer,
                    &actors,
                    &|t| t.facmac_actor_loss(0, &b, owner).unwrap(),
                    45,
                    &mut rng,
                    &mut stats,
                );
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        stats.worst <= 1e-4 && stats.probes >= 1000 && secs < 120.0,
        format!("max relative error {:.3e} over {} probes in {secs:.1} s", stats.worst, stats.probes),
    )
}

fn td_arithmetic() -> Outcome {
    let y = td_target(1.0, 2.0, 0.95, false);
    let terminal = td_target(1.0, 2.0, 0.95, true);
    outcome(
        (y - 2.9).abs() <= 1e-12 && terminal == 1.0,
        format!("y = {y}, terminal y = {terminal}"),
    )
}

fn mixer_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut vdn_exact = true;
    let mut min_partial = f64::INFINITY;
    let h = 1e-5;
    for i in 0..1000 {
        let n = 2 + i % 5;
        let state_len = 3 + i % 7;
        let state = Array2::from_shape_fn((1, state_len), |_| rng.random_range(-3.0..3.0));
        let qs = Array2::from_shape_fn((1, n), |_| rng.random_range(-10.0..10.0));
        let vdn = Mixer::new(MixerKind::Vdn, n, state_len, 8, &mut rng);
        let total = vdn.forward(&state, &qs).unwrap().0[[0, 0]];
        let mut sum = 0.0;
        for j in 0..n {
            sum += qs[[0, j]];
        }
        vdn_exact &= total == sum;

        let mono = Mixer::new(MixerKind::Monotonic, n, state_len, 8, &mut rng);
        for j in 0..n {
            let mut up = qs.clone();
            up[[0, j]] += h;
            let mut down = qs.clone();
            down[[0, j]] -= h;
            let d = (mono.forward(&state, &up).unwrap().0[[0, 0]] - mono.forward(&state, &down).unwrap().0[[0, 0]])
                / (2.0 * h);
            min_partial = min_partial.min(d);
        }
    }
    outcome(
        vdn_exact && min_partial >= -1e-9,
        format!("vdn exact over 1000 samples: {vdn_exact}; smallest monotonic partial {min_partial:.3e}"),
    )
}

fn single_agent_collapse() -> Outcome {
    let lay = layout(&[5], vec![vec![0]]);
    let algos = [AlgoId::Maddpg, AlgoId::MaddpgL, AlgoId::Iddpg, AlgoId::Facmac];
    let mut trainers: Vec<Trainer> = algos
        .iter()
        .map(|&algo| {
            let cfg = AlgoConfig {
                mixer: MixerKind::Vdn,
                ..small(algo)
            };
            Trainer::new(cfg, lay.clone(), &mut ChaCha8Rng::seed_from_u64(81)).unwrap()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let mut worst: f64 = 0.0;
    for step in 1..=100 {
        // With one agent the global state is its observation.
        let b = batch(&lay, 7, 1, &mut rng);
        assert_eq!(b.state, b.obs[0][0]);
        for t in &mut trainers {
            t.update(&b, step).unwrap();
        }
        let reference = trainers[0].flat_values();
        for t in &trainers[1..] {
            let v = t.flat_values();
            assert_eq!(v.len(), reference.len());
            worst = reference.iter().zip(&v).fold(worst, |w, (a, b)| w.max((a - b).abs()));
        }
    }
    outcome(worst <= 1e-10, format!("largest parameter gap {worst:.3e} after 100 updates"))
}

fn stamped(step: usize, episode: usize) -> Arc<Transition> {
    let v = (episode * 100_000 + step) as f64;
    Arc::new(Transition {
        state: vec![v],
        next_state: vec![v + 0.25],
        obs: vec![vec![v]],
        next_obs: vec![vec![v + 0.25]],
        actions: vec![Vec2::ZERO],
        rewards: vec![0.0],
        terminal: false,
        step_index: step,
        episode_index: episode,
    })
}

fn buffer_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut mismatches = 0usize;
    let mut crossings = 0usize;
    let mut eviction_errors = 0usize;
    for _ in 0..10_000 {
        let cap = rng.random_range(1..20);
        let mut ring = ReplayBuffer::new(cap);
        let mut queue: VecDeque<u64> = VecDeque::new();
        for _ in 0..rng.random_range(0..80) {
            let x: u64 = rng.random();
            ring.push(x);
            if queue.len() == cap {
                queue.pop_front();
            }
            queue.push_back(x);
            if ring.len() > cap || !ring.iter().eq(queue.iter()) {
                mismatches += 1;
            }
        }

        let len = rng.random_range(1..8);
        let mut window = SequenceWindow::new(len);
        let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
        let (mut episode, mut step) = (0, 0);
        for _ in 0..rng.random_range(0..80) {
            if rng.random_range(0..6) == 0 {
                window.reset();
                queue.clear();
                episode += 1;
                step = 0;
                continue;
            }
            window.push(stamped(step, episode));
            if queue.len() == len {
                queue.pop_front();
            }
            queue.push_back((step, episode));
            step += 1;
            let held: Vec<(usize, usize)> = window.transitions().map(|t| (t.step_index, t.episode_index)).collect();
            if !held.iter().eq(queue.iter()) {
                mismatches += 1;
            }
            // FIFO eviction: the window holds exactly the newest min(len, steps) transitions.
            if window.len() != len.min(step) || window.last().map(|t| t.step_index) != Some(step - 1) {
                eviction_errors += 1;
            }
            let foreign = |o: &&[f64]| (o[0] as usize) / 100_000 != episode;
            let current = [(episode * 100_000 + step) as f64];
            let views = [
                window.observation_window(0),
                window.next_observation_window(0),
                acting_window(&window, 0, &current),
            ];
            if held.iter().any(|&(_, e)| e != episode) || views.iter().any(|v| v.iter().any(foreign)) {
                crossings += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && crossings == 0 && eviction_errors == 0,
        format!("10000 programs: {mismatches} oracle mismatches, {crossings} reset crossings, {eviction_errors} eviction errors"),
    )
}

/// Brute-force reward of every actor.
fn brute_force_reward(sc: &Scenario, w: &WorldState) -> Vec<f64> {
    let of = |k: EntityKind| -> Vec<usize> { (0..sc.specs.len()).filter(|&i| sc.specs[i].kind == k).collect() };
    let (agents, preys, marks, obstacles) =
        (of(EntityKind::Agent), of(EntityKind::Adversary), of(EntityKind::Landmark), of(EntityKind::Obstacle));
    let d = |i: usize, j: usize| {
        let (a, b) = (w.positions[i], w.positions[j]);
        ((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)).sqrt()
    };
    let hit = |i: usize, j: usize| d(i, j) < sc.specs[i].radius + sc.specs[j].radius;
    let walls = matches!(sc.kind, ScenarioKind::Tunnel | ScenarioKind::SimpleTunnel);
    // Tunnel discs above and below the corridor form one wall each.
    let groups = |i: usize| -> f64 {
        let mut seen: Vec<i64> = Vec::new();
        for &o in &obstacles {
            let g = if walls { i64::from(w.positions[o].y > 0.0) } else { o as i64 };
            if hit(i, o) && !seen.contains(&g) {
                seen.push(g);
            }
        }
        seen.len() as f64
    };
    let nearest = |target: usize| agents.iter().map(|&a| d(a, target)).fold(f64::INFINITY, f64::min);
    let c = sc.reward_params.collision_penalty;
    let mut pair_events = 0.0;
    for (x, &a) in agents.iter().enumerate() {
        for &b in &agents[x + 1..] {
            if hit(a, b) {
                pair_events += 1.0;
            }
        }
    }
    let wall_events: f64 = agents.iter().map(|&a| groups(a)).sum();
    let edge = |v: f64| {
        let v = v.abs();
        if v < 0.9 {
            0.0
        } else if v < 1.0 {
            (v - 0.9) * 10.0
        } else {
            (2.0 * v - 2.0).exp().min(10.0)
        }
    };
    match sc.kind {
        ScenarioKind::Spread | ScenarioKind::Tunnel => {
            let cover: f64 = marks.iter().map(|&l| nearest(l)).sum();
            vec![-cover - c * (pair_events + wall_events); agents.len()]
        }
        ScenarioKind::SimpleTunnel => agents
            .iter()
            .map(|&a| {
                let others = agents.iter().filter(|&&b| b != a && hit(a, b)).count() as f64;
                -d(a, marks[a]) - c * (others + groups(a))
            })
            .collect(),
        ScenarioKind::ObstaclePredatorPrey => {
            let rp = sc.reward_params;
            let caught = |p: usize| agents.iter().filter(|&&a| hit(a, p)).count() as f64;
            let captures: f64 = preys.iter().map(|&p| caught(p)).sum();
            let chase: f64 = preys.iter().map(|&p| nearest(p)).sum();
            let mut out = vec![rp.capture_bonus * captures - rp.shaping * chase - c * (pair_events + wall_events); agents.len()];
            for &p in &preys {
                let q = w.positions[p];
                out.push(rp.shaping * nearest(p) - rp.capture_bonus * caught(p) - edge(q.x) - edge(q.y) - c * groups(p));
            }
            out
        }
    }
}

fn scatter(sc: &Scenario, rng: &mut ChaCha8Rng, e: usize) -> WorldState {
    let mut w = sc.reset(rng, e);
    let reach = [0.4, 0.8, 1.4][e % 3];
    let walls = matches!(sc.kind, ScenarioKind::Tunnel | ScenarioKind::SimpleTunnel);
    for i in 0..w.len() {
        if walls && sc.specs[i].kind == EntityKind::Obstacle {
            continue;
        }
        w.positions[i] = Vec2::new(rng.random_range(-reach..reach), rng.random_range(-reach..reach));
    }
    w
}

fn reward_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut summary = Vec::new();
    for id in ScenarioId::ALL {
        let sc = Scenario::new(id);
        let mut local: f64 = 0.0;
        for e in 0..1000 {
            let w = scatter(&sc, &mut rng, e);
            let got = sc.reward(&w, &vec![Vec2::ZERO; sc.n_actors()], &w);
            let want = brute_force_reward(&sc, &w);
            assert_eq!(got.len(), want.len(), "{id}");
            local = got.iter().zip(&want).fold(local, |m, (a, b)| m.max((a - b).abs()));
        }
        worst = worst.max(local);
        summary.push(format!("{id} {local:.1e}"));
    }
    outcome(worst <= 1e-12, format!("1000 worlds per scenario, max error: {}", summary.join(", ")))
}

fn config(pairs: &[(&str, &str)]) -> RunConfig {
    let pairs: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    RunConfig::resolve(&[], &pairs).unwrap()
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in ["first", "second"] {
        let mut cfg = config(&[
            ("scenario", "spread-3a"),
            ("scale", "desk"),
            ("algo", "maddpg-lstm"),
            ("time-steps", "1500"),
            ("Batch-size", "32"),
            ("eval-every", "500"),
            ("eval-episodes", "2"),
            ("seed", "11"),
        ]);
        cfg.out = Some(root.path().join(run));
        train(&cfg).unwrap();
        files.push(std::fs::read(root.path().join(run).join("metrics.csv")).unwrap());
    }
    outcome(
        files[0] == files[1] && !files[0].is_empty(),
        format!("metrics.csv {} bytes, identical: {}", files[0].len(), files[0] == files[1]),
    )
}

fn median_update_seconds(algo: AlgoId, lay: &AgentLayout) -> f64 {
    let cfg = AlgoConfig {
        batch_size: 32,
        ..AlgoConfig::new(algo)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = Trainer::new(cfg, lay.clone(), &mut rng).unwrap();
    let b = batch(lay, 32, 1, &mut rng);
    let mut times: Vec<f64> = (1..=21)
        .map(|step| {
            let t0 = Instant::now();
            t.update(&b, step).unwrap();
            t0.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[10]
}

fn dimension_law() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for id in [ScenarioId::Spread3a, ScenarioId::Spread6a, ScenarioId::Spread9a] {
        let sc = Scenario::new(id);
        let lay = AgentLayout::from_scenario(&sc);
        let n = sc.n_agents;
        let d_obs = sc.observation_len(0);
        ok &= lay.obs_lens.iter().all(|&d| d == d_obs);
        let (full, local) = (critic_input_len(AlgoId::Maddpg, &lay, 0), critic_input_len(AlgoId::MaddpgL, &lay, 0));
        ok &= full == n * d_obs + n * 2 && local == n * d_obs + 2;
        notes.push(format!("n={n}: {full} vs {local}"));
    }
    let lay = AgentLayout::from_scenario(&Scenario::new(ScenarioId::Spread9a));
    let full = median_update_seconds(AlgoId::Maddpg, &lay);
    let local = median_update_seconds(AlgoId::MaddpgL, &lay);
    outcome(
        ok && local < full,
        format!("{}; n=9 update {:.2} ms (maddpg-l) vs {:.2} ms (maddpg)", notes.join(", "), local * 1e3, full * 1e3),
    )
}

fn learning_sanity() -> Outcome {
    let seed = 1;
    let base = config(&[("scenario", "spread-3a"), ("scale", "desk"), ("seed", "1")]);
    let sc = Scenario::new(ScenarioId::Spread3a);
    let episodes = base.eval_episodes;

    // Random policy on the evaluation worlds, repeated with fresh action noise.
    let mut noise = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut random = 0.0;
    let reps = 20;
    for _ in 0..reps {
        let mut worlds = substream(seed, Stream::Eval);
        let r = rollout(&sc, episodes, 1, &mut worlds, |_, _, _| {
            Ok(Vec2::new(noise.random_range(-1.0..=1.0), noise.random_range(-1.0..=1.0)))
        })
        .unwrap();
        random += r.mean / reps as f64;
    }

    // Every agent parked on its own landmark for the whole episode.
    let mut worlds = substream(seed, Stream::Eval);
    let mut bound = 0.0;
    for e in 0..episodes {
        let mut w = sc.reset(&mut worlds, e);
        for a in 0..sc.n_agents {
            w.positions[a] = w.positions[sc.landmark(a)];
            w.velocities[a] = Vec2::ZERO;
        }
        let r = brute_force_reward(&sc, &w);
        bound += r[0] * sc.max_episode_len as f64 / episodes as f64;
    }
    let threshold = random + 0.3 * (bound - random);

    let mut passed = true;
    let mut notes = vec![format!("random {random:.1}, bound {bound:.1}, threshold {threshold:.1}")];
    for algo in ["maddpg", "maddpg-l"] {
        let started = Instant::now();
        let cfg = config(&[("scenario", "spread-3a"), ("scale", "desk"), ("seed", "1"), ("algo", algo)]);
        let summary = train(&cfg).unwrap();
        let tail: Vec<f64> = summary.rows.iter().rev().take(5).map(|r| r.mean_return).collect();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        passed &= tail.len() == 5 && mean > threshold;
        notes.push(format!("{algo} final-5 mean {mean:.1} ({:.0} s)", started.elapsed().as_secs_f64()));
    }
    outcome(passed, notes.join("; "))
}

fn mixer_bits(t: &Trainer) -> Vec<u64> {
    t.mixers.iter().flat_map(|m| m.flat_values()).map(f64::to_bits).collect()
}

fn staged_contract() -> Outcome {
    let w = 8;
    let lay = layout(&[6, 4, 5], vec![vec![0, 1, 2]]);
    let cfg = AlgoConfig {
        mixer: MixerKind::NonMonotonic,
        staged_watershed: Some(w),
        ..small(AlgoId::Facmac)
    };
    let mut t = Trainer::new(cfg, lay.clone(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frozen = mixer_bits(&t);
    let mut unchanged = true;
    for step in 1..w {
        t.update(&batch(&lay, 7, 1, &mut rng), step).unwrap();
        unchanged &= mixer_bits(&t) == frozen;
    }
    // Stage one leaves mixers alone while agents train on their own critics.
    let before = t.clone();
    let b = batch(&lay, 7, 1, &mut rng);
    t.update(&b, w).unwrap();
    let moved = mixer_bits(&t).iter().zip(&frozen).filter(|(a, b)| a != b).count();
    let mut per_agent = before.clone();
    let mut stats = Default::default();
    for a in 0..3 {
        per_agent.per_agent_update(a, &b, &mut stats).unwrap();
    }
    let switched = per_agent.agents[0].critic.flat_values() != t.agents[0].critic.flat_values();
    outcome(
        unchanged && moved > 0 && switched,
        format!("{} frozen updates bit-identical: {unchanged}; at the watershed {moved} mixer coordinates moved and critic updates left the per-agent path: {switched}", w - 1),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient fidelity", gradient_fidelity),
        ("td target arithmetic", td_arithmetic),
        ("mixer laws", mixer_laws),
        ("single-agent collapse", single_agent_collapse),
        ("buffer semantics", buffer_semantics),
        ("reward oracles", reward_oracles),
        ("determinism", determinism),
        ("critic dimension law", dimension_law),
        ("learning sanity", learning_sanity),
        ("staged facmac", staged_contract),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !only.is_empty() && !only.contains(&number) {
            continue;
        }
        let o = run();
        println!("{} {number:>2} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
