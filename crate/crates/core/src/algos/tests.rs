use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::gradcheck::{grad_check, GradCheckReport};

const TOL: f64 = 1e-4;

fn layout(obs: &[usize], teams: Vec<Vec<usize>>) -> AgentLayout {
    AgentLayout {
        obs_lens: obs.to_vec(),
        state_len: obs.iter().sum(),
        teams,
    }
}

fn cfg(algo: AlgoId) -> AlgoConfig {
    AlgoConfig {
        hidden: 8,
        mixer_embed: 6,
        grad_clip: None,
        batch_size: 5,
        ..AlgoConfig::new(algo)
    }
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-scale..scale))
}

/// Random batch whose global state is the concatenation of the observations.
fn batch(
    layout: &AgentLayout,
    size: usize,
    window: usize,
    shared_reward: bool,
    rng: &mut ChaCha8Rng,
) -> Batch {
    let n = layout.n_agents();
    let seq = |rng: &mut ChaCha8Rng, d| {
        (0..window)
            .map(|_| random(rng, size, d, 1.0))
            .collect::<Vec<_>>()
    };
    let obs: Vec<Vec<Array2<f64>>> = layout.obs_lens.iter().map(|&d| seq(rng, d)).collect();
    let next_obs: Vec<Vec<Array2<f64>>> = layout.obs_lens.iter().map(|&d| seq(rng, d)).collect();
    let cat =
        |o: &Vec<Vec<Array2<f64>>>| hcat(&o.iter().map(|w| w.last().unwrap()).collect::<Vec<_>>());
    let r0 = random(rng, size, 1, 1.0);
    Batch {
        size,
        state: cat(&obs),
        next_state: cat(&next_obs),
        actions: (0..n).map(|_| random(rng, size, 2, 1.0)).collect(),
        rewards: (0..n)
            .map(|_| {
                if shared_reward {
                    r0.clone()
                } else {
                    random(rng, size, 1, 1.0)
                }
            })
            .collect(),
        not_done: Array2::from_shape_fn((size, 1), |(r, _)| if r == 0 { 0.0 } else { 1.0 }),
        obs,
        next_obs,
    }
}

/// Finite-difference check of `loss` over the online parameters selected by
/// `include`. Gradients are read after one analytic evaluation on a fresh
/// zero-grad trainer.
fn check(
    trainer: &Trainer,
    include: impl Fn(&str) -> bool,
    loss: impl Fn(&mut Trainer) -> Result<f64>,
) -> GradCheckReport {
    let mut t = trainer.clone();
    t.zero_grad();
    loss(&mut t).unwrap();
    let names: Vec<String> = t.named("").into_iter().map(|(n, _, _)| n).collect();
    let base = t.flat_values();
    let grads = t.flat_grads();
    let mut idx = Vec::new();
    let mut offset = 0;
    let mut sizes = Vec::new();
    t.visit("", &mut |_, p| sizes.push(p.len()));
    for (name, size) in names.iter().zip(sizes) {
        if include(name) {
            idx.extend(offset..offset + size);
        }
        offset += size;
    }
    assert!(!idx.is_empty(), "no parameters selected");
    let x0: Vec<f64> = idx.iter().map(|&i| base[i]).collect();
    let g: Vec<f64> = idx.iter().map(|&i| grads[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    grad_check(
        |x| {
            let mut probe = trainer.clone();
            let mut full = base.clone();
            for (k, &i) in idx.iter().enumerate() {
                full[i] = x[k];
            }
            probe.set_flat_values(&full).unwrap();
            loss(&mut probe).unwrap()
        },
        &x0,
        &g,
        150,
        1e-6,
        &mut rng,
    )
}

fn online(prefix: &'static str, part: &'static str) -> impl Fn(&str) -> bool {
    move |n: &str| n.starts_with(prefix) && n.contains(part) && !n.contains("target")
}

fn digest(p: &impl Params) -> Vec<u64> {
    p.flat_values().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn td_target_examples() {
    assert!((td_target(1.0, 2.0, 0.95, false) - 2.9).abs() < 1e-12);
    assert_eq!(td_target(1.5, 7.0, 0.95, true), 1.5);
    assert_eq!(td_target(-0.25, 3.0, 0.0, false), -0.25);
}

#[test]
fn critic_input_dimensions() {
    for n in [1usize, 3, 6] {
        let l = layout(&vec![7; n], vec![(0..n).collect()]);
        assert_eq!(critic_input_len(AlgoId::Maddpg, &l, 0), n * 7 + n * 2);
        assert_eq!(critic_input_len(AlgoId::MaddpgLstm, &l, 0), n * 7 + n * 2);
        assert_eq!(critic_input_len(AlgoId::MaddpgL, &l, 0), n * 7 + 2);
        assert_eq!(critic_input_len(AlgoId::Iddpg, &l, 0), 9);
        assert_eq!(critic_input_len(AlgoId::Facmac, &l, 0), 9);
    }
}

#[test]
fn config_validation() {
    assert!(AlgoConfig {
        gamma: 1.0,
        ..cfg(AlgoId::Maddpg)
    }
    .validate()
    .is_err());
    assert!(AlgoConfig {
        seq_length: 0,
        ..cfg(AlgoId::MaddpgLstm)
    }
    .validate()
    .is_err());
    assert!(AlgoConfig {
        staged_watershed: Some(3),
        ..cfg(AlgoId::Maddpg)
    }
    .validate()
    .is_err());
    assert!("facmac".parse::<AlgoId>().is_ok());
    assert!("qmix-ddpg".parse::<AlgoId>().is_err());
    assert_eq!(
        "simulate".parse::<CriticSharing>().unwrap(),
        CriticSharing::SimulateWithOwn
    );
}

#[test]
fn targets_start_as_copies() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Trainer::new(
        cfg(AlgoId::Facmac),
        layout(&[3, 3], vec![vec![0, 1]]),
        &mut rng,
    )
    .unwrap();
    for net in &t.agents {
        assert_eq!(digest(&net.actor), digest(&net.target_actor));
        assert_eq!(digest(&net.critic), digest(&net.target_critic));
    }
    assert_eq!(digest(&t.mixers[0].online), digest(&t.mixers[0].target));
}

#[test]
fn single_agent_algorithms_coincide() {
    let l = layout(&[4], vec![vec![0]]);
    let algos = [
        AlgoId::Maddpg,
        AlgoId::MaddpgL,
        AlgoId::Iddpg,
        AlgoId::Facmac,
    ];
    let mut trainers: Vec<Trainer> = algos
        .iter()
        .map(|&a| {
            let c = AlgoConfig {
                mixer: MixerKind::Vdn,
                ..cfg(a)
            };
            Trainer::new(c, l.clone(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for step in 0..6 {
        let b = batch(&l, 5, 1, true, &mut rng);
        for t in &mut trainers {
            t.update(&b, step).unwrap();
        }
    }
    let reference = digest(&trainers[0].agents[0]);
    for (t, algo) in trainers.iter().zip(algos) {
        assert_eq!(digest(&t.agents[0]), reference, "{algo} diverged");
    }
}

#[test]
fn single_sample_critic_loss_by_hand() {
    let l = layout(&[3, 2], vec![vec![0, 1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut t = Trainer::new(cfg(AlgoId::Maddpg), l.clone(), &mut rng).unwrap();
    let b = batch(&l, 1, 1, false, &mut rng);
    let b = Batch {
        not_done: Array2::ones((1, 1)),
        ..b
    };
    let u0 = t.agents[0].target_actor.predict(&b.next_obs[0]).unwrap();
    let u1 = t.agents[1].target_actor.predict(&b.next_obs[1]).unwrap();
    let q_next = t.agents[0]
        .target_critic
        .predict(&hcat(&[&b.next_state, &u0, &u1]))
        .unwrap()[[0, 0]];
    let y = b.rewards[0][[0, 0]] + 0.95 * q_next;
    let q = t.agents[0]
        .critic
        .predict(&hcat(&[&b.state, &b.actions[0], &b.actions[1]]))
        .unwrap()[[0, 0]];
    let loss = t.critic_loss(0, &b).unwrap();
    assert!((loss - (y - q).powi(2)).abs() < 1e-12);
}

#[test]
fn exact_critic_has_zero_loss_and_stays_put() {
    let l = layout(&[2], vec![vec![0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = AlgoConfig {
        gamma: 0.0,
        ..cfg(AlgoId::Iddpg)
    };
    let mut t = Trainer::new(c, l.clone(), &mut rng).unwrap();
    let critic = &mut t.agents[0].critic;
    critic.layers.last_mut().unwrap().w.value.fill(0.0);
    critic.layers.last_mut().unwrap().b.value.fill(0.4);
    let b = batch(&l, 4, 1, true, &mut rng);
    let b = Batch {
        rewards: vec![Array2::from_elem((4, 1), 0.4)],
        ..b
    };
    let before = digest(&t.agents[0].critic);
    assert_eq!(t.critic_loss(0, &b).unwrap(), 0.0);
    t.step_critic(0).unwrap();
    assert_eq!(digest(&t.agents[0].critic), before);
}

#[test]
fn constant_critic_leaves_actor_unchanged() {
    let l = layout(&[3, 3], vec![vec![0, 1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut t = Trainer::new(cfg(AlgoId::Maddpg), l.clone(), &mut rng).unwrap();
    t.agents[0]
        .critic
        .layers
        .last_mut()
        .unwrap()
        .w
        .value
        .fill(0.0);
    let b = batch(&l, 5, 1, false, &mut rng);
    let before = digest(&t.agents[0].actor);
    t.actor_loss(0, &b).unwrap();
    assert!(t.agents[0].actor.flat_grads().iter().all(|g| *g == 0.0));
    t.step_actor(0).unwrap();
    assert_eq!(digest(&t.agents[0].actor), before);
}

#[test]
fn linear_probe_critic_pushes_action_up() {
    let l = layout(&[3, 3], vec![vec![0, 1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for algo in [AlgoId::Maddpg, AlgoId::MaddpgL, AlgoId::Iddpg] {
        let mut t = Trainer::new(cfg(algo), l.clone(), &mut rng).unwrap();
        let col = t.own_action_offset(1);
        // Q = u_1[0] + 2: one positive path through unit 0 of each layer.
        let critic = &mut t.agents[1].critic;
        for layer in &mut critic.layers {
            layer.w.value.fill(0.0);
            layer.b.value.fill(0.0);
        }
        critic.layers[0].w.value[[col, 0]] = 1.0;
        critic.layers[0].b.value[[0, 0]] = 2.0;
        critic.layers[1].w.value[[0, 0]] = 1.0;
        critic.layers[2].w.value[[0, 0]] = 1.0;
        let b = batch(&l, 16, 1, false, &mut rng);
        let mean_u = |t: &Trainer| {
            t.agents[1]
                .actor
                .predict(&b.obs[1])
                .unwrap()
                .column(0)
                .mean()
                .unwrap()
        };
        let before = mean_u(&t);
        let c = AlgoConfig {
            lr_actor: 1e-2,
            ..t.cfg.clone()
        };
        t.cfg = c;
        for _ in 0..5 {
            t.actor_loss(1, &b).unwrap();
            t.step_actor(1).unwrap();
        }
        assert!(mean_u(&t) > before, "{algo}");
    }
}

#[test]
fn per_agent_gradients_match_finite_differences() {
    let l = layout(&[3, 4, 2], vec![vec![0, 1, 2]]);
    for algo in [AlgoId::Iddpg, AlgoId::Maddpg, AlgoId::MaddpgL] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = Trainer::new(cfg(algo), l.clone(), &mut rng).unwrap();
        let b = batch(&l, 6, 1, false, &mut rng);
        for a in 0..3 {
            let pre: &'static str = ["agent0", "agent1", "agent2"][a];
            let r = check(&t, online(pre, "critic"), |t| t.critic_loss(a, &b));
            assert!(r.max_rel_error < TOL, "{algo} critic {a}: {r:?}");
            let r = check(&t, online(pre, "actor"), |t| t.actor_loss(a, &b));
            assert!(r.max_rel_error < TOL, "{algo} actor {a}: {r:?}");
        }
    }
}

#[test]
fn lstm_unroll_gradients_match_finite_differences() {
    let l = layout(&[3, 2], vec![vec![0, 1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let c = AlgoConfig {
        seq_length: 4,
        ..cfg(AlgoId::MaddpgLstm)
    };
    let t = Trainer::new(c, l.clone(), &mut rng).unwrap();
    assert!(t.agents[0].actor.is_recurrent());
    let b = batch(&l, 5, 4, false, &mut rng);
    for a in 0..2 {
        let pre: &'static str = ["agent0", "agent1"][a];
        let r = check(&t, online(pre, "actor"), |t| t.actor_loss(a, &b));
        assert!(r.max_rel_error < TOL, "actor {a}: {r:?}");
        let r = check(&t, online(pre, "critic"), |t| t.critic_loss(a, &b));
        assert!(r.max_rel_error < TOL, "critic {a}: {r:?}");
    }
}

#[test]
fn unit_window_lstm_matches_maddpg_with_lstm_actor() {
    let l = layout(&[3, 2], vec![vec![0, 1]]);
    let mut lstm = Trainer::new(
        cfg(AlgoId::MaddpgLstm),
        l.clone(),
        &mut ChaCha8Rng::seed_from_u64(13),
    )
    .unwrap();
    let mut dense = Trainer::new(
        cfg(AlgoId::Maddpg),
        l.clone(),
        &mut ChaCha8Rng::seed_from_u64(13),
    )
    .unwrap();
    for (d, s) in dense.agents.iter_mut().zip(&lstm.agents) {
        *d = s.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for step in 0..4 {
        let b = batch(&l, 5, 1, false, &mut rng);
        lstm.update(&b, step).unwrap();
        dense.update(&b, step).unwrap();
    }
    assert_eq!(digest(&lstm), digest(&dense));
}

#[test]
fn mixed_gradients_match_finite_differences() {
    let cases = [
        (
            layout(&[3, 4, 2], vec![vec![0, 1, 2]]),
            CriticSharing::OwnCritics,
            None,
        ),
        (
            layout(&[3, 3, 3], vec![vec![0, 1, 2]]),
            CriticSharing::SimulateWithOwn,
            Some(1),
        ),
    ];
    for mixer in [
        MixerKind::NonMonotonic,
        MixerKind::Monotonic,
        MixerKind::Vdn,
    ] {
        for (l, sharing, owner) in &cases {
            let (l, owner) = (l.clone(), *owner);
            let mut rng = ChaCha8Rng::seed_from_u64(15);
            let t = Trainer::new(
                AlgoConfig {
                    mixer,
                    sharing: *sharing,
                    ..cfg(AlgoId::Facmac)
                },
                l.clone(),
                &mut rng,
            )
            .unwrap();
            let b = batch(&l, 6, 1, true, &mut rng);
            let critics = |n: &str| {
                !n.contains("target") && (n.contains("critic") || n.starts_with("mixer0.online"))
            };
            let r = check(&t, critics, |t| t.facmac_critic_loss(0, &b, owner));
            assert!(r.max_rel_error < TOL, "{mixer:?} {owner:?} critic: {r:?}");
            let actors = |n: &str| !n.contains("target") && n.contains(".actor.");
            let r = check(&t, actors, |t| t.facmac_actor_loss(0, &b, owner));
            assert!(r.max_rel_error < TOL, "{mixer:?} {owner:?} actor: {r:?}");
        }
    }
}

#[test]
fn sharing_modes_agree_only_for_identical_critics() {
    let l = layout(&[3, 3], vec![vec![0, 1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut t = Trainer::new(cfg(AlgoId::Facmac), l.clone(), &mut rng).unwrap();
    let b = batch(&l, 4, 1, true, &mut rng);
    let own = t.team_value(0, &b, None).unwrap();
    let simulated = t.team_value(0, &b, Some(0)).unwrap();
    assert_ne!(own, simulated);
    t.agents[1].critic = t.agents[0].critic.clone();
    assert_eq!(
        t.team_value(0, &b, None).unwrap(),
        t.team_value(0, &b, Some(0)).unwrap()
    );
}

#[test]
fn staged_schedule_freezes_then_releases_mixer() {
    let l = layout(&[3, 3], vec![vec![0, 1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let c = AlgoConfig {
        staged_watershed: Some(10),
        ..cfg(AlgoId::Facmac)
    };
    let mut t = Trainer::new(c, l.clone(), &mut rng).unwrap();
    let b = batch(&l, 5, 1, true, &mut rng);
    let (online0, target0) = (digest(&t.mixers[0].online), digest(&t.mixers[0].target));
    let critic0 = digest(&t.agents[0].critic);
    t.update(&b, 9).unwrap();
    assert_eq!(digest(&t.mixers[0].online), online0);
    assert_eq!(digest(&t.mixers[0].target), target0);
    assert_ne!(digest(&t.agents[0].critic), critic0);
    t.update(&b, 10).unwrap();
    assert_ne!(digest(&t.mixers[0].online), online0);
    assert_ne!(digest(&t.mixers[0].target), target0);
}

#[test]
fn stage_one_actor_gradient_matches_finite_differences() {
    let l = layout(&[3, 3], vec![vec![0, 1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let c = AlgoConfig {
        staged_watershed: Some(100),
        ..cfg(AlgoId::Facmac)
    };
    let t = Trainer::new(c, l.clone(), &mut rng).unwrap();
    let b = batch(&l, 5, 1, true, &mut rng);
    let r = check(&t, online("agent1", "actor"), |t| t.actor_loss(1, &b));
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn updates_touch_only_referenced_parameters() {
    let l = layout(&[3, 3, 3], vec![vec![0, 1, 2]]);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut t = Trainer::new(cfg(AlgoId::Maddpg), l.clone(), &mut rng).unwrap();
    let b = batch(&l, 5, 1, false, &mut rng);
    let before: Vec<Vec<u64>> = t.agents.iter().map(digest).collect();
    let mut stats = UpdateStats::default();
    t.per_agent_update(1, &b, &mut stats).unwrap();
    let net = &t.agents[1];
    assert_ne!(digest(&net.actor), digest(&net.target_actor));
    assert_ne!(digest(&net.critic), digest(&net.target_critic));
    assert_eq!(digest(&t.agents[0]), before[0]);
    assert_eq!(digest(&t.agents[2]), before[2]);
    let targets = |n: &AgentNets| (digest(&n.target_actor), digest(&n.target_critic));
    let fresh = Trainer::new(cfg(AlgoId::Maddpg), l, &mut ChaCha8Rng::seed_from_u64(19)).unwrap();
    assert_eq!(targets(&fresh.agents[1]), targets(net));
}

#[test]
fn simulate_mode_needs_matching_critics() {
    let l = layout(&[3, 4], vec![vec![0, 1]]);
    let c = AlgoConfig {
        sharing: CriticSharing::SimulateWithOwn,
        ..cfg(AlgoId::Facmac)
    };
    assert!(Trainer::new(c, l, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn simulate_mode_trains() {
    let l = layout(&[3, 3], vec![vec![0, 1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let c = AlgoConfig {
        sharing: CriticSharing::SimulateWithOwn,
        ..cfg(AlgoId::Facmac)
    };
    let mut t = Trainer::new(c, l.clone(), &mut rng).unwrap();
    let b = batch(&l, 4, 1, true, &mut rng);
    let stats = t.update(&b, 0).unwrap();
    assert_eq!(stats.critic_loss.len(), 2);
}

#[test]
fn facmac_rejects_unequal_team_rewards() {
    let l = layout(&[3, 3], vec![vec![0, 1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut t = Trainer::new(cfg(AlgoId::Facmac), l.clone(), &mut rng).unwrap();
    let b = batch(&l, 4, 1, false, &mut rng);
    assert!(matches!(t.update(&b, 0), Err(Error::Unsupported(_))));
    let solo = layout(&[3, 3], vec![vec![0], vec![1]]);
    assert!(matches!(
        Trainer::new(cfg(AlgoId::Facmac), solo, &mut rng),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn shape_mismatch_is_reported() {
    let l = layout(&[3, 3], vec![vec![0, 1]]);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut t = Trainer::new(cfg(AlgoId::Maddpg), l, &mut rng).unwrap();
    let other = layout(&[3, 4], vec![vec![0, 1]]);
    let b = batch(&other, 4, 1, false, &mut rng);
    assert!(matches!(t.critic_loss(0, &b), Err(Error::Shape(_))));
}

#[test]
fn predator_prey_teams_train_separately() {
    let scenario = crate::Scenario::new(crate::ScenarioId::ObstaclePredatorPrey);
    let l = AgentLayout::from_scenario(&scenario);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut t = Trainer::new(cfg(AlgoId::Facmac), l.clone(), &mut rng).unwrap();
    assert_eq!(t.mixers.len(), 2);
    let mut b = batch(&l, 4, 1, true, &mut rng);
    b.rewards[3] = random(&mut rng, 4, 1, 1.0);
    let stats = t.update(&b, 0).unwrap();
    assert_eq!(stats.critic_loss.len(), 2);
}
