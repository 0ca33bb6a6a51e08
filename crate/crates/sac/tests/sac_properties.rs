use coverage_core::obs::EncoderConfig;
use coverage_core::ProfileKind;
use coverage_nn::{param_count, Arch, ArchitectureSpec, HeadKind, Network};
use coverage_sac::{actor_loss_grad, critic_loss_grad, critic_targets, gaussian_noise, Batch, MapSource, NetworkConfig, SacAgent, SacConfig, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_spec() -> ArchitectureSpec {
    ArchitectureSpec { arch: Arch::Sgcnn, head: HeadKind::Actor, scales: 2, grid_size: 14, lidar_rays: 3, action_dim: 2, conv_channels: 4, map_features: 8, hidden: 8 }
}

fn random_batch(rng: &mut ChaCha8Rng, spec: &ArchitectureSpec, n: usize) -> Batch<f64> {
    let len = spec.obs_len();
    Batch {
        size: n,
        obs: (0..n * len).map(|_| rng.random_range(0.0..1.0)).collect(),
        action: (0..n * 2).map(|_| rng.random_range(-0.95..0.95)).collect(),
        reward: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        next_obs: (0..n * len).map(|_| rng.random_range(0.0..1.0)).collect(),
        done: (0..n).map(|b| (b % 2) as f64).collect(),
    }
}

fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let rel = (analytic - numeric).abs() / (analytic.abs() + 1e-8);
    assert!(rel < 1e-4 || (analytic - numeric).abs() < 1e-9, "{what}: analytic {analytic} numeric {numeric}");
}

#[test]
fn actor_and_critic_losses_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = tiny_spec();
    let critic_spec = spec.with_head(HeadKind::Critic);
    assert!(param_count(&spec) <= 10_000 && param_count(&critic_spec) <= 10_000);
    let mut actor = Network::<f64>::new(spec, &mut rng).unwrap();
    let mut q1 = Network::<f64>::new(critic_spec, &mut rng).unwrap();
    let q2 = Network::<f64>::new(critic_spec, &mut rng).unwrap();
    let n = 3;
    let b = random_batch(&mut rng, &spec, n);
    let eps = gaussian_noise::<f64>(&mut rng, n * 2);
    let alpha = 0.3;
    let h = 1e-6;

    let out = actor_loss_grad(&actor, [&q1, &q2], &b.obs, &eps, alpha, n).unwrap();
    for i in 0..actor.param_count() {
        let orig = actor.params[i];
        actor.params[i] = orig + h;
        let lp = actor_loss_grad(&actor, [&q1, &q2], &b.obs, &eps, alpha, n).unwrap().loss;
        actor.params[i] = orig - h;
        let lm = actor_loss_grad(&actor, [&q1, &q2], &b.obs, &eps, alpha, n).unwrap().loss;
        actor.params[i] = orig;
        assert_close(out.grads[i], (lp - lm) / (2.0 * h), &format!("actor param {i}"));
    }

    let y = critic_targets(&actor, [&q1, &q2], &b, &eps, alpha, 0.99).unwrap();
    let (_, grads) = critic_loss_grad(&q1, &b.obs, &b.action, &y, n).unwrap();
    for i in 0..q1.param_count() {
        let orig = q1.params[i];
        q1.params[i] = orig + h;
        let lp = critic_loss_grad(&q1, &b.obs, &b.action, &y, n).unwrap().0;
        q1.params[i] = orig - h;
        let lm = critic_loss_grad(&q1, &b.obs, &b.action, &y, n).unwrap().0;
        q1.params[i] = orig;
        assert_close(grads[i], (lp - lm) / (2.0 * h), &format!("critic param {i}"));
    }
}

/// Critic with Q(s, a) = w·a + c, built from zero parameters plus a linear
/// action path through the fusion layers (ReLU active for positive inputs).
#[test]
fn bellman_target_matches_hand_computation() {
    let spec = ArchitectureSpec { arch: Arch::Mlp, head: HeadKind::Critic, scales: 1, grid_size: 1, lidar_rays: 0, action_dim: 2, conv_channels: 0, map_features: 0, hidden: 1 };
    let lay = coverage_nn::Layout::new(&spec);
    let make = |w: f64, c: f64| {
        let mut p = vec![0.0; lay.total];
        // fusion input is [map(3), action(2)]; hidden unit = relu(a0 + 1)
        let f0 = lay.fusion[0];
        p[f0.weight_range().start + 3] = 1.0;
        p[f0.bias_range().start] = 1.0;
        let f1 = lay.fusion[1];
        p[f1.weight_range().start] = 1.0;
        let head = lay.fusion[2];
        p[head.weight_range().start] = w;
        p[head.bias_range().start] = c - w;
        Network::<f64>::from_params(spec, p).unwrap()
    };
    // Q1 = 2(a0 + 1) − 2 + 0.5 = 2a0 + 0.5, Q2 = a0 + 1.0
    let (t1, t2) = (make(2.0, 0.5), make(1.0, 1.0));
    let actor_spec = spec.with_head(HeadKind::Actor);
    let al = coverage_nn::Layout::new(&actor_spec);
    let mut ap = vec![0.0; al.total];
    let head = al.fusion[2];
    // mean0 = 0.2, mean1 = 0, log_std = ln 0.5 for both
    ap[head.bias_range().start] = 0.2;
    ap[head.bias_range().start + 2] = 0.5f64.ln();
    ap[head.bias_range().start + 3] = 0.5f64.ln();
    let actor = Network::<f64>::from_params(actor_spec, ap).unwrap();
    let batch = Batch { size: 2, obs: vec![0.0; 6], action: vec![0.0; 4], reward: vec![1.0, -0.5], next_obs: vec![0.3; 6], done: vec![0.0, 1.0] };
    let eps = [0.4, -1.0, 0.0, 0.0];
    let y = critic_targets(&actor, [&t1, &t2], &batch, &eps, 0.1, 0.9).unwrap();
    // sample 0 by hand
    let u0 = 0.2 + 0.5 * 0.4;
    let u1 = 0.0 + 0.5 * -1.0;
    let (a0, a1) = (f64::tanh(u0), f64::tanh(u1));
    let gauss = |e: f64| -0.5 * e * e - 0.5f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let logp = gauss(0.4) + gauss(-1.0) - (1.0 - a0 * a0 + 1e-6).ln() - (1.0 - a1 * a1 + 1e-6).ln();
    let q_min = (2.0 * a0 + 0.5).min(a0 + 1.0);
    let want0 = 1.0 + 0.9 * (q_min - 0.1 * logp);
    assert!((y[0] - want0).abs() < 1e-6, "{} vs {want0}", y[0]);
    assert_eq!(y[1], -0.5);
}

#[test]
fn losses_decrease_on_a_fixed_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = tiny_spec();
    let mut agent = SacAgent::<f64>::new(spec, SacConfig { lr: 3e-3, ..Default::default() }, 4).unwrap();
    let b = random_batch(&mut rng, &spec, 16);
    let eps = gaussian_noise::<f64>(&mut rng, 32);
    let actor_loss = |a: &SacAgent<f64>| actor_loss_grad(&a.actor, [&a.critics[0], &a.critics[1]], &b.obs, &eps, a.alpha(), 16).unwrap().loss;
    let y = critic_targets(&agent.actor, [&agent.targets[0], &agent.targets[1]], &b, &eps, 1.0, 0.99).unwrap();
    let critic_loss = |a: &SacAgent<f64>| critic_loss_grad(&a.critics[0], &b.obs, &b.action, &y, 16).unwrap().0;
    let (a0, c0) = (actor_loss(&agent), critic_loss(&agent));
    let mut frozen = agent.clone();
    for _ in 0..100 {
        agent.actor_update(&b).unwrap().unwrap();
    }
    assert!(actor_loss(&agent) < a0, "actor loss {a0} -> {}", actor_loss(&agent));
    // critic regression toward fixed targets
    let mut opt = coverage_nn::Adam::<f64>::new(frozen.critics[0].param_count());
    for _ in 0..100 {
        let (_, g) = critic_loss_grad(&frozen.critics[0], &b.obs, &b.action, &y, 16).unwrap();
        opt.update(&mut frozen.critics[0].params, &g, 3e-3);
    }
    assert!(critic_loss(&frozen) < 0.5 * c0, "critic loss {c0} -> {}", critic_loss(&frozen));
}

#[test]
fn fuzzed_updates_keep_parameters_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = ArchitectureSpec { arch: Arch::Mlp, head: HeadKind::Actor, scales: 1, grid_size: 2, lidar_rays: 2, action_dim: 2, conv_channels: 0, map_features: 0, hidden: 8 };
    let mut agent = SacAgent::<f32>::new(spec, SacConfig { lr: 1e-3, batch_size: 4, ..Default::default() }, 7).unwrap();
    let len = spec.obs_len();
    for k in 0..10_000 {
        let scale = if k % 100 == 0 { 1e6 } else { 10.0 };
        let b = Batch::<f32> {
            size: 4,
            obs: (0..4 * len).map(|_| rng.random_range(0.0..1.0)).collect(),
            action: (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: (0..4).map(|_| rng.random_range(-scale..scale)).collect(),
            next_obs: (0..4 * len).map(|_| rng.random_range(0.0..1.0)).collect(),
            done: (0..4).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect(),
        };
        let stats = agent.update(&b).unwrap();
        assert!(stats.alpha.is_finite() && stats.alpha > 0.0);
    }
    for net in [&agent.actor, &agent.critics[0], &agent.critics[1], &agent.targets[0], &agent.targets[1]] {
        assert!(net.params.iter().all(|p| p.is_finite()));
    }
    assert!(agent.log_alpha.is_finite());
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        profile: ProfileKind::Mow,
        seed,
        total_steps: 1000,
        sac: SacConfig { lr: 3e-4, batch_size: 8, warmup_steps: 200, buffer_capacity: 600, ..Default::default() },
        network: NetworkConfig { arch: Arch::Sgcnn, conv_channels: 4, map_features: 16, hidden: 16 },
        encoder: EncoderConfig { scales: 2, grid_size: 14, ..Default::default() },
        noise_level: 1,
        maps: MapSource::EmptySquare { side: 1.2 },
        goal_coverage: 0.5,
        tau: 30,
        max_episode_steps: Some(120),
        checkpoint_every: None,
        ..Default::default()
    }
}

#[test]
fn seeded_runs_are_identical_and_buffer_is_bounded() {
    let run = || {
        let mut t = Trainer::new(small_config(9)).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        let eps = t.run(1000, Some(&mut w), None).unwrap();
        assert!(t.buffer().len() <= 600);
        assert_eq!(t.buffer().len(), 600);
        (String::from_utf8(w.into_inner().unwrap()).unwrap(), eps.len())
    };
    let (a, n) = run();
    let (b, _) = run();
    assert!(n >= 5, "only {n} episodes");
    assert_eq!(a, b);
    assert!(a.starts_with("step,episode,return,coverage,level,alpha,critic_loss,actor_loss,entropy,length,reached_goal,map"));
}

#[test]
fn goal_stores_done_and_truncation_bootstraps() {
    let mut cfg = small_config(4);
    cfg.sac.warmup_steps = 100_000;
    cfg.sac.buffer_capacity = 100_000;
    let mut t = Trainer::new(cfg).unwrap();
    let (mut goals, mut truncations) = (0, 0);
    for _ in 0..3000 {
        let before = t.buffer().len();
        let end = t.step().unwrap();
        let last = t.buffer().get(before);
        match end {
            Some(s) if s.reached_goal => {
                assert!(last.done);
                goals += 1;
            }
            Some(_) => {
                assert!(!last.done);
                truncations += 1;
            }
            None => assert!(!last.done),
        }
    }
    assert!(goals > 0 && truncations > 0, "goals {goals} truncations {truncations}");
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.json");
    let cfg = small_config(1);
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    assert_eq!(TrainConfig::load(&path).unwrap(), cfg);
}

#[test]
fn checkpoints_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(2);
    cfg.total_steps = 300;
    cfg.checkpoint_every = Some(150);
    let metrics = dir.path().join("metrics.csv");
    coverage_sac::train(cfg, &metrics, dir.path()).unwrap();
    assert!(dir.path().join("step-000000150.ckpt").exists());
    let ck = coverage_nn::Checkpoint::load(&coverage_sac::final_checkpoint(dir.path())).unwrap();
    assert_eq!(ck.step, 300);
    assert!(ck.network::<f32>("actor").is_ok());
}
