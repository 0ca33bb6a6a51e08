use coverage_nn::{param_count, sample_squashed, squashed_backward, Arch, ArchitectureSpec, Checkpoint, HeadKind, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(arch: Arch, head: HeadKind) -> ArchitectureSpec {
    ArchitectureSpec { arch, head, scales: 2, grid_size: 16, lidar_rays: 3, action_dim: 2, conv_channels: 4, map_features: 8, hidden: 8 }
}

fn random_obs(rng: &mut ChaCha8Rng, spec: &ArchitectureSpec, batch: usize) -> Vec<f64> {
    (0..batch * spec.obs_len()).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// Relative error with a small absolute floor for gradients that are zero up
/// to rounding.
fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let rel = (analytic - numeric).abs() / (analytic.abs() + 1e-8);
    assert!(rel < 1e-4 || (analytic - numeric).abs() < 1e-9, "{what}: analytic {analytic} numeric {numeric}");
}

fn weighted_output(net: &Network<f64>, obs: &[f64], act: Option<&[f64]>, batch: usize, c: &[f64]) -> f64 {
    net.predict(obs, act, batch).unwrap().iter().zip(c).map(|(y, c)| y * c).sum()
}

#[test]
fn full_network_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch = 2;
    let h = 1e-6;
    for arch in [Arch::Mlp, Arch::Cnn, Arch::Sgcnn] {
        for head in [HeadKind::Actor, HeadKind::Critic] {
            let mut spec = tiny(arch, head);
            if arch == Arch::Mlp {
                spec.grid_size = 4;
            }
            let mut net = Network::<f64>::new(spec, &mut rng).unwrap();
            assert!(net.param_count() <= 10_000, "{arch:?} {}", net.param_count());
            let obs = random_obs(&mut rng, &spec, batch);
            let act: Vec<f64> = (0..batch * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let act_ref = (head == HeadKind::Critic).then_some(act.as_slice());
            let c: Vec<f64> = (0..batch * spec.out_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cache = net.forward(&obs, act_ref, batch).unwrap();
            let mut grads = vec![0.0; net.param_count()];
            let d_act = net.backward(&cache, &c, &mut grads).unwrap();
            for i in 0..net.param_count() {
                let orig = net.params[i];
                net.params[i] = orig + h;
                let lp = weighted_output(&net, &obs, act_ref, batch, &c);
                net.params[i] = orig - h;
                let lm = weighted_output(&net, &obs, act_ref, batch, &c);
                net.params[i] = orig;
                assert_close(grads[i], (lp - lm) / (2.0 * h), &format!("{arch:?} {head:?} param {i}"));
            }
            if let Some(d_act) = d_act {
                for i in 0..act.len() {
                    let mut a = act.clone();
                    a[i] += h;
                    let lp = weighted_output(&net, &obs, Some(&a), batch, &c);
                    a[i] -= 2.0 * h;
                    let lm = weighted_output(&net, &obs, Some(&a), batch, &c);
                    assert_close(d_act[i], (lp - lm) / (2.0 * h), &format!("{arch:?} action {i}"));
                }
            }
        }
    }
}

#[test]
fn actor_head_with_squashing_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let spec = tiny(Arch::Sgcnn, HeadKind::Actor);
    let mut net = Network::<f64>::new(spec, &mut rng).unwrap();
    let batch = 3;
    let obs = random_obs(&mut rng, &spec, batch);
    let eps: Vec<f64> = (0..batch * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |net: &Network<f64>| {
        let out = net.predict(&obs, None, batch).unwrap();
        let s = sample_squashed(&out, &eps, batch, 2);
        s.log_prob.iter().sum::<f64>() * 0.2 - s.action.iter().map(|a| a * 0.7).sum::<f64>()
    };
    let cache = net.forward(&obs, None, batch).unwrap();
    let s = sample_squashed(cache.output(), &eps, batch, 2);
    let d_head = squashed_backward(&s, &vec![-0.7; batch * 2], &vec![0.2; batch]);
    let mut grads = vec![0.0; net.param_count()];
    net.backward(&cache, &d_head, &mut grads).unwrap();
    let h = 1e-6;
    for i in 0..net.param_count() {
        let orig = net.params[i];
        net.params[i] = orig + h;
        let lp = loss(&net);
        net.params[i] = orig - h;
        let lm = loss(&net);
        net.params[i] = orig;
        assert_close(grads[i], (lp - lm) / (2.0 * h), &format!("param {i}"));
    }
}

#[test]
fn gradient_is_linear_in_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let spec = tiny(Arch::Cnn, HeadKind::Critic);
    let net = Network::<f64>::new(spec, &mut rng).unwrap();
    let obs = random_obs(&mut rng, &spec, 2);
    let act = [0.3, -0.2, 0.9, 0.1];
    let cache = net.forward(&obs, Some(&act), 2).unwrap();
    let grad = |d: &[f64]| {
        let mut g = vec![0.0; net.param_count()];
        net.backward(&cache, d, &mut g).unwrap();
        g
    };
    let (l1, l2) = ([1.0, -0.5], [0.25, 2.0]);
    let (a, b) = (1.5, -0.75);
    let combined = grad(&[a * l1[0] + b * l2[0], a * l1[1] + b * l2[1]]);
    let (g1, g2) = (grad(&l1), grad(&l2));
    for i in 0..combined.len() {
        assert!((combined[i] - (a * g1[i] + b * g2[i])).abs() < 1e-10);
    }
    assert!(grad(&[0.0, 0.0]).iter().all(|g| *g == 0.0));
}

#[test]
fn scale_groups_are_convolved_independently() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let spec = ArchitectureSpec::standard(Arch::Sgcnn, HeadKind::Actor, 4, 32, 24);
    let net = Network::<f32>::new(spec, &mut rng).unwrap();
    let obs: Vec<f32> = (0..spec.obs_len()).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut perturbed = obs.clone();
    // scale-2 planes of all three map kinds
    let g2 = 32 * 32;
    for kind in 0..3 {
        let plane = kind * 4 + 1;
        for v in &mut perturbed[plane * g2..(plane + 1) * g2] {
            *v = 1.0 - *v;
        }
    }
    let a = net.forward(&obs, None, 1).unwrap();
    let b = net.forward(&perturbed, None, 1).unwrap();
    for layer in 0..4 {
        let (ga, gb) = (a.conv_group_output(&spec, layer, 0), b.conv_group_output(&spec, layer, 0));
        assert_eq!(ga.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), gb.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_ne!(a.conv_group_output(&spec, layer, 1), b.conv_group_output(&spec, layer, 1));
    }
}

#[test]
fn parameter_counts_match_reference_sizes() {
    let sg = param_count(&ArchitectureSpec::standard(Arch::Sgcnn, HeadKind::Actor, 4, 32, 24));
    let cnn = param_count(&ArchitectureSpec::standard(Arch::Cnn, HeadKind::Actor, 4, 32, 24));
    let mlp = param_count(&ArchitectureSpec::standard(Arch::Mlp, HeadKind::Actor, 4, 32, 24));
    assert_eq!(sg, 758_284);
    assert_eq!(mlp, 3_218_948);
    assert!((sg as f64 - 0.8e6).abs() <= 0.15 * 0.8e6);
    assert!((mlp as f64 - 3.2e6).abs() <= 0.15 * 3.2e6);
    assert!(cnn > sg && cnn < 2 * sg);
}

#[test]
fn independent_critics_disagree_and_stay_finite() {
    let spec = ArchitectureSpec::standard(Arch::Sgcnn, HeadKind::Critic, 4, 32, 24);
    let q1 = Network::<f32>::new(spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let q2 = Network::<f32>::new(spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let ones = vec![1.0f32; spec.obs_len()];
    for act in [[1.0f32, 1.0], [-1.0, -1.0], [1.0, -1.0]] {
        let a = q1.predict(&ones, Some(&act), 1).unwrap()[0];
        let b = q2.predict(&ones, Some(&act), 1).unwrap()[0];
        assert!(a.is_finite() && b.is_finite());
        assert_ne!(a, b);
    }
}

#[test]
fn zero_parameters_give_head_bias() {
    let spec = tiny(Arch::Sgcnn, HeadKind::Critic);
    let mut net = Network::<f64>::from_params(spec, vec![0.0; param_count(&spec)]).unwrap();
    let b = net.layout.head().bias_range();
    net.params[b.start] = 0.625;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let obs = random_obs(&mut rng, &spec, 1);
    assert_eq!(net.predict(&obs, Some(&[0.5, -0.5]), 1).unwrap(), vec![0.625]);
}

#[test]
fn fixed_seed_gives_identical_samples() {
    let spec = tiny(Arch::Sgcnn, HeadKind::Actor);
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Network::<f32>::new(spec, &mut rng).unwrap();
        let obs: Vec<f32> = (0..spec.obs_len()).map(|i| (i % 5) as f32 * 0.2).collect();
        let eps: Vec<f32> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        sample_squashed(&net.predict(&obs, None, 1).unwrap(), &eps, 1, 2).action
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("actor.ckpt");
    let spec = ArchitectureSpec::standard(Arch::Sgcnn, HeadKind::Actor, 4, 32, 24);
    let net = Network::<f32>::new(spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mut ck = Checkpoint::new(7);
    ck.add_network("actor", &net);
    ck.save(&path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len() as usize > 758_284 * 4, true);
    let loaded: Network<f32> = Checkpoint::load(&path).unwrap().network("actor").unwrap();
    assert_eq!(loaded, net);
}
