use std::sync::Arc;

use coverage_core::mapgen::{generate_random_map, random_start_pose, MapTask};
use coverage_core::mapping::Knowledge;
use coverage_core::rewards::total_variation;
use coverage_core::{Action, CoverageEnv, EnvConfig, EpisodeLog, ProfileKind, WorldMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_env(seed: u64, kind: ProfileKind, noise_level: u8) -> CoverageEnv {
    let task = if kind.is_exploration() { MapTask::Explore } else { MapTask::Mow };
    let map = generate_random_map(seed, task);
    let mut cfg = EnvConfig::for_profile(kind);
    cfg.noise_level = noise_level;
    cfg.tau = usize::MAX / 2;
    cfg.goal_coverage = 1.01;
    let start = random_start_pose(&map.world, cfg.profile.agent_radius, &mut ChaCha8Rng::seed_from_u64(seed));
    CoverageEnv::new(cfg, Arc::new(map.world), start, seed).unwrap()
}

/// Random actions that hold each command for a few steps, so the agent
/// actually travels and bumps into things.
fn actions(seed: u64, n: usize) -> Vec<Action> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = Action::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let hold = rng.random_range(1..12);
        out.extend(std::iter::repeat_n(a, hold));
    }
    out.truncate(n);
    out
}

#[test]
fn random_episodes_keep_their_invariants() {
    for seed in 0..8u64 {
        let kind = [ProfileKind::Mow, ProfileKind::ExploreOmni, ProfileKind::ExploreDir][seed as usize % 3];
        let mut env = random_env(seed, kind, 0);
        let profile = env.config().profile;
        let cell_area = env.world().spec.cell_area();
        let tv0 = env.tv_meters();
        let area0 = env.coverage().covered_area();
        let mut covered = env.coverage().covered_count();
        let mut new_cells = 0usize;
        let mut tv_reward = 0.0;
        for a in actions(seed, 600) {
            let out = env.step(a);
            let p = env.pose();
            assert!(!env.world().disk_collides(p.x, p.y, profile.agent_radius), "map {seed}: agent inside an obstacle");
            assert!(out.distance <= profile.v_max * profile.dt + 1e-9);
            assert!(out.reward.area >= 0.0);
            let r = out.reward;
            assert!((r.total - (r.area + r.tv_global + r.tv_incremental + r.collision + r.constant)).abs() <= 1e-12);
            let now = env.coverage().covered_count();
            assert!(now >= covered, "coverage shrank");
            covered = now;
            new_cells += (out.new_area / cell_area).round() as usize;
            tv_reward += r.tv_incremental;
        }
        // newly covered area adds up to the covered area
        assert_eq!(area0 / cell_area + new_cells as f64, env.coverage().covered_count() as f64);
        // the tracked boundary length is the recomputed one, and the
        // incremental reward telescopes
        assert!((env.tv_meters() - total_variation(env.coverage())).abs() < 1e-9);
        let lambda = env.config().rewards.lambda_tv_incremental;
        let expected = -lambda * (env.tv_meters() - tv0) / (2.0 * profile.v_max * profile.dt);
        assert!((tv_reward - expected).abs() < 1e-6, "map {seed}: {tv_reward} vs {expected}");
        // without noise the agent never maps an obstacle that is not there
        for (idx, k) in env.known().cells().iter().enumerate() {
            if *k == Knowledge::Obstacle {
                assert!(env.world().is_obstacle_index(idx), "map {seed}: phantom obstacle");
            }
        }
    }
}

#[test]
fn episodes_replay_exactly_under_noise() {
    for level in 1..=3u8 {
        let run = || {
            let mut env = random_env(21, ProfileKind::Mow, level);
            let mut log = EpisodeLog::start(&env, "m21", 21, "scripted");
            for a in actions(21, 300) {
                let out = env.step(a);
                log.push(a, &out);
            }
            (log, env.perceived_pose())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }
}

#[test]
fn logs_round_trip_through_files() {
    let mut env = random_env(4, ProfileKind::ExploreDir, 1);
    let mut log = EpisodeLog::start(&env, "m4", 4, "scripted");
    for a in actions(4, 200) {
        let out = env.step(a);
        log.push(a, &out);
    }
    let path = std::env::temp_dir().join(format!("coverage-core-log-{}.csv", std::process::id()));
    log.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let back = EpisodeLog::read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(back, log);
    assert_eq!(back.records.len(), 201);
    assert!((back.final_coverage() - env.stats().covered_fraction()).abs() < 1e-12);
}

#[test]
fn collision_costs_ten_and_a_tenth() {
    // agent pressed against the east wall of an empty room
    let world = Arc::new(WorldMap::empty_square(2.4, 0.0375));
    let mut cfg = EnvConfig::for_profile(ProfileKind::Mow);
    cfg.tau = usize::MAX / 2;
    let start = coverage_core::Pose::new(2.4 - 0.16, 1.2, 0.0);
    let mut env = CoverageEnv::new(cfg, world, start, 0).unwrap();
    // a few steps so the area ahead is covered already
    let mut last = None;
    for _ in 0..4 {
        last = Some(env.step(Action::new(1.0, 0.0)));
    }
    let out = last.unwrap();
    assert!(out.collided);
    assert_eq!(out.new_area, 0.0);
    assert_eq!(out.reward.total, -10.1);
}
