use std::sync::Arc;

use coverage_baselines::{bsa_plan, cell_side, expand_order, run_planner, OfflineGraph, PlannerKind};
use coverage_core::mapgen::{generate_random_map, random_start_pose, MapTask};
use coverage_core::{CoverageEnv, EnvConfig, Pose, ProfileKind, TaskProfile, WorldMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RES: f64 = 0.0375;

/// Runs to completion: no goal or stale-step cutoff.
fn env(kind: ProfileKind, world: Arc<WorldMap>, start: Pose) -> CoverageEnv {
    let mut cfg = EnvConfig::for_profile(kind);
    cfg.goal_coverage = 1.01;
    cfg.tau = usize::MAX / 2;
    CoverageEnv::new(cfg, world, start, 1).unwrap()
}

fn empty(side: f64) -> (Arc<WorldMap>, Pose) {
    (Arc::new(WorldMap::empty_square(side, RES)), Pose::new(side / 2.0, side / 2.0, 0.0))
}

#[test]
fn offline_plans_visit_every_reachable_cell_on_generated_maps() {
    for seed in 0..50u64 {
        let (task, kind) = if seed % 2 == 0 { (MapTask::Mow, ProfileKind::Mow) } else { (MapTask::Explore, ProfileKind::ExploreOmni) };
        let profile = TaskProfile::for_kind(kind);
        let map = generate_random_map(seed, task);
        let start = random_start_pose(&map.world, profile.agent_radius, &mut ChaCha8Rng::seed_from_u64(seed));
        let og = OfflineGraph::build(&map.world, &profile, start.x, start.y).unwrap();
        let reachable = og.reachable_count();
        assert!(reachable > 0);

        let bsa = bsa_plan(&og.graph, og.start);
        let mut seen = vec![false; og.graph.len()];
        bsa.sequence.iter().for_each(|n| seen[*n] = true);
        assert_eq!(seen, og.reachable, "bsa on map {seed}");

        let order = og.tsp_order();
        assert_eq!(order.len(), reachable, "tsp on map {seed}");
        let mut seen = vec![false; og.graph.len()];
        order.iter().for_each(|n| seen[*n] = true);
        assert_eq!(seen, og.reachable, "tsp on map {seed}");

        for seq in [&bsa.sequence, &expand_order(&og.graph, &order)] {
            for w in seq.windows(2) {
                let (a, b) = (og.graph.nodes[w[0]].cell, og.graph.nodes[w[1]].cell);
                assert!(a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1 && a != b, "map {seed}: jump {a:?} -> {b:?}");
            }
        }
    }
}

#[test]
fn executed_plans_cover_empty_maps() {
    for side in [2.4, 3.6] {
        let (world, start) = empty(side);
        for kind in PlannerKind::ALL {
            let mut e = env(ProfileKind::Mow, world.clone(), start);
            let run = run_planner(kind, &mut e, "empty", 0, None).unwrap();
            let cov = e.stats().covered_fraction();
            assert!(cov >= 0.99, "{} on {side} m: coverage {cov}", kind.name());
            // the log opens with the step-0 state
            assert_eq!(run.log.records.len(), e.steps() + 1);
            assert!((run.log.final_coverage() - cov).abs() < 1e-12);
            assert_eq!(run.blocked_legs, 0, "{} on {side} m", kind.name());
            if kind != PlannerKind::Frontier {
                assert_eq!(run.visited_nodes, run.reachable_nodes, "{} on {side} m: {run:?}", kind.name());
            }
        }
    }
}

#[test]
fn offline_tour_length_is_close_to_the_sweep_bound() {
    let profile = TaskProfile::mow();
    for side in [2.4, 3.6, 4.8] {
        let (world, start) = empty(side);
        let mut e = env(ProfileKind::Mow, world, start);
        let run = run_planner(PlannerKind::TspOffline, &mut e, "empty", 0, None).unwrap();
        let bound = run.reachable_nodes as f64 * cell_side(&profile);
        assert!(run.planned_length <= 1.35 * bound, "{side} m: {} vs bound {bound}", run.planned_length);
    }
}

#[test]
fn online_tour_is_not_shorter_than_offline() {
    for side in [2.4, 3.6] {
        let (world, start) = empty(side);
        let mut off = env(ProfileKind::Mow, world.clone(), start);
        let offline = run_planner(PlannerKind::TspOffline, &mut off, "empty", 0, None).unwrap();
        let mut on = env(ProfileKind::Mow, world, start);
        let online = run_planner(PlannerKind::TspOnline, &mut on, "empty", 0, None).unwrap();
        assert!(online.planned_length >= offline.planned_length, "{side} m: online {} offline {}", online.planned_length, offline.planned_length);
        assert!(online.replans >= 1);
    }
}

#[test]
fn sealed_annex_is_left_out() {
    let mut w = WorldMap::empty_square(3.0, RES);
    w.fill_rect(2.0, -0.1, 2.15, 3.1, true);
    let world = Arc::new(w);
    let start = Pose::new(1.0, 1.5, 0.0);
    for kind in [PlannerKind::Bsa, PlannerKind::TspOffline, PlannerKind::TspOnline] {
        let mut e = env(ProfileKind::Mow, world.clone(), start);
        let run = run_planner(kind, &mut e, "annex", 0, None).unwrap();
        assert!(e.stats().covered_fraction() >= 0.99, "{}: {}", kind.name(), e.stats().covered_fraction());
        assert_eq!(run.visited_nodes, run.reachable_nodes, "{}", kind.name());
        // nothing beyond the wall is counted or covered
        let spec = world.spec;
        for idx in 0..spec.len() {
            let (i, j) = spec.cell_from_index(idx);
            let (x, _) = spec.cell_center(i as i64, j as i64);
            if x > 2.2 {
                assert!(!e.stats().is_reachable(idx));
                assert!(!e.coverage().is_covered(idx), "{} covered ({x:.2}) beyond the wall", kind.name());
            }
        }
    }
    let og = OfflineGraph::build(&world, &TaskProfile::mow(), start.x, start.y).unwrap();
    assert!(og.reachable_count() < og.graph.len());
}

#[test]
fn runs_are_deterministic() {
    let map = generate_random_map(3, MapTask::Mow);
    let world = Arc::new(map.world);
    let start = random_start_pose(&world, 0.15, &mut ChaCha8Rng::seed_from_u64(3));
    for kind in PlannerKind::ALL {
        let mut a = env(ProfileKind::Mow, world.clone(), start);
        let mut b = env(ProfileKind::Mow, world.clone(), start);
        let ra = run_planner(kind, &mut a, "m", 3, Some(3000)).unwrap();
        let rb = run_planner(kind, &mut b, "m", 3, Some(3000)).unwrap();
        assert_eq!(ra.log, rb.log, "{}", kind.name());
        assert_eq!(ra.waypoints, rb.waypoints, "{}", kind.name());
    }
}

#[test]
fn planner_names_round_trip() {
    for kind in PlannerKind::ALL {
        assert_eq!(kind.name().parse::<PlannerKind>().unwrap(), kind);
    }
    assert!("spiral".parse::<PlannerKind>().is_err());
}
