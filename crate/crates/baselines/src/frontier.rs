//! Nearest-frontier exploration on the fine grid: cluster the frontier
//! points, pick for each cluster the reachable cell closest to its centroid,
//! and head for the cluster whose pick is cheapest to reach.

use std::collections::{HashSet, VecDeque};
use std::time::Instant;

use coverage_core::gridworld::normalize_angle;
use coverage_core::mapping::Knowledge;
use coverage_core::{CoverageEnv, EpisodeLog, FrontierGrid, GridSpec, KnownMap, Pose};

use crate::astar::{astar, dijkstra, GridPath, MaskGrid, NEIGHBORS};
use crate::cellgraph::{working_radius, ClearanceMap};
use crate::executor::{Executor, Leg};
use crate::{polyline_length, BaselineError, BaselineRun, PlannerKind};

#[derive(Debug, Clone, PartialEq)]
pub enum FrontierStep {
    Target {
        /// Fine cell to drive to.
        target: usize,
        path: GridPath,
        /// Frontier points of the chosen cluster.
        cluster: Vec<usize>,
    },
    /// No frontier point can be approached any more.
    Complete,
}

/// 8-connected components of the frontier, each sorted, ordered by their
/// smallest cell.
pub fn frontier_clusters(frontier: &FrontierGrid) -> Vec<Vec<usize>> {
    let s = frontier.spec;
    let mut seen = vec![false; s.len()];
    let mut clusters = Vec::new();
    for start in frontier.indices() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut cluster = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            let (i, j) = s.cell_from_index(c);
            for (di, dj) in NEIGHBORS {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if !s.in_bounds(ni, nj) {
                    continue;
                }
                let n = s.index(ni as usize, nj as usize);
                if frontier.is_frontier(n) && !seen[n] {
                    seen[n] = true;
                    cluster.push(n);
                    queue.push_back(n);
                }
            }
        }
        cluster.sort_unstable();
        clusters.push(cluster);
    }
    clusters
}

/// Cells within `radius` of any cell in `sources`, walking over cells that
/// are not mapped obstacles. Distances are measured to the nearest source.
fn cells_near(spec: &GridSpec, known: &KnownMap, sources: &[usize], radius: f64) -> Vec<usize> {
    let mut origin = vec![usize::MAX; spec.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        origin[s] = s;
        queue.push_back(s);
    }
    let mut out = Vec::new();
    while let Some(c) = queue.pop_front() {
        out.push(c);
        let (i, j) = spec.cell_from_index(c);
        let (oi, oj) = spec.cell_from_index(origin[c]);
        for (di, dj) in NEIGHBORS {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if !spec.in_bounds(ni, nj) {
                continue;
            }
            let n = spec.index(ni as usize, nj as usize);
            if origin[n] != usize::MAX || known.get(n) == Knowledge::Obstacle {
                continue;
            }
            let d = ((ni - oi as i64) as f64).hypot((nj - oj as i64) as f64) * spec.resolution;
            if d < radius {
                origin[n] = origin[c];
                queue.push_back(n);
            }
        }
    }
    out
}

/// One planning step of the frontier explorer. `passable` is the fine
/// clearance map of the known obstacles (unknown space counts as free);
/// cells in `excluded` are never chosen as targets again, and clusters made
/// only of excluded points are ignored. `radius` bounds how
/// far from a cluster a stand-in target may lie when none of its points can
/// be reached.
pub fn frontier_explore_step(known: &KnownMap, frontier: &FrontierGrid, passable: &ClearanceMap, pose: &Pose, radius: f64, excluded: &HashSet<usize>) -> FrontierStep {
    let s = known.spec;
    let Some((ai, aj)) = s.cell_of(pose.x, pose.y) else { return FrontierStep::Complete };
    let agent = s.index(ai, aj);
    let mut mask = passable.mask().to_vec();
    mask[agent] = true;
    let grid = MaskGrid::new(&mask, s.width, s.height);
    let dist = dijkstra(&grid, &[agent], |_, _| true);
    let mut best: Option<(f64, usize, usize)> = None;
    let clusters = frontier_clusters(frontier);
    for (k, cluster) in clusters.iter().enumerate() {
        let live: Vec<usize> = cluster.iter().copied().filter(|c| !excluded.contains(c)).collect();
        if live.is_empty() {
            continue;
        }
        let n = cluster.len() as f64;
        let (mut cx, mut cy) = (0.0, 0.0);
        for &c in cluster {
            let (i, j) = s.cell_from_index(c);
            cx += i as f64 / n;
            cy += j as f64 / n;
        }
        let nearest_centroid = |cells: &mut dyn Iterator<Item = usize>| {
            cells
                .filter(|c| dist.dist[*c].is_some() && !excluded.contains(c))
                .map(|c| {
                    let (i, j) = s.cell_from_index(c);
                    ((i as f64 - cx).hypot(j as f64 - cy), c)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        };
        // frontier points the agent center can stand on, else any cell close
        // enough to sense one (frontier along walls is never reachable itself)
        let pick = nearest_centroid(&mut live.iter().copied()).or_else(|| nearest_centroid(&mut cells_near(&s, known, &live, radius).into_iter()));
        let Some((_, target)) = pick else { continue };
        let cost = dist.cost(target).expect("picked cells are reachable");
        let better = best.is_none_or(|(bc, bt, _)| cost < bc || (cost == bc && target < bt));
        if better {
            best = Some((cost, target, k));
        }
    }
    let Some((_, target, k)) = best else { return FrontierStep::Complete };
    let path = astar(&grid, agent, target).expect("target is reachable");
    FrontierStep::Target { target, path, cluster: clusters[k].clone() }
}

/// Keeps only the cells where the path changes direction, plus the end.
fn corners(spec: &GridSpec, cells: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for k in 1..cells.len() {
        let last = k + 1 == cells.len();
        if last {
            out.push(cells[k]);
            break;
        }
        let (a, b, c) = (spec.cell_from_index(cells[k - 1]), spec.cell_from_index(cells[k]), spec.cell_from_index(cells[k + 1]));
        let d1 = (b.0 as i64 - a.0 as i64, b.1 as i64 - a.1 as i64);
        let d2 = (c.0 as i64 - b.0 as i64, c.1 as i64 - b.1 as i64);
        if d1 != d2 {
            out.push(cells[k]);
        }
    }
    out
}

/// Explores until no frontier can be approached, the episode ends or the
/// step cap is hit. After each attempt the target and the cluster points
/// still in sensing range are excluded, which bounds the number of rounds.
pub fn frontier_coverage(env: &mut CoverageEnv, map_id: &str, seed: u64, max_steps: Option<usize>) -> Result<BaselineRun, BaselineError> {
    let profile = env.config().profile;
    let radius = working_radius(&profile);
    let s = env.world().spec;
    let start = env.pose();
    let mut log = EpisodeLog::start(env, map_id, seed, PlannerKind::Frontier.name());
    let mut run = BaselineRun::new(PlannerKind::Frontier, log.clone());
    run.waypoints.push((start.x, start.y));
    let mut passable = ClearanceMap::open(s, profile.agent_radius);
    let mut seen = vec![false; s.len()];
    let mut excluded = HashSet::new();
    {
        let mut ex = Executor::new(env, &mut log, max_steps);
        while !ex.is_over() {
            let t0 = Instant::now();
            for (idx, k) in ex.env.known().cells().iter().enumerate() {
                if *k == Knowledge::Obstacle && !seen[idx] {
                    seen[idx] = true;
                    passable.add_obstacle(idx);
                }
            }
            let pose = ex.env.perceived_pose();
            let step = frontier_explore_step(ex.env.known(), ex.env.frontier(), &passable, &pose, radius, &excluded);
            run.replans += 1;
            run.solver_seconds += t0.elapsed().as_secs_f64();
            let FrontierStep::Target { target, path, cluster } = step else { break };
            let mut outcome = Leg::Reached;
            for c in corners(&s, &path.cells) {
                let (i, j) = s.cell_from_index(c);
                let p = s.cell_center(i as i64, j as i64);
                run.waypoints.push(p);
                outcome = ex.go_to(p.0, p.1);
                if outcome != Leg::Reached {
                    break;
                }
            }
            match outcome {
                Leg::Reached => {
                    run.visited_nodes += 1;
                    // face the closest point of the cluster so a forward
                    // sector sees it
                    let p = ex.env.perceived_pose();
                    let nearest = cluster
                        .iter()
                        .map(|c| {
                            let (i, j) = s.cell_from_index(*c);
                            s.cell_center(i as i64, j as i64)
                        })
                        .min_by(|a, b| (a.0 - p.x).hypot(a.1 - p.y).total_cmp(&(b.0 - p.x).hypot(b.1 - p.y)))
                        .expect("clusters are non-empty");
                    if (nearest.0 - p.x).hypot(nearest.1 - p.y) > 1e-9 {
                        let heading = (nearest.1 - p.y).atan2(nearest.0 - p.x);
                        if normalize_angle(heading - p.theta).abs() > ex.heading_tolerance && ex.face(heading) == Leg::EpisodeOver {
                            break;
                        }
                    }
                }
                Leg::Blocked => run.blocked_legs += 1,
                Leg::EpisodeOver => break,
            }
            // whatever of the cluster is still within sensing range could not
            // be covered from here; never aim at it again
            excluded.insert(target);
            let p = ex.env.perceived_pose();
            excluded.extend(cluster.iter().copied().filter(|c| {
                let (i, j) = s.cell_from_index(*c);
                let (x, y) = s.cell_center(i as i64, j as i64);
                (x - p.x).hypot(y - p.y) <= profile.coverage_radius
            }));
        }
    }
    run.reachable_nodes = run.replans;
    run.planned_length = polyline_length(&run.waypoints[1..]);
    run.log = log;
    Ok(run)
}
