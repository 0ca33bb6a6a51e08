//! Whole-episode coverage planners over the cell graph: the backtracking
//! spiral and the A*/TSP tours, offline on the true map or online on the
//! agent's growing map.

use std::collections::HashSet;
use std::time::Instant;

use coverage_core::mapping::Knowledge;
use coverage_core::{CoverageEnv, EpisodeLog, KnownMap, TaskProfile, WorldMap};

use crate::astar::dijkstra;
use crate::bsa::bsa_plan;
use crate::cellgraph::{cell_side, CellGraph, ClearanceMap, Lattice};
use crate::executor::{Executor, Leg};
use crate::tsp::{tsp_plan, TspWeights};
use crate::{polyline_length, BaselineError, BaselineRun, PlannerKind};

/// Chebyshev distance, in cells, beyond which pairs get the supremum weight.
pub const D_MAX: usize = 16;

/// TSP weights between a subset of graph nodes: exact shortest-path costs
/// (in cell steps) for pairs within [`D_MAX`] cells, and the supremum, the
/// number of graph nodes, for everything farther apart.
#[derive(Debug, Clone)]
pub struct GraphWeights {
    pub nodes: Vec<usize>,
    cells: Vec<(usize, usize)>,
    points: Vec<(f64, f64)>,
    /// Per subset node, a (2·D_MAX+1)² window of costs; infinity = no entry.
    window: Vec<f32>,
    pub supremum: f64,
}

const SPAN: usize = 2 * D_MAX + 1;

impl GraphWeights {
    /// All `nodes` must lie in one connected component of `graph`.
    pub fn new(graph: &CellGraph, nodes: Vec<usize>) -> Self {
        let n = nodes.len();
        let mut subset_at = vec![u32::MAX; graph.cols * graph.rows];
        for (k, node) in nodes.iter().enumerate() {
            subset_at[graph.cell_index(*node)] = k as u32;
        }
        let cells: Vec<(usize, usize)> = nodes.iter().map(|v| graph.nodes[*v].cell).collect();
        let points = nodes.iter().map(|v| graph.nodes[*v].point).collect();
        let mut window = vec![f32::INFINITY; n * SPAN * SPAN];
        let in_window = |a: (usize, usize), b: (usize, usize)| a.0.abs_diff(b.0) <= D_MAX && a.1.abs_diff(b.1) <= D_MAX;
        for a in 0..n {
            let ca = cells[a];
            let mut remaining = cells.iter().filter(|cb| in_window(ca, **cb)).count();
            let slot = &mut window[a * SPAN * SPAN..(a + 1) * SPAN * SPAN];
            dijkstra(graph, &[graph.cell_index(nodes[a])], |c, cost| {
                let b = subset_at[c];
                if b != u32::MAX && in_window(ca, cells[b as usize]) {
                    let cb = cells[b as usize];
                    let (dx, dy) = (cb.0 + D_MAX - ca.0, cb.1 + D_MAX - ca.1);
                    slot[dy * SPAN + dx] = cost.value() as f32;
                    remaining -= 1;
                }
                remaining > 0
            });
        }
        Self { nodes, cells, points, window, supremum: graph.len() as f64 }
    }
}

impl TspWeights for GraphWeights {
    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn weight(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let (ca, cb) = (self.cells[a], self.cells[b]);
        if ca.0.abs_diff(cb.0) > D_MAX || ca.1.abs_diff(cb.1) > D_MAX {
            return self.supremum;
        }
        let w = self.window[a * SPAN * SPAN + (cb.1 + D_MAX - ca.1) * SPAN + (cb.0 + D_MAX - ca.0)];
        if w.is_finite() {
            w as f64
        } else {
            self.supremum
        }
    }

    fn tie_break(&self, a: usize, b: usize) -> f64 {
        (self.points[a].0 - self.points[b].0).hypot(self.points[a].1 - self.points[b].1)
    }
}

/// Node sequence that drives through `order`, joining consecutive entries
/// with shortest graph paths.
pub fn expand_order(graph: &CellGraph, order: &[usize]) -> Vec<usize> {
    let mut seq = vec![order[0]];
    for pair in order.windows(2) {
        let path = graph.path(pair[0], pair[1]).expect("tour nodes share a component");
        seq.extend_from_slice(&path[1..]);
    }
    seq
}

/// Planning graph of the true map, with the cells reachable from the start.
#[derive(Debug, Clone)]
pub struct OfflineGraph {
    pub graph: CellGraph,
    pub start: usize,
    pub reachable: Vec<bool>,
}

impl OfflineGraph {
    pub fn build(world: &WorldMap, profile: &TaskProfile, x: f64, y: f64) -> Result<Self, BaselineError> {
        let clearance = ClearanceMap::from_world(world, profile.agent_radius);
        let graph = CellGraph::build(&clearance, clearance.mask(), cell_side(profile), Lattice::BoundingBox);
        let start = graph.attach(&clearance, x, y).ok_or(BaselineError::NoStartNode { x, y })?;
        let reachable = graph.component(start);
        let dropped = reachable.iter().filter(|r| !**r).count();
        if dropped > 0 {
            log::warn!("{dropped} of {} planning cells are unreachable from the start and are dropped", graph.len());
        }
        Ok(Self { graph, start, reachable })
    }

    pub fn reachable_count(&self) -> usize {
        self.reachable.iter().filter(|r| **r).count()
    }

    /// TSP visiting order over all reachable cells, starting at the start cell.
    pub fn tsp_order(&self) -> Vec<usize> {
        let mut subset = vec![self.start];
        subset.extend((0..self.graph.len()).filter(|n| *n != self.start && self.reachable[*n]));
        let weights = GraphWeights::new(&self.graph, subset);
        tsp_plan(&weights, 0).into_iter().map(|k| weights.nodes[k]).collect()
    }
}

fn offline_graph(env: &CoverageEnv) -> Result<OfflineGraph, BaselineError> {
    let p = env.pose();
    OfflineGraph::build(env.world(), &env.config().profile, p.x, p.y)
}

/// Drives through `seq` and records the visit of every node reached.
fn execute_sequence(ex: &mut Executor, graph: &CellGraph, seq: &[usize], run: &mut BaselineRun, visited: &mut [bool]) {
    for &n in seq {
        let p = graph.nodes[n].point;
        run.waypoints.push(p);
        match ex.go_to(p.0, p.1) {
            Leg::Reached => visited[n] = true,
            Leg::Blocked => run.blocked_legs += 1,
            Leg::EpisodeOver => break,
        }
    }
}

fn finish_offline(planner: PlannerKind, env: &mut CoverageEnv, map_id: &str, seed: u64, max_steps: Option<usize>, og: &OfflineGraph, seq: &[usize], solver_seconds: f64) -> BaselineRun {
    let mut log = EpisodeLog::start(env, map_id, seed, planner.name());
    let start = env.pose();
    let mut run = BaselineRun::new(planner, log.clone());
    run.solver_seconds = solver_seconds;
    run.waypoints.push((start.x, start.y));
    run.planned_length = polyline_length(&seq.iter().map(|n| og.graph.nodes[*n].point).collect::<Vec<_>>());
    let mut visited = vec![false; og.graph.len()];
    {
        let mut ex = Executor::new(env, &mut log, max_steps);
        execute_sequence(&mut ex, &og.graph, seq, &mut run, &mut visited);
    }
    run.reachable_nodes = og.reachable_count();
    run.visited_nodes = visited.iter().zip(&og.reachable).filter(|(v, r)| **v && **r).count();
    run.log = log;
    run
}

pub fn bsa_coverage(env: &mut CoverageEnv, map_id: &str, seed: u64, max_steps: Option<usize>) -> Result<BaselineRun, BaselineError> {
    let t0 = Instant::now();
    let og = offline_graph(env)?;
    let plan = bsa_plan(&og.graph, og.start);
    let solver = t0.elapsed().as_secs_f64();
    let mut run = finish_offline(PlannerKind::Bsa, env, map_id, seed, max_steps, &og, &plan.sequence, solver);
    run.revisits = plan.revisits;
    run.backtracks = plan.backtracks;
    Ok(run)
}

/// Offline tour: one TSP plan over every reachable cell of the true map.
pub fn tsp_coverage_offline(env: &mut CoverageEnv, map_id: &str, seed: u64, max_steps: Option<usize>) -> Result<BaselineRun, BaselineError> {
    let t0 = Instant::now();
    let og = offline_graph(env)?;
    let order = og.tsp_order();
    let seq = expand_order(&og.graph, &order);
    let solver = t0.elapsed().as_secs_f64();
    let mut run = finish_offline(PlannerKind::TspOffline, env, map_id, seed, max_steps, &og, &seq, solver);
    run.revisits = seq.len() - order.len();
    run.replans = 1;
    Ok(run)
}

/// Keeps a clearance map in step with the known obstacles.
struct KnownClearance {
    clearance: ClearanceMap,
    seen: Vec<bool>,
}

impl KnownClearance {
    fn new(known: &KnownMap, agent_radius: f64) -> Self {
        let mut kc = Self { clearance: ClearanceMap::open(known.spec, agent_radius), seen: vec![false; known.spec.len()] };
        kc.refresh(known);
        kc
    }

    fn refresh(&mut self, known: &KnownMap) {
        for (idx, k) in known.cells().iter().enumerate() {
            if *k == Knowledge::Obstacle && !self.seen[idx] {
                self.seen[idx] = true;
                self.clearance.add_obstacle(idx);
            }
        }
    }

    /// Node points must be clear and observed free.
    fn usable(&self, known: &KnownMap) -> Vec<bool> {
        self.clearance.mask().iter().zip(known.cells()).map(|(c, k)| *c && *k == Knowledge::Free).collect()
    }
}

/// Replans without any new visit after which the planner gives up.
const STALL_LIMIT: usize = 50;

/// Online tour: plan over the cells known so far, execute, and replan when
/// the queue empties or a planned edge turns out to be blocked.
pub fn tsp_coverage_online(env: &mut CoverageEnv, map_id: &str, seed: u64, max_steps: Option<usize>) -> Result<BaselineRun, BaselineError> {
    let profile = env.config().profile;
    let side = cell_side(&profile);
    let start = env.pose();
    let lattice = Lattice::CenteredOn(start.x, start.y);
    let mut log = EpisodeLog::start(env, map_id, seed, PlannerKind::TspOnline.name());
    let mut run = BaselineRun::new(PlannerKind::TspOnline, log.clone());
    run.waypoints.push((start.x, start.y));
    let mut kc = KnownClearance::new(env.known(), profile.agent_radius);
    let mut visited: HashSet<(usize, usize)> = HashSet::new();
    let mut failed: HashSet<(usize, usize)> = HashSet::new();
    let mut stalls = 0;
    let mut first_node: Option<(f64, f64)> = None;
    let mut driven: Vec<(f64, f64)> = Vec::new();
    {
        let mut ex = Executor::new(env, &mut log, max_steps);
        'plans: while !ex.is_over() && stalls < STALL_LIMIT {
            let t0 = Instant::now();
            kc.refresh(ex.env.known());
            let graph = CellGraph::build(&kc.clearance, &kc.usable(ex.env.known()), side, lattice);
            let p = ex.env.perceived_pose();
            let Some(cur) = graph.attach(&kc.clearance, p.x, p.y) else {
                if run.replans == 0 {
                    return Err(BaselineError::NoStartNode { x: p.x, y: p.y });
                }
                break;
            };
            let comp = graph.component(cur);
            let open = |n: usize| !visited.contains(&graph.nodes[n].cell) && !failed.contains(&graph.nodes[n].cell);
            let mut subset = vec![cur];
            subset.extend((0..graph.len()).filter(|n| *n != cur && comp[*n] && open(*n)));
            if subset.len() == 1 && !open(cur) {
                break;
            }
            let weights = GraphWeights::new(&graph, subset);
            let order: Vec<usize> = tsp_plan(&weights, 0).into_iter().map(|k| weights.nodes[k]).collect();
            run.replans += 1;
            run.solver_seconds += t0.elapsed().as_secs_f64();
            let before = visited.len();
            let mut prev: Option<usize> = None;
            for &target in &order {
                let legs = match prev {
                    None => vec![target],
                    Some(pv) => graph.path(pv, target).expect("tour nodes share a component")[1..].to_vec(),
                };
                for m in legs {
                    let point = graph.nodes[m].point;
                    if let Some(pv) = prev {
                        kc.refresh(ex.env.known());
                        if !kc.clearance.segment_clear(graph.nodes[pv].point, point) {
                            stalls += usize::from(visited.len() == before);
                            continue 'plans;
                        }
                    }
                    run.waypoints.push(point);
                    first_node.get_or_insert(point);
                    driven.push(point);
                    match ex.go_to(point.0, point.1) {
                        Leg::Reached => {
                            visited.insert(graph.nodes[m].cell);
                        }
                        Leg::Blocked => {
                            run.blocked_legs += 1;
                            failed.insert(graph.nodes[m].cell);
                            stalls += usize::from(visited.len() == before);
                            continue 'plans;
                        }
                        Leg::EpisodeOver => break 'plans,
                    }
                    prev = Some(m);
                }
            }
            stalls = if visited.len() > before { 0 } else { stalls + 1 };
        }
        kc.refresh(ex.env.known());
        let graph = CellGraph::build(&kc.clearance, &kc.usable(ex.env.known()), side, lattice);
        let p = ex.env.perceived_pose();
        // an agent stuck against an obstacle may not attach; fall back to the start
        if let Some(cur) = graph.attach(&kc.clearance, p.x, p.y).or_else(|| graph.attach(&kc.clearance, start.x, start.y)) {
            let comp = graph.component(cur);
            run.reachable_nodes = comp.iter().filter(|c| **c).count();
            run.visited_nodes = (0..graph.len()).filter(|n| comp[*n] && visited.contains(&graph.nodes[*n].cell)).count();
        }
    }
    run.planned_length = polyline_length(&driven);
    run.revisits = driven.len().saturating_sub(visited.len());
    run.log = log;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsp::tour_cost;
    use coverage_core::GridSpec;

    #[test]
    fn window_weights_are_shortest_paths_and_far_pairs_saturate() {
        let (w, h) = (40, 3);
        let spec = GridSpec::new(1.0, w, h, [0.0, 0.0]).unwrap();
        let usable = vec![true; w * h];
        let clear = ClearanceMap::from_mask(spec, 0.0, usable.clone());
        let g = CellGraph::build(&clear, &usable, 1.0, Lattice::BoundingBox);
        let nodes: Vec<usize> = (0..g.len()).collect();
        let wts = GraphWeights::new(&g, nodes);
        let a = g.node_at(0, 0).unwrap();
        let b = g.node_at(5, 2).unwrap();
        let c = g.node_at(17, 0).unwrap();
        assert!((wts.weight(a, b) - (3.0 + 2.0 * std::f64::consts::SQRT_2)).abs() < 1e-5);
        assert_eq!(wts.weight(a, c), 120.0);
        assert_eq!(wts.weight(a, a), 0.0);
        let order = tsp_plan(&wts, a);
        assert!(tour_cost(&wts, &order) < 120.0 + 1e-9);
    }
}
