//! Classical coverage planners run through the same simulator as the learned
//! agents: a backtracking spiral, offline and online A* plus TSP tours over a
//! coarse cell graph, and a nearest-frontier explorer.

pub mod astar;
pub mod bsa;
pub mod cellgraph;
pub mod executor;
pub mod frontier;
pub mod planners;
pub mod tsp;

use std::str::FromStr;

use coverage_core::{CoreError, CoverageEnv, EpisodeLog};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use astar::{astar, dijkstra, octile, GridGraph, GridPath, MaskGrid, StepCount};
pub use bsa::{bsa_plan, BsaPlan};
pub use cellgraph::{cell_side, planning_radius, working_radius, CellGraph, ClearanceMap, Lattice};
pub use executor::{Executor, Leg};
pub use frontier::{frontier_clusters, frontier_explore_step, FrontierStep};
pub use tsp::{tour_cost, tsp_plan, DenseWeights, TspWeights};
pub use planners::{bsa_coverage, expand_order, tsp_coverage_offline, tsp_coverage_online, GraphWeights, OfflineGraph, D_MAX};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("no planning cell is reachable from the start pose ({x:.3}, {y:.3})")]
    NoStartNode { x: f64, y: f64 },
    #[error("unknown planner {0:?}; expected bsa, tsp-offline, tsp-online or frontier")]
    UnknownPlanner(String),
    #[error(transparent)]
    Env(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    Bsa,
    TspOffline,
    TspOnline,
    Frontier,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [Self::Bsa, Self::TspOffline, Self::TspOnline, Self::Frontier];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bsa => "bsa",
            Self::TspOffline => "tsp-offline",
            Self::TspOnline => "tsp-online",
            Self::Frontier => "frontier",
        }
    }
}

impl FromStr for PlannerKind {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| BaselineError::UnknownPlanner(s.to_string()))
    }
}

/// Everything a baseline episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRun {
    pub planner: PlannerKind,
    pub log: EpisodeLog,
    /// Points in the order they were commanded, start point first.
    pub waypoints: Vec<(f64, f64)>,
    /// Planning cells reachable from the start (known ones, for online planners).
    pub reachable_nodes: usize,
    /// Reachable planning cells the agent actually arrived at.
    pub visited_nodes: usize,
    /// Length of the commanded polyline from the first planning cell on, meters.
    pub planned_length: f64,
    pub revisits: usize,
    pub backtracks: usize,
    pub replans: usize,
    pub blocked_legs: usize,
    /// Wall-clock time spent planning. Kept out of the simulated clock so logs
    /// stay reproducible; reported next to it.
    pub solver_seconds: f64,
}

impl BaselineRun {
    fn new(planner: PlannerKind, log: EpisodeLog) -> Self {
        Self {
            planner,
            log,
            waypoints: Vec::new(),
            reachable_nodes: 0,
            visited_nodes: 0,
            planned_length: 0.0,
            revisits: 0,
            backtracks: 0,
            replans: 0,
            blocked_legs: 0,
            solver_seconds: 0.0,
        }
    }

    /// Fraction of reachable planning cells visited.
    pub fn node_coverage(&self) -> f64 {
        if self.reachable_nodes == 0 {
            1.0
        } else {
            self.visited_nodes as f64 / self.reachable_nodes as f64
        }
    }
}

pub(crate) fn polyline_length(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|p| (p[1].0 - p[0].0).hypot(p[1].1 - p[0].1)).sum()
}

/// Runs `planner` on a freshly reset environment until its plan is done, the
/// episode ends or `max_steps` steps have been taken.
pub fn run_planner(planner: PlannerKind, env: &mut CoverageEnv, map_id: &str, seed: u64, max_steps: Option<usize>) -> Result<BaselineRun, BaselineError> {
    match planner {
        PlannerKind::Bsa => planners::bsa_coverage(env, map_id, seed, max_steps),
        PlannerKind::TspOffline => planners::tsp_coverage_offline(env, map_id, seed, max_steps),
        PlannerKind::TspOnline => planners::tsp_coverage_online(env, map_id, seed, max_steps),
        PlannerKind::Frontier => frontier::frontier_coverage(env, map_id, seed, max_steps),
    }
}
