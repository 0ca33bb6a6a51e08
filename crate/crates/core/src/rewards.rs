//! Reward terms and episode termination.

use serde::{Deserialize, Serialize};

use crate::gridworld::{GridSpec, ProfileKind, TaskProfile};
use crate::mapping::CoverageGrid;

/// Reward scale factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub lambda_area: f64,
    pub lambda_tv_global: f64,
    pub lambda_tv_incremental: f64,
    pub r_coll: f64,
    pub r_const: f64,
}

impl RewardParams {
    /// Defaults per task: incremental TV weight 1 for mowing, 0.2 for exploration.
    pub fn for_profile(kind: ProfileKind) -> Self {
        Self {
            lambda_area: 1.0,
            lambda_tv_global: 0.0,
            lambda_tv_incremental: if kind.is_exploration() { 0.2 } else { 1.0 },
            r_coll: -10.0,
            r_const: -0.1,
        }
    }
}

/// The five reward terms of one step and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub area: f64,
    pub tv_global: f64,
    pub tv_incremental: f64,
    pub collision: f64,
    pub constant: f64,
    pub total: f64,
}

/// Coverage reward, normalized by the area an agent-width sweep can cover per step.
pub fn reward_area(new_area: f64, params: &RewardParams, profile: &TaskProfile) -> f64 {
    params.lambda_area * new_area / (2.0 * profile.agent_radius * profile.v_max * profile.dt)
}

/// Discrete isotropic total variation of a binary mask, kept as counts of
/// unit terms and diagonal (√2) terms so it can be updated incrementally
/// without drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TvCounts {
    pub unit: i64,
    pub diagonal: i64,
}

impl TvCounts {
    /// Boundary length in meters.
    pub fn meters(&self, resolution: f64) -> f64 {
        resolution * (self.unit as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2)
    }
}

/// Classifies the forward-difference term at `(i, j)`: 0, 1 or 2 nonzero
/// differences. Neighbors past the border replicate the cell.
#[inline]
fn tv_term(cells: &[bool], spec: &GridSpec, i: usize, j: usize) -> u8 {
    let x = cells[spec.index(i, j)];
    let right = if i + 1 < spec.width { cells[spec.index(i + 1, j)] } else { x };
    let up = if j + 1 < spec.height { cells[spec.index(i, j + 1)] } else { x };
    (right != x) as u8 + (up != x) as u8
}

fn tv_counts(cells: &[bool], spec: &GridSpec) -> TvCounts {
    let mut c = TvCounts::default();
    for j in 0..spec.height {
        for i in 0..spec.width {
            match tv_term(cells, spec, i, j) {
                1 => c.unit += 1,
                2 => c.diagonal += 1,
                _ => {}
            }
        }
    }
    c
}

/// Total variation of the coverage mask in meters of boundary.
pub fn total_variation(grid: &CoverageGrid) -> f64 {
    tv_counts(grid.cells(), &grid.spec).meters(grid.spec.resolution)
}

/// Running total variation of a coverage grid, updated from changed cells only.
#[derive(Debug, Clone, PartialEq)]
pub struct TvTracker {
    counts: TvCounts,
}

impl TvTracker {
    pub fn new(grid: &CoverageGrid) -> Self {
        Self { counts: tv_counts(grid.cells(), &grid.spec) }
    }

    pub fn counts(&self) -> TvCounts {
        self.counts
    }

    pub fn meters(&self, resolution: f64) -> f64 {
        self.counts.meters(resolution)
    }

    /// Applies a coverage change. `grid` must already contain the new values;
    /// `changed` lists the flipped cells.
    pub fn apply(&mut self, grid: &CoverageGrid, changed: &[usize]) {
        if changed.is_empty() {
            return;
        }
        let spec = grid.spec;
        let cells = grid.cells();
        // terms depending on a changed cell: itself, its left and lower neighbor
        let mut affected: Vec<usize> = Vec::with_capacity(changed.len() * 3);
        for &idx in changed {
            let (i, j) = spec.cell_from_index(idx);
            affected.push(idx);
            if i > 0 {
                affected.push(spec.index(i - 1, j));
            }
            if j > 0 {
                affected.push(spec.index(i, j - 1));
            }
        }
        affected.sort_unstable();
        affected.dedup();
        let mut flipped = changed.to_vec();
        flipped.sort_unstable();
        flipped.dedup();
        let old_value = |idx: usize| cells[idx] ^ flipped.binary_search(&idx).is_ok();
        for idx in affected {
            let (i, j) = spec.cell_from_index(idx);
            let new = tv_term(cells, &spec, i, j);
            let x = old_value(idx);
            let right = if i + 1 < spec.width { old_value(spec.index(i + 1, j)) } else { x };
            let up = if j + 1 < spec.height { old_value(spec.index(i, j + 1)) } else { x };
            let old = (right != x) as u8 + (up != x) as u8;
            for (term, sign) in [(old, -1i64), (new, 1i64)] {
                match term {
                    1 => self.counts.unit += sign,
                    2 => self.counts.diagonal += sign,
                    _ => {}
                }
            }
        }
    }
}

/// Global TV reward, scale-invariant through the √(covered area) normalization.
pub fn reward_tv_global(tv: f64, covered_area: f64, params: &RewardParams) -> f64 {
    if covered_area <= 0.0 || params.lambda_tv_global == 0.0 {
        return 0.0;
    }
    -params.lambda_tv_global * tv / covered_area.sqrt()
}

/// Incremental TV reward: positive when the coverage boundary shrinks.
pub fn reward_tv_incremental(tv: f64, tv_prev: f64, params: &RewardParams, profile: &TaskProfile) -> f64 {
    -params.lambda_tv_incremental * (tv - tv_prev) / (2.0 * profile.v_max * profile.dt)
}

/// Inputs of one step's reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSignals {
    pub new_area: f64,
    pub tv: f64,
    pub tv_prev: f64,
    pub covered_area: f64,
    pub collided: bool,
}

pub fn step_reward(signals: &StepSignals, params: &RewardParams, profile: &TaskProfile) -> RewardBreakdown {
    let area = reward_area(signals.new_area, params, profile);
    let tv_global = reward_tv_global(signals.tv, signals.covered_area, params);
    let tv_incremental = reward_tv_incremental(signals.tv, signals.tv_prev, params, profile);
    let collision = if signals.collided { params.r_coll } else { 0.0 };
    let constant = params.r_const;
    RewardBreakdown { area, tv_global, tv_incremental, collision, constant, total: area + tv_global + tv_incremental + collision + constant }
}

/// Why an episode ended, if it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoneReason {
    Running,
    Goal,
    Truncated,
}

impl DoneReason {
    pub fn is_done(self) -> bool {
        self != Self::Running
    }
}

/// Episode termination settings and progress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStatus {
    pub goal_coverage: f64,
    /// Truncate after this many consecutive steps without new coverage.
    pub tau: usize,
    pub steps_since_new: usize,
}

impl EpisodeStatus {
    pub fn new(goal_coverage: f64) -> Self {
        Self { goal_coverage, tau: 1000, steps_since_new: 0 }
    }
}

pub fn check_termination(status: &EpisodeStatus, covered_fraction: f64) -> DoneReason {
    if covered_fraction >= status.goal_coverage {
        DoneReason::Goal
    } else if status.steps_since_new >= status.tau {
        DoneReason::Truncated
    } else {
        DoneReason::Running
    }
}
