//! What the agent has learned about the world so far: the lidar-built
//! obstacle map, the coverage mask, frontier points and coverage accounting.

use std::collections::VecDeque;

use crate::gridworld::{disk_stencil, normalize_angle, GridRay, GridSpec, LidarScan, Pose, TaskProfile, WorldMap};
use crate::CoreError;

/// Mapped state of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[repr(u8)]
pub enum Knowledge {
    #[default]
    Unknown = 0,
    Free = 1,
    Obstacle = 2,
}

/// Ternary map assembled from lidar sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownMap {
    pub spec: GridSpec,
    cells: Vec<Knowledge>,
}

/// A cell whose mapped state changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnowledgeChange {
    pub index: usize,
    pub from: Knowledge,
    pub to: Knowledge,
}

impl KnownMap {
    pub fn new(spec: GridSpec) -> Self {
        Self { spec, cells: vec![Knowledge::Unknown; spec.len()] }
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Knowledge {
        self.cells[idx]
    }

    #[inline]
    pub fn is_obstacle(&self, idx: usize) -> bool {
        self.cells[idx] == Knowledge::Obstacle
    }

    pub fn cells(&self) -> &[Knowledge] {
        &self.cells
    }

    pub fn count(&self, state: Knowledge) -> usize {
        self.cells.iter().filter(|c| **c == state).count()
    }

    fn mark(&mut self, idx: usize, to: Knowledge, changes: &mut Vec<KnowledgeChange>) {
        let from = self.cells[idx];
        // obstacle is terminal; free never returns to unknown
        let upgrade = match (from, to) {
            (Knowledge::Obstacle, _) => false,
            (Knowledge::Free, Knowledge::Obstacle) => true,
            (Knowledge::Unknown, Knowledge::Free | Knowledge::Obstacle) => true,
            _ => false,
        };
        if upgrade {
            self.cells[idx] = to;
            changes.push(KnowledgeChange { index: idx, from, to });
        }
    }
}

/// Integrates one lidar sweep taken at `pose` (possibly the perceived pose).
///
/// Cells a ray passes through before its measured range become free; when the
/// ray returned short of `lidar_range`, the cell holding the endpoint becomes
/// obstacle. Rays are clipped at the grid border.
pub fn update_known_map(known: &mut KnownMap, scan: &LidarScan, pose: &Pose, profile: &TaskProfile) -> Vec<KnowledgeChange> {
    let mut changes = Vec::new();
    let spec = known.spec;
    for (range, off) in scan.ranges.iter().zip(profile.lidar_offsets()) {
        let range = *range;
        let hit = range < profile.lidar_range;
        for (i, j, t0, t1) in GridRay::new(&spec, pose.x, pose.y, pose.theta + off) {
            if !spec.in_bounds(i, j) {
                break;
            }
            let idx = spec.index(i as usize, j as usize);
            if hit && t0 <= range && range < t1 {
                known.mark(idx, Knowledge::Obstacle, &mut changes);
                break;
            }
            if t0 >= range {
                break;
            }
            known.mark(idx, Knowledge::Free, &mut changes);
        }
    }
    changes
}

/// Binary visited mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub spec: GridSpec,
    covered: Vec<bool>,
    count: usize,
}

/// Cells newly covered by one application of the coverage model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageUpdate {
    pub newly_covered: Vec<usize>,
    /// Newly covered area in m².
    pub area: f64,
}

impl CoverageGrid {
    pub fn new(spec: GridSpec) -> Self {
        Self { spec, covered: vec![false; spec.len()], count: 0 }
    }

    #[inline]
    pub fn is_covered(&self, idx: usize) -> bool {
        self.covered[idx]
    }

    /// Covered state with out-of-grid cells reading as uncovered.
    #[inline]
    pub fn is_covered_signed(&self, i: i64, j: i64) -> bool {
        self.spec.in_bounds(i, j) && self.covered[self.spec.index(i as usize, j as usize)]
    }

    pub fn cells(&self) -> &[bool] {
        &self.covered
    }

    pub fn covered_count(&self) -> usize {
        self.count
    }

    pub fn covered_area(&self) -> f64 {
        self.count as f64 * self.spec.cell_area()
    }

    /// Counts covered cells from scratch.
    pub fn recount(&self) -> usize {
        self.covered.iter().filter(|c| **c).count()
    }

    /// Marks a cell covered; returns true if it was not covered before.
    pub fn cover(&mut self, idx: usize) -> bool {
        if self.covered[idx] {
            return false;
        }
        self.covered[idx] = true;
        self.count += 1;
        true
    }
}

/// True if the segment from the agent to the center of cell `(ti, tj)` crosses
/// no obstacle cell of `world` before reaching that cell.
fn line_of_sight(world: &WorldMap, x: f64, y: f64, ti: i64, tj: i64, angle: f64, dist: f64) -> bool {
    for (i, j, t0, _) in GridRay::new(&world.spec, x, y, angle) {
        if i == ti && j == tj {
            return true;
        }
        if t0 > dist {
            // numerical miss of a corner: the target center has been passed
            return true;
        }
        if world.is_obstacle_signed(i, j) {
            return false;
        }
    }
    unreachable!("grid ray iterator is infinite")
}

/// Covers every free cell whose center is closer than the coverage radius, inside
/// the coverage field of view and in line of sight of the agent.
pub fn apply_coverage(coverage: &mut CoverageGrid, pose: &Pose, profile: &TaskProfile, world: &WorldMap) -> CoverageUpdate {
    let spec = coverage.spec;
    let d = profile.coverage_radius;
    let half_fov = profile.coverage_fov() / 2.0;
    let full_circle = half_fov >= std::f64::consts::PI - 1e-12;
    let (i0, j0) = spec.cell_of_signed(pose.x - d, pose.y - d);
    let (i1, j1) = spec.cell_of_signed(pose.x + d, pose.y + d);
    let mut newly = Vec::new();
    for j in j0.max(0)..=j1.min(spec.height as i64 - 1) {
        for i in i0.max(0)..=i1.min(spec.width as i64 - 1) {
            let idx = spec.index(i as usize, j as usize);
            if coverage.covered[idx] || world.is_obstacle_index(idx) {
                continue;
            }
            let (cx, cy) = spec.cell_center(i, j);
            let (dx, dy) = (cx - pose.x, cy - pose.y);
            let dist = dx.hypot(dy);
            if dist >= d {
                continue;
            }
            let angle = dy.atan2(dx);
            if !full_circle && dist > 0.0 && normalize_angle(angle - pose.theta).abs() > half_fov {
                continue;
            }
            if !line_of_sight(world, pose.x, pose.y, i, j, angle, dist) {
                continue;
            }
            coverage.cover(idx);
            newly.push(idx);
        }
    }
    let area = newly.len() as f64 * spec.cell_area();
    CoverageUpdate { newly_covered: newly, area }
}

/// Fine-resolution frontier indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierGrid {
    pub spec: GridSpec,
    cells: Vec<bool>,
    count: usize,
}

#[inline]
fn frontier_predicate(coverage: &CoverageGrid, known: &KnownMap, i: usize, j: usize) -> bool {
    let s = coverage.spec;
    let idx = s.index(i, j);
    if coverage.covered[idx] || known.is_obstacle(idx) {
        return false;
    }
    for dj in -1i64..=1 {
        for di in -1i64..=1 {
            if (di != 0 || dj != 0) && coverage.is_covered_signed(i as i64 + di, j as i64 + dj) {
                return true;
            }
        }
    }
    false
}

impl FrontierGrid {
    /// A grid with no frontier points.
    pub fn new(spec: GridSpec) -> Self {
        Self { spec, cells: vec![false; spec.len()], count: 0 }
    }

    #[inline]
    pub fn is_frontier(&self, idx: usize) -> bool {
        self.cells[idx]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i)
    }

    /// Re-evaluates the cells in `touched` and their 8-neighbors.
    /// Returns `(index, now_frontier)` for every cell that flipped.
    pub fn update(&mut self, coverage: &CoverageGrid, known: &KnownMap, touched: &[usize]) -> Vec<(usize, bool)> {
        let s = self.spec;
        let mut candidates = Vec::with_capacity(touched.len() * 9);
        for &idx in touched {
            let (i, j) = s.cell_from_index(idx);
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if s.in_bounds(ni, nj) {
                        candidates.push(s.index(ni as usize, nj as usize));
                    }
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        let mut flips = Vec::new();
        for idx in candidates {
            let (i, j) = s.cell_from_index(idx);
            let now = frontier_predicate(coverage, known, i, j);
            if now != self.cells[idx] {
                self.cells[idx] = now;
                if now {
                    self.count += 1;
                } else {
                    self.count -= 1;
                }
                flips.push((idx, now));
            }
        }
        flips
    }
}

/// Frontier points: uncovered, not a mapped obstacle, with a covered 8-neighbor.
pub fn compute_frontier(coverage: &CoverageGrid, known: &KnownMap) -> FrontierGrid {
    let s = coverage.spec;
    let mut cells = vec![false; s.len()];
    let mut count = 0;
    for j in 0..s.height {
        for i in 0..s.width {
            if frontier_predicate(coverage, known, i, j) {
                cells[s.index(i, j)] = true;
                count += 1;
            }
        }
    }
    FrontierGrid { spec: s, cells, count }
}

/// Cells whose center can hold the agent disk without touching an obstacle.
pub fn clearance_mask(world: &WorldMap, radius: f64) -> Vec<bool> {
    let s = world.spec;
    let stencil = disk_stencil(radius, s.resolution);
    let mut clear: Vec<bool> = world.cells().iter().map(|o| !o).collect();
    for j in 0..s.height {
        for i in 0..s.width {
            if !world.is_obstacle(i, j) {
                continue;
            }
            for &(di, dj) in &stencil {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if s.in_bounds(ni, nj) {
                    clear[s.index(ni as usize, nj as usize)] = false;
                }
            }
        }
    }
    clear
}

/// 4-connected flood fill over a traversability mask.
pub fn flood_fill(spec: &GridSpec, passable: &[bool], seeds: &[usize]) -> Vec<bool> {
    let mut reached = vec![false; spec.len()];
    let mut queue = VecDeque::new();
    for &s in seeds {
        if passable[s] && !reached[s] {
            reached[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(idx) = queue.pop_front() {
        let (i, j) = spec.cell_from_index(idx);
        let neighbors = [(i as i64 + 1, j as i64), (i as i64 - 1, j as i64), (i as i64, j as i64 + 1), (i as i64, j as i64 - 1)];
        for (ni, nj) in neighbors {
            if spec.in_bounds(ni, nj) {
                let n = spec.index(ni as usize, nj as usize);
                if passable[n] && !reached[n] {
                    reached[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    reached
}

/// Number of 4-connected components of a mask.
pub fn component_count(spec: &GridSpec, mask: &[bool]) -> usize {
    let mut seen = vec![false; spec.len()];
    let mut components = 0;
    for start in 0..spec.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        components += 1;
        let reached = flood_fill(spec, mask, &[start]);
        for (s, r) in seen.iter_mut().zip(reached) {
            *s |= r;
        }
    }
    components
}

/// Cells the agent center can reach from `start` without collision.
pub fn reachable_mask(world: &WorldMap, start: &Pose, agent_radius: f64) -> Result<Vec<bool>, CoreError> {
    let s = world.spec;
    let blocked = || CoreError::StartBlocked { x: start.x, y: start.y };
    let (si, sj) = s.cell_of(start.x, start.y).ok_or_else(blocked)?;
    if world.is_obstacle(si, sj) {
        return Err(blocked());
    }
    let clear = clearance_mask(world, agent_radius);
    // the pose may be clear while its cell center is not; seed from clear cells
    // overlapping the agent footprint
    let reach = (agent_radius / s.resolution).ceil() as i64 + 1;
    let mut seeds = Vec::new();
    for dj in -reach..=reach {
        for di in -reach..=reach {
            let (ni, nj) = (si as i64 + di, sj as i64 + dj);
            if !s.in_bounds(ni, nj) {
                continue;
            }
            let (cx, cy) = s.cell_center(ni, nj);
            let idx = s.index(ni as usize, nj as usize);
            if clear[idx] && (cx - start.x).hypot(cy - start.y) <= agent_radius + s.resolution {
                seeds.push(idx);
            }
        }
    }
    if seeds.is_empty() {
        return Err(blocked());
    }
    Ok(flood_fill(&s, &clear, &seeds))
}

/// Reachable free area (m²): the agent-radius erosion of free space, restricted
/// to the component containing `start`.
pub fn reachable_free_area(world: &WorldMap, start: &Pose, agent_radius: f64) -> Result<f64, CoreError> {
    let mask = reachable_mask(world, start, agent_radius)?;
    Ok(mask.iter().filter(|m| **m).count() as f64 * world.spec.cell_area())
}

/// Coverage progress against the reachable free space.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageStats {
    reachable: Vec<bool>,
    reachable_cells: usize,
    covered_reachable: usize,
    pub reachable_free_area: f64,
    pub steps_since_new_coverage: usize,
}

impl CoverageStats {
    pub fn new(reachable: Vec<bool>, spec: &GridSpec) -> Self {
        let reachable_cells = reachable.iter().filter(|r| **r).count();
        Self {
            reachable,
            reachable_cells,
            covered_reachable: 0,
            reachable_free_area: reachable_cells as f64 * spec.cell_area(),
            steps_since_new_coverage: 0,
        }
    }

    pub fn is_reachable(&self, idx: usize) -> bool {
        self.reachable[idx]
    }

    pub fn reachable(&self) -> &[bool] {
        &self.reachable
    }

    pub fn reachable_cells(&self) -> usize {
        self.reachable_cells
    }

    pub fn covered_reachable(&self) -> usize {
        self.covered_reachable
    }

    /// Registers the cells covered in one step.
    pub fn record_step(&mut self, newly_covered: &[usize]) {
        self.covered_reachable += newly_covered.iter().filter(|i| self.reachable[**i]).count();
        if newly_covered.is_empty() {
            self.steps_since_new_coverage += 1;
        } else {
            self.steps_since_new_coverage = 0;
        }
    }

    pub fn covered_fraction(&self) -> f64 {
        if self.reachable_cells == 0 {
            return 1.0;
        }
        self.covered_reachable as f64 / self.reachable_cells as f64
    }
}
