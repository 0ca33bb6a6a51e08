//! Ground-truth world, unicycle kinematics, lidar and sensing noise.
//!
//! Cell `(i, j)` is column `i`, row `j`; rows grow along +y and cell `(0, 0)`
//! has its lower-left corner at [`GridSpec::origin`].

use std::f64::consts::{PI, TAU};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, Subsystem};
use crate::CoreError;

/// Finest map resolution used by the observation encoder, in meters per cell.
pub const FINE_RESOLUTION: f64 = 0.0375;

/// Number of forward-Euler substeps per simulation step.
pub const MOTION_SUBSTEPS: usize = 5;

/// Geometry shared by every grid of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Meters per cell.
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// World coordinates of the lower-left corner of cell (0, 0).
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(resolution: f64, width: usize, height: usize, origin: [f64; 2]) -> Result<Self, CoreError> {
        if !(resolution > 0.0) || width == 0 || height == 0 {
            return Err(CoreError::InvalidGrid { resolution, width, height });
        }
        Ok(Self { resolution, width, height, origin })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn cell_from_index(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    #[inline]
    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height
    }

    /// Signed cell coordinates of a world point; may lie outside the grid.
    #[inline]
    pub fn cell_of_signed(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin[0]) / self.resolution).floor() as i64,
            ((y - self.origin[1]) / self.resolution).floor() as i64,
        )
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (i, j) = self.cell_of_signed(x, y);
        self.in_bounds(i, j).then_some((i as usize, j as usize))
    }

    #[inline]
    pub fn cell_center(&self, i: i64, j: i64) -> (f64, f64) {
        (
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn world_width(&self) -> f64 {
        self.width as f64 * self.resolution
    }

    pub fn world_height(&self) -> f64 {
        self.height as f64 * self.resolution
    }

    pub fn cell_area(&self) -> f64 {
        self.resolution * self.resolution
    }
}

/// Binary ground-truth occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    pub spec: GridSpec,
    obstacle: Vec<bool>,
}

impl WorldMap {
    /// A free map whose outermost ring of cells is obstacle.
    pub fn bounded(spec: GridSpec) -> Self {
        let mut world = Self { spec, obstacle: vec![false; spec.len()] };
        world.close_boundary();
        world
    }

    /// Builds a map from raw cells (`true` = obstacle); the boundary ring is forced closed.
    pub fn from_cells(spec: GridSpec, obstacle: Vec<bool>) -> Result<Self, CoreError> {
        if obstacle.len() != spec.len() {
            return Err(CoreError::ShapeMismatch { expected: spec.len(), actual: obstacle.len() });
        }
        let mut world = Self { spec, obstacle };
        world.close_boundary();
        Ok(world)
    }

    /// An empty square room: `side` meters of free interior surrounded by a
    /// one-cell wall, interior spanning `[0, side]²`.
    pub fn empty_square(side: f64, resolution: f64) -> Self {
        let n = (side / resolution).round() as usize + 2;
        let spec = GridSpec { resolution, width: n, height: n, origin: [-resolution, -resolution] };
        Self::bounded(spec)
    }

    fn close_boundary(&mut self) {
        let (w, h) = (self.spec.width, self.spec.height);
        for i in 0..w {
            self.obstacle[i] = true;
            self.obstacle[(h - 1) * w + i] = true;
        }
        for j in 0..h {
            self.obstacle[j * w] = true;
            self.obstacle[j * w + w - 1] = true;
        }
    }

    #[inline]
    pub fn is_obstacle(&self, i: usize, j: usize) -> bool {
        self.obstacle[self.spec.index(i, j)]
    }

    /// Out-of-grid cells count as obstacle.
    #[inline]
    pub fn is_obstacle_signed(&self, i: i64, j: i64) -> bool {
        !self.spec.in_bounds(i, j) || self.obstacle[self.spec.index(i as usize, j as usize)]
    }

    #[inline]
    pub fn is_obstacle_index(&self, idx: usize) -> bool {
        self.obstacle[idx]
    }

    pub fn set_obstacle(&mut self, i: usize, j: usize, value: bool) {
        let idx = self.spec.index(i, j);
        self.obstacle[idx] = value;
    }

    pub fn cells(&self) -> &[bool] {
        &self.obstacle
    }

    pub fn free_cell_count(&self) -> usize {
        self.obstacle.iter().filter(|o| !**o).count()
    }

    /// Marks every cell whose center lies within `radius` of `(cx, cy)`.
    pub fn fill_disk(&mut self, cx: f64, cy: f64, radius: f64) {
        let s = self.spec;
        let (i0, j0) = s.cell_of_signed(cx - radius, cy - radius);
        let (i1, j1) = s.cell_of_signed(cx + radius, cy + radius);
        for j in j0.max(0)..=j1.min(s.height as i64 - 1) {
            for i in i0.max(0)..=i1.min(s.width as i64 - 1) {
                let (x, y) = s.cell_center(i, j);
                if (x - cx).powi(2) + (y - cy).powi(2) <= radius * radius {
                    self.obstacle[s.index(i as usize, j as usize)] = true;
                }
            }
        }
    }

    /// Marks (or clears) every cell whose center lies in the axis-aligned rectangle.
    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, value: bool) {
        let s = self.spec;
        // cells whose centers fall in [lo, hi] along one axis
        let span = |lo: f64, hi: f64, origin: f64, n: usize| {
            let a = ((lo - origin) / s.resolution - 0.5).ceil().max(0.0) as usize;
            let b = ((hi - origin) / s.resolution - 0.5).floor();
            (a, if b < 0.0 { None } else { Some((b as usize).min(n - 1)) })
        };
        let (ia, ib) = span(x0, x1, s.origin[0], s.width);
        let (ja, jb) = span(y0, y1, s.origin[1], s.height);
        if let (Some(ib), Some(jb)) = (ib, jb) {
            for j in ja..=jb {
                for i in ia..=ib {
                    self.obstacle[s.index(i, j)] = value;
                }
            }
        }
        if !value {
            self.close_boundary();
        }
    }

    /// True if a disk of `radius` centered at `(x, y)` overlaps an obstacle cell
    /// (touching is allowed).
    pub fn disk_collides(&self, x: f64, y: f64, radius: f64) -> bool {
        let s = &self.spec;
        let (i0, j0) = s.cell_of_signed(x - radius, y - radius);
        let (i1, j1) = s.cell_of_signed(x + radius, y + radius);
        let r2 = radius * radius;
        for j in j0..=j1 {
            for i in i0..=i1 {
                if !self.is_obstacle_signed(i, j) {
                    continue;
                }
                if point_square_dist2(x, y, s, i, j) < r2 {
                    return true;
                }
            }
        }
        false
    }
}

/// Squared distance from a point to the closed square of cell `(i, j)`.
#[inline]
pub fn point_square_dist2(x: f64, y: f64, s: &GridSpec, i: i64, j: i64) -> f64 {
    let x0 = s.origin[0] + i as f64 * s.resolution;
    let y0 = s.origin[1] + j as f64 * s.resolution;
    let dx = (x0 - x).max(0.0).max(x - (x0 + s.resolution));
    let dy = (y0 - y).max(0.0).max(y - (y0 + s.resolution));
    dx * dx + dy * dy
}

/// Cell offsets `(di, dj)` whose squares come closer than `radius` to the center
/// of cell (0, 0). Used for clearance erosion.
pub fn disk_stencil(radius: f64, resolution: f64) -> Vec<(i64, i64)> {
    let reach = (radius / resolution).ceil() as i64 + 1;
    let mut out = Vec::new();
    for dj in -reach..=reach {
        for di in -reach..=reach {
            let gx = ((di.abs() as f64) - 0.5).max(0.0) * resolution;
            let gy = ((dj.abs() as f64) - 0.5).max(0.0) * resolution;
            if gx * gx + gy * gy < radius * radius {
                out.push((di, dj));
            }
        }
    }
    out
}

/// Agent pose in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading, counterclockwise from +x, in (−π, π].
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: normalize_angle(theta) }
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let wrapped = (a + PI).rem_euclid(TAU) - PI;
    if wrapped <= -PI {
        wrapped + TAU
    } else {
        wrapped
    }
}

/// The three task variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Mow,
    ExploreOmni,
    ExploreDir,
}

impl ProfileKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mow" => Some(Self::Mow),
            "explore-omni" => Some(Self::ExploreOmni),
            "explore-dir" => Some(Self::ExploreDir),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Mow => "mow",
            Self::ExploreOmni => "explore-omni",
            Self::ExploreDir => "explore-dir",
        }
    }

    pub fn is_exploration(self) -> bool {
        !matches!(self, Self::Mow)
    }
}

/// Physical dimensions of a task variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub kind: ProfileKind,
    /// Coverage radius d.
    pub coverage_radius: f64,
    /// Agent radius r.
    pub agent_radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub dt: f64,
    pub lidar_rays: usize,
    pub lidar_range: f64,
    pub lidar_fov: f64,
    /// Coverage field of view; defaults to the lidar field of view.
    #[serde(default)]
    pub coverage_fov: Option<f64>,
}

impl TaskProfile {
    pub fn explore_omni() -> Self {
        Self {
            kind: ProfileKind::ExploreOmni,
            coverage_radius: 7.0,
            agent_radius: 0.08,
            v_max: 0.5,
            omega_max: 1.0,
            dt: 0.5,
            lidar_rays: 20,
            lidar_range: 7.0,
            lidar_fov: TAU,
            coverage_fov: None,
        }
    }

    pub fn explore_dir() -> Self {
        Self {
            kind: ProfileKind::ExploreDir,
            coverage_radius: 3.5,
            agent_radius: 0.15,
            v_max: 0.26,
            omega_max: 1.0,
            dt: 0.5,
            lidar_rays: 24,
            lidar_range: 3.5,
            lidar_fov: PI,
            coverage_fov: None,
        }
    }

    pub fn mow() -> Self {
        Self {
            kind: ProfileKind::Mow,
            coverage_radius: 0.15,
            agent_radius: 0.15,
            v_max: 0.26,
            omega_max: 1.0,
            dt: 0.5,
            lidar_rays: 24,
            lidar_range: 3.5,
            lidar_fov: PI,
            coverage_fov: None,
        }
    }

    pub fn for_kind(kind: ProfileKind) -> Self {
        match kind {
            ProfileKind::Mow => Self::mow(),
            ProfileKind::ExploreOmni => Self::explore_omni(),
            ProfileKind::ExploreDir => Self::explore_dir(),
        }
    }

    pub fn coverage_fov(&self) -> f64 {
        self.coverage_fov.unwrap_or(self.lidar_fov)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let positive = [
            self.coverage_radius,
            self.agent_radius,
            self.v_max,
            self.omega_max,
            self.dt,
            self.lidar_range,
            self.lidar_fov,
        ];
        let fov_ok = self.lidar_fov > 0.0 && self.lidar_fov <= TAU + 1e-12;
        if positive.iter().any(|v| !(*v > 0.0)) || self.lidar_rays == 0 || !fov_ok {
            return Err(CoreError::InvalidProfile(format!("{self:?}")));
        }
        Ok(())
    }

    /// Ray angles relative to the heading.
    pub fn lidar_offsets(&self) -> Vec<f64> {
        let n = self.lidar_rays;
        if n == 1 {
            return vec![0.0];
        }
        let full_circle = (self.lidar_fov - TAU).abs() < 1e-9;
        (0..n)
            .map(|k| {
                let frac = if full_circle { k as f64 / n as f64 } else { k as f64 / (n - 1) as f64 };
                self.lidar_fov * (frac - 0.5)
            })
            .collect()
    }
}

/// Normalized control command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub v_norm: f64,
    pub omega_norm: f64,
}

impl Action {
    pub fn new(v_norm: f64, omega_norm: f64) -> Self {
        Self { v_norm: v_norm.clamp(-1.0, 1.0), omega_norm: omega_norm.clamp(-1.0, 1.0) }
    }
}

/// Gaussian perception noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_pos: f64,
    pub sigma_heading: f64,
    pub sigma_lidar: f64,
    pub seed: u64,
}

impl NoiseModel {
    /// Level 0 is noiseless, levels 1–3 are the evaluated noise settings.
    pub fn level(level: u8, seed: u64) -> Result<Self, CoreError> {
        let (p, h, l) = match level {
            0 => (0.0, 0.0, 0.0),
            1 => (0.01, 0.05, 0.05),
            2 => (0.02, 0.1, 0.1),
            3 => (0.05, 0.2, 0.2),
            other => return Err(CoreError::InvalidNoiseLevel(other)),
        };
        Ok(Self { sigma_pos: p, sigma_heading: h, sigma_lidar: l, seed })
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_pos == 0.0 && self.sigma_heading == 0.0 && self.sigma_lidar == 0.0
    }
}

/// A noise model bound to its random stream.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    pub model: NoiseModel,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(model: NoiseModel) -> Self {
        Self { model, rng: rng::stream(model.seed, Subsystem::Dynamics) }
    }

    fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        sigma * z
    }
}

/// One lidar sweep; ray `k` points at `heading + profile.lidar_offsets()[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub ranges: Vec<f64>,
}

/// Amanatides–Woo traversal of the cells a ray passes through.
///
/// Yields `(i, j, t_enter, t_exit)` in meters along the ray, starting at the
/// origin cell. Cells outside the grid are yielded too; callers decide when to stop.
#[derive(Debug, Clone)]
pub struct GridRay {
    i: i64,
    j: i64,
    step_i: i64,
    step_j: i64,
    t_max_x: f64,
    t_max_y: f64,
    t_delta_x: f64,
    t_delta_y: f64,
    t: f64,
}

impl GridRay {
    pub fn new(spec: &GridSpec, x: f64, y: f64, angle: f64) -> Self {
        let (dx, dy) = (angle.cos(), angle.sin());
        let (i, j) = spec.cell_of_signed(x, y);
        let res = spec.resolution;
        let (cx0, cy0) = (spec.origin[0] + i as f64 * res, spec.origin[1] + j as f64 * res);
        let (step_i, t_max_x, t_delta_x) = axis_setup(x, cx0, res, dx);
        let (step_j, t_max_y, t_delta_y) = axis_setup(y, cy0, res, dy);
        Self { i, j, step_i, step_j, t_max_x, t_max_y, t_delta_x, t_delta_y, t: 0.0 }
    }
}

fn axis_setup(p: f64, cell_lo: f64, res: f64, d: f64) -> (i64, f64, f64) {
    if d > 1e-15 {
        (1, (cell_lo + res - p) / d, res / d)
    } else if d < -1e-15 {
        (-1, (cell_lo - p) / d, -res / d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

impl Iterator for GridRay {
    type Item = (i64, i64, f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        let exit = self.t_max_x.min(self.t_max_y);
        let item = (self.i, self.j, self.t, exit);
        if self.t_max_x < self.t_max_y {
            self.i += self.step_i;
            self.t = self.t_max_x;
            self.t_max_x += self.t_delta_x;
        } else {
            self.j += self.step_j;
            self.t = self.t_max_y;
            self.t_max_y += self.t_delta_y;
        }
        Some(item)
    }
}

/// Distance from `(x, y)` along `angle` to the first obstacle cell boundary,
/// capped at `max_range`. Zero when the origin cell itself is an obstacle.
pub fn cast_ray(world: &WorldMap, x: f64, y: f64, angle: f64, max_range: f64) -> f64 {
    for (i, j, t_enter, _) in GridRay::new(&world.spec, x, y, angle) {
        if t_enter >= max_range {
            return max_range;
        }
        if world.is_obstacle_signed(i, j) {
            return t_enter;
        }
    }
    unreachable!("grid ray iterator is infinite")
}

/// Simulated lidar sweep at the true pose, with additive range noise.
pub fn simulate_lidar(world: &WorldMap, pose: &Pose, profile: &TaskProfile, noise: &mut NoiseSource) -> LidarScan {
    let sigma = noise.model.sigma_lidar;
    let ranges = profile
        .lidar_offsets()
        .into_iter()
        .map(|off| {
            let r = cast_ray(world, pose.x, pose.y, pose.theta + off, profile.lidar_range);
            (r + noise.gaussian(sigma)).clamp(0.0, profile.lidar_range)
        })
        .collect();
    LidarScan { ranges }
}

/// Result of one kinematic step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionResult {
    pub pose: Pose,
    pub collided: bool,
    /// Sum of applied translation lengths, meters.
    pub distance: f64,
}

/// Advances the unicycle model over one `dt` with [`MOTION_SUBSTEPS`] Euler
/// substeps. A substep whose translation would make the agent disk overlap an
/// obstacle keeps its rotation but drops its translation.
pub fn integrate_motion(pose: &Pose, action: Action, profile: &TaskProfile, world: &WorldMap) -> MotionResult {
    let action = Action::new(action.v_norm, action.omega_norm);
    let v = action.v_norm * profile.v_max;
    let omega = action.omega_norm * profile.omega_max;
    let h = profile.dt / MOTION_SUBSTEPS as f64;
    let (mut x, mut y, mut theta) = (pose.x, pose.y, pose.theta);
    let mut collided = false;
    let mut distance = 0.0;
    for _ in 0..MOTION_SUBSTEPS {
        if v != 0.0 {
            let nx = x + v * theta.cos() * h;
            let ny = y + v * theta.sin() * h;
            if world.disk_collides(nx, ny, profile.agent_radius) {
                collided = true;
            } else {
                distance += (nx - x).hypot(ny - y);
                x = nx;
                y = ny;
            }
        }
        theta += omega * h;
    }
    MotionResult { pose: Pose::new(x, y, theta), collided, distance }
}

/// Pose as perceived by the agent: independent Gaussian offsets on x, y and heading.
pub fn perturb_pose(pose: &Pose, noise: &mut NoiseSource) -> Pose {
    let (sp, sh) = (noise.model.sigma_pos, noise.model.sigma_heading);
    let dx = noise.gaussian(sp);
    let dy = noise.gaussian(sp);
    let dth = noise.gaussian(sh);
    Pose::new(pose.x + dx, pose.y + dy, pose.theta + dth)
}
