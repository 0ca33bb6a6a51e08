//! Egocentric multi-scale observations.
//!
//! Scale `i` (1-based) is a `grid_size × grid_size` crop of side
//! `grid_size · fine_resolution · s^(i−1)` centered on the agent with its
//! heading pointing up (row 0 is the far side). Coverage and obstacle maps are
//! sampled from count pyramids kept in sync with the global grids, so building
//! an observation costs the same on a 5 m map as on a 75 m one. Frontier maps
//! are forward-mapped from the fine frontier points, which keeps "a coarse
//! pixel is set iff a frontier point falls inside it" exact at any rotation.

use serde::{Deserialize, Serialize};

use crate::gridworld::{GridSpec, LidarScan, Pose, TaskProfile, FINE_RESOLUTION};

/// Multi-scale map geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Number of scales m.
    pub scales: usize,
    /// Scale factor s between consecutive scales.
    pub scale_factor: usize,
    /// Pixels per side of every scale.
    pub grid_size: usize,
    /// Meters per pixel of the finest scale.
    pub fine_resolution: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { scales: 4, scale_factor: 4, grid_size: 32, fine_resolution: FINE_RESOLUTION }
    }
}

impl EncoderConfig {
    /// Fine cells per pixel side at scale `i` (1-based).
    pub fn cells_per_pixel(&self, scale: usize) -> usize {
        self.scale_factor.pow(scale as u32 - 1)
    }

    /// Meters per pixel at scale `i`.
    pub fn pixel_size(&self, scale: usize) -> f64 {
        self.fine_resolution * self.cells_per_pixel(scale) as f64
    }

    /// Side length d_i of scale `i` in meters.
    pub fn scale_side(&self, scale: usize) -> f64 {
        self.grid_size as f64 * self.pixel_size(scale)
    }

    pub fn pixels_per_scale(&self) -> usize {
        self.grid_size * self.grid_size
    }

    /// Map cells in one observation (coverage, obstacle and frontier stacks).
    pub fn map_cells(&self) -> usize {
        3 * self.scales * self.pixels_per_scale()
    }
}

/// How fine cells inside a pixel are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    #[default]
    Mean,
    Max,
}

/// Agent-frame transform: `right` and `forward` unit vectors.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x: f64,
    y: f64,
    fwd: (f64, f64),
    right: (f64, f64),
}

impl Frame {
    fn new(pose: &Pose) -> Self {
        let (s, c) = pose.theta.sin_cos();
        Self { x: pose.x, y: pose.y, fwd: (c, s), right: (s, -c) }
    }

    #[inline]
    fn to_local(&self, wx: f64, wy: f64) -> (f64, f64) {
        let (dx, dy) = (wx - self.x, wy - self.y);
        (dx * self.right.0 + dy * self.right.1, dx * self.fwd.0 + dy * self.fwd.1)
    }

    #[inline]
    fn to_world(&self, right: f64, fwd: f64) -> (f64, f64) {
        (self.x + right * self.right.0 + fwd * self.fwd.0, self.y + right * self.right.1 + fwd * self.fwd.1)
    }
}

/// Pixel `(u, v)` containing a local point, if inside the crop.
#[inline]
fn local_to_pixel(right: f64, fwd: f64, pixel: f64, grid: usize) -> Option<(usize, usize)> {
    let half = grid as f64 / 2.0;
    let u = (right / pixel + half).floor();
    let v = (half - fwd / pixel).floor();
    if u >= 0.0 && v >= 0.0 && u < grid as f64 && v < grid as f64 {
        Some((u as usize, v as usize))
    } else {
        None
    }
}

#[inline]
fn pixel_center_local(u: usize, v: usize, pixel: f64, grid: usize) -> (f64, f64) {
    let half = grid as f64 / 2.0;
    ((u as f64 + 0.5 - half) * pixel, (half - v as f64 - 0.5) * pixel)
}

/// Reference egocentric crop of a fine global grid.
///
/// Each output pixel is the reducer over every fine cell whose center lands in
/// the pixel's square after rotating into the agent frame; cells outside the
/// grid read as 0. A pixel containing no cell center takes the value of the
/// cell under its center. Cost grows with the crop area, so the episode loop uses
/// [`build_observation`] instead.
pub fn extract_egocentric(values: &[f64], spec: &GridSpec, pose: &Pose, scale: usize, config: &EncoderConfig, reducer: Reducer) -> Vec<f64> {
    assert!(scale >= 1 && scale <= config.scales, "scale {scale} out of range");
    assert_eq!(values.len(), spec.len());
    let g = config.grid_size;
    let pixel = config.pixel_size(scale);
    let frame = Frame::new(pose);
    let reach = config.scale_side(scale) * std::f64::consts::FRAC_1_SQRT_2 + spec.resolution;
    let (i0, j0) = spec.cell_of_signed(pose.x - reach, pose.y - reach);
    let (i1, j1) = spec.cell_of_signed(pose.x + reach, pose.y + reach);
    let read = |i: i64, j: i64| if spec.in_bounds(i, j) { values[spec.index(i as usize, j as usize)] } else { 0.0 };
    let mut acc = vec![0.0f64; g * g];
    let mut hits = vec![0u32; g * g];
    for j in j0..=j1 {
        for i in i0..=i1 {
            let (cx, cy) = spec.cell_center(i, j);
            let (r, f) = frame.to_local(cx, cy);
            let Some((u, v)) = local_to_pixel(r, f, pixel, g) else { continue };
            let value = read(i, j);
            let k = v * g + u;
            match reducer {
                Reducer::Mean => acc[k] += value,
                Reducer::Max => acc[k] = if hits[k] == 0 { value } else { acc[k].max(value) },
            }
            hits[k] += 1;
        }
    }
    (0..g * g)
        .map(|k| match (reducer, hits[k]) {
            // a rotated pixel smaller than a cell may hold no cell center: use
            // the cell under the pixel center
            (_, 0) => {
                let (r, f) = pixel_center_local(k % g, k / g, pixel, g);
                let (wx, wy) = frame.to_world(r, f);
                let (i, j) = spec.cell_of_signed(wx, wy);
                read(i, j)
            }
            (Reducer::Mean, n) => acc[k] / n as f64,
            (Reducer::Max, _) => acc[k],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Level {
    /// Fine cells per block side.
    factor: usize,
    width: usize,
    height: usize,
    counts: Vec<u32>,
}

/// Per-scale block counts of a binary fine grid.
///
/// Level `ℓ` (1-based) groups `s^(ℓ−1) × s^(ℓ−1)` fine cells; the block mean
/// is `count / s^(2(ℓ−1))`, with cells beyond the world counting as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledPyramid {
    spec: GridSpec,
    scale_factor: usize,
    levels: Vec<Level>,
}

impl PooledPyramid {
    pub fn new(spec: GridSpec, config: &EncoderConfig) -> Self {
        let levels = (1..=config.scales)
            .map(|l| {
                let factor = config.cells_per_pixel(l);
                let width = spec.width.div_ceil(factor);
                let height = spec.height.div_ceil(factor);
                Level { factor, width, height, counts: vec![0; width * height] }
            })
            .collect();
        Self { spec, scale_factor: config.scale_factor, levels }
    }

    /// Builds every level from scratch.
    pub fn from_mask(spec: GridSpec, config: &EncoderConfig, mask: &[bool]) -> Self {
        let mut p = Self::new(spec, config);
        for (idx, set) in mask.iter().enumerate() {
            if *set {
                p.add(idx, 1);
            }
        }
        p
    }

    fn add(&mut self, fine_idx: usize, delta: i64) {
        let (i, j) = self.spec.cell_from_index(fine_idx);
        for level in &mut self.levels {
            let k = (j / level.factor) * level.width + i / level.factor;
            level.counts[k] = (level.counts[k] as i64 + delta) as u32;
        }
    }

    /// Applies fine-cell flips `(index, now_set)`. Cost is O(changes · levels).
    pub fn update(&mut self, changes: &[(usize, bool)]) {
        for &(idx, now) in changes {
            self.add(idx, if now { 1 } else { -1 });
        }
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_dims(&self, level: usize) -> (usize, usize) {
        let l = &self.levels[level - 1];
        (l.width, l.height)
    }

    /// Count at block `(bi, bj)` of `level` (1-based); zero outside.
    #[inline]
    pub fn count(&self, level: usize, bi: i64, bj: i64) -> u32 {
        let l = &self.levels[level - 1];
        if bi < 0 || bj < 0 || bi as usize >= l.width || bj as usize >= l.height {
            return 0;
        }
        l.counts[bj as usize * l.width + bi as usize]
    }

    #[inline]
    pub fn mean(&self, level: usize, bi: i64, bj: i64) -> f64 {
        let f = self.levels[level - 1].factor as f64;
        self.count(level, bi, bj) as f64 / (f * f)
    }

    /// Level-`ℓ` block containing a world point.
    #[inline]
    fn block_of(&self, level: usize, x: f64, y: f64) -> (i64, i64) {
        let size = self.spec.resolution * self.levels[level - 1].factor as f64;
        (((x - self.spec.origin[0]) / size).floor() as i64, ((y - self.spec.origin[1]) / size).floor() as i64)
    }

    /// Samples an egocentric crop by nearest block lookup at the pixel centers.
    pub fn sample_egocentric(&self, pose: &Pose, scale: usize, config: &EncoderConfig, reducer: Reducer, out: &mut [f32]) {
        let g = config.grid_size;
        let pixel = config.pixel_size(scale);
        let frame = Frame::new(pose);
        let f2 = {
            let f = self.levels[scale - 1].factor as f64;
            f * f
        };
        for v in 0..g {
            for u in 0..g {
                let (r, f) = pixel_center_local(u, v, pixel, g);
                let (wx, wy) = frame.to_world(r, f);
                let (bi, bj) = self.block_of(scale, wx, wy);
                let c = self.count(scale, bi, bj);
                out[v * g + u] = match reducer {
                    Reducer::Mean => (c as f64 / f2) as f32,
                    Reducer::Max => (c > 0) as u8 as f32,
                };
            }
        }
    }

    /// Fine indices of set cells whose block could lie within `radius` of `(x, y)`,
    /// found by descending only into non-empty blocks.
    pub fn set_cells_near(&self, x: f64, y: f64, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let top = self.levels.len();
        let (bi0, bj0) = self.block_of(top, x - radius, y - radius);
        let (bi1, bj1) = self.block_of(top, x + radius, y + radius);
        for bj in bj0..=bj1 {
            for bi in bi0..=bi1 {
                self.descend(top, bi, bj, x, y, radius, &mut out);
            }
        }
        out
    }

    fn descend(&self, level: usize, bi: i64, bj: i64, x: f64, y: f64, radius: f64, out: &mut Vec<usize>) {
        if self.count(level, bi, bj) == 0 {
            return;
        }
        let factor = self.levels[level - 1].factor;
        let size = self.spec.resolution * factor as f64;
        let x0 = self.spec.origin[0] + bi as f64 * size;
        let y0 = self.spec.origin[1] + bj as f64 * size;
        let dx = (x0 - x).max(0.0).max(x - (x0 + size));
        let dy = (y0 - y).max(0.0).max(y - (y0 + size));
        if dx * dx + dy * dy > radius * radius {
            return;
        }
        if level == 1 {
            out.push(self.spec.index(bi as usize, bj as usize));
            return;
        }
        let s = self.scale_factor as i64;
        for cj in bj * s..(bj + 1) * s {
            for ci in bi * s..(bi + 1) * s {
                self.descend(level - 1, ci, cj, x, y, radius, out);
            }
        }
    }
}

/// `m` grids of `grid_size²` values in [0, 1]; index 0 is the finest scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleStack {
    pub grid_size: usize,
    pub scales: Vec<Vec<f32>>,
}

impl MultiScaleStack {
    pub fn zeros(config: &EncoderConfig) -> Self {
        Self { grid_size: config.grid_size, scales: vec![vec![0.0; config.pixels_per_scale()]; config.scales] }
    }

    #[inline]
    pub fn get(&self, scale: usize, u: usize, v: usize) -> f32 {
        self.scales[scale - 1][v * self.grid_size + u]
    }
}

/// Network input: coverage, obstacle and frontier stacks plus normalized lidar.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub coverage: MultiScaleStack,
    pub obstacle: MultiScaleStack,
    pub frontier: MultiScaleStack,
    pub lidar: Vec<f32>,
}

/// Shape header of the flat observation layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationShape {
    pub scales: usize,
    pub grid_size: usize,
    pub channels: Vec<String>,
    pub lidar: usize,
    pub len: usize,
}

impl ObservationShape {
    pub fn new(config: &EncoderConfig, lidar_rays: usize) -> Self {
        Self {
            scales: config.scales,
            grid_size: config.grid_size,
            channels: vec!["coverage".into(), "obstacle".into(), "frontier".into()],
            lidar: lidar_rays,
            len: config.map_cells() + lidar_rays,
        }
    }
}

impl Observation {
    pub fn shape(&self) -> ObservationShape {
        let config = EncoderConfig { scales: self.coverage.scales.len(), grid_size: self.coverage.grid_size, ..Default::default() };
        ObservationShape::new(&config, self.lidar.len())
    }

    /// Flat layout: coverage scales 1..m, obstacle 1..m, frontier 1..m, lidar.
    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.shape().len);
        self.write_flat(&mut out);
        out
    }

    pub fn write_flat(&self, out: &mut Vec<f32>) {
        for stack in [&self.coverage, &self.obstacle, &self.frontier] {
            for s in &stack.scales {
                out.extend_from_slice(s);
            }
        }
        out.extend_from_slice(&self.lidar);
    }

    pub fn from_flat(shape: &ObservationShape, flat: &[f32]) -> Option<Self> {
        if flat.len() != shape.len {
            return None;
        }
        let px = shape.grid_size * shape.grid_size;
        let mut chunks = flat.chunks(px);
        let mut take = || MultiScaleStack {
            grid_size: shape.grid_size,
            scales: (0..shape.scales).map(|_| chunks.next().unwrap_or(&[]).to_vec()).collect(),
        };
        let coverage = take();
        let obstacle = take();
        let frontier = take();
        let lidar = flat[3 * shape.scales * px..].to_vec();
        Some(Self { coverage, obstacle, frontier, lidar })
    }
}

/// The pyramids an episode keeps current for observation building.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationState {
    pub config: EncoderConfig,
    pub coverage: PooledPyramid,
    pub obstacle: PooledPyramid,
    pub frontier: PooledPyramid,
    pub coverage_reducer: Reducer,
}

impl ObservationState {
    pub fn new(spec: GridSpec, config: EncoderConfig) -> Self {
        Self {
            config,
            coverage: PooledPyramid::new(spec, &config),
            obstacle: PooledPyramid::new(spec, &config),
            frontier: PooledPyramid::new(spec, &config),
            coverage_reducer: Reducer::Mean,
        }
    }
}

/// Assembles the observation at the (perceived) pose.
pub fn build_observation(state: &ObservationState, pose: &Pose, scan: &LidarScan, profile: &TaskProfile) -> Observation {
    let config = &state.config;
    let g = config.grid_size;
    let mut coverage = MultiScaleStack::zeros(config);
    let mut obstacle = MultiScaleStack::zeros(config);
    let mut frontier = MultiScaleStack::zeros(config);
    for scale in 1..=config.scales {
        state.coverage.sample_egocentric(pose, scale, config, state.coverage_reducer, &mut coverage.scales[scale - 1]);
        state.obstacle.sample_egocentric(pose, scale, config, state.coverage_reducer, &mut obstacle.scales[scale - 1]);
    }
    let frame = Frame::new(pose);
    let reach = config.scale_side(config.scales) * std::f64::consts::FRAC_1_SQRT_2;
    let spec = state.frontier.spec;
    for idx in state.frontier.set_cells_near(pose.x, pose.y, reach) {
        let (i, j) = spec.cell_from_index(idx);
        let (cx, cy) = spec.cell_center(i as i64, j as i64);
        let (r, f) = frame.to_local(cx, cy);
        for scale in 1..=config.scales {
            if let Some((u, v)) = local_to_pixel(r, f, config.pixel_size(scale), g) {
                frontier.scales[scale - 1][v * g + u] = 1.0;
            }
        }
    }
    let lidar = scan.ranges.iter().map(|r| (r / profile.lidar_range).clamp(0.0, 1.0) as f32).collect();
    Observation { coverage, obstacle, frontier, lidar }
}
