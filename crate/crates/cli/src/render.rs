//! Trajectory plots as portable pixmaps.

use coverage_core::mapping::apply_coverage;
use coverage_core::{CoverageGrid, EpisodeLog, TaskProfile, WorldMap};

pub const FREE: [u8; 3] = [255, 255, 255];
pub const OBSTACLE: [u8; 3] = [0, 0, 0];
pub const COVERED: [u8; 3] = [170, 220, 170];
pub const PATH: [u8; 3] = [30, 60, 200];
pub const START: [u8; 3] = [0, 160, 0];
pub const END: [u8; 3] = [210, 0, 0];

/// An RGB image, rows stored top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Self { width, height, pixels: vec![fill; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = color;
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = ((x1 - x0).signum(), (y1 - y0).signum());
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, color);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn square(&mut self, (cx, cy): (i64, i64), half: i64, color: [u8; 3]) {
        for y in cy - half..=cy + half {
            for x in cx - half..=cx + half {
                self.put(x, y, color);
            }
        }
    }

    /// Binary P6 encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Draws the map with the region covered along the logged poses, the path
/// through them and start and end markers. Every grid cell becomes a
/// `scale`×`scale` block.
pub fn render_trajectory(log: &EpisodeLog, world: &WorldMap, profile: &TaskProfile, scale: usize) -> RgbImage {
    let scale = scale.max(1);
    let spec = world.spec;
    let mut coverage = CoverageGrid::new(spec);
    for r in &log.records {
        apply_coverage(&mut coverage, &r.pose(), profile, world);
    }
    let mut img = RgbImage::new(spec.width * scale, spec.height * scale, FREE);
    for j in 0..spec.height {
        for i in 0..spec.width {
            let idx = spec.index(i, j);
            let color = if world.is_obstacle_index(idx) {
                OBSTACLE
            } else if coverage.is_covered(idx) {
                COVERED
            } else {
                continue;
            };
            let row = spec.height - 1 - j;
            for y in row * scale..(row + 1) * scale {
                img.pixels[y * img.width + i * scale..y * img.width + (i + 1) * scale].fill(color);
            }
        }
    }
    let to_pixel = |x: f64, y: f64| {
        let px = (x - spec.origin[0]) / spec.resolution * scale as f64;
        let py = (spec.height as f64 - (y - spec.origin[1]) / spec.resolution) * scale as f64;
        (px.floor() as i64, py.floor() as i64)
    };
    let points: Vec<(i64, i64)> = log.records.iter().map(|r| to_pixel(r.x, r.y)).collect();
    for w in points.windows(2) {
        img.line(w[0], w[1], PATH);
    }
    let half = scale.max(2) as i64;
    if let (Some(first), Some(last)) = (points.first(), points.last()) {
        img.square(*last, half, END);
        img.square(*first, half, START);
    }
    img
}
