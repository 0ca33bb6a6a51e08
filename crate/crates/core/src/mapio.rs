//! Portable graymap import/export for worlds and agent maps.
//!
//! Pixel value 0 is obstacle and 255 free; images are written top row first,
//! so the first image row is the highest `j`. When exporting coverage, covered
//! free cells are drawn as 128 and unknown cells of a known map as 205.
//! On import any value below 128 reads as obstacle.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gridworld::{GridSpec, Pose, WorldMap};
use crate::mapping::{CoverageGrid, Knowledge, KnownMap};
use crate::CoreError;

pub const PIXEL_OBSTACLE: u8 = 0;
pub const PIXEL_FREE: u8 = 255;
pub const PIXEL_COVERED: u8 = 128;
pub const PIXEL_UNKNOWN: u8 = 205;

/// Sidecar metadata stored next to a graymap as `<name>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub meters_per_pixel: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default)]
    pub start_poses: Vec<[f64; 3]>,
    /// World coordinates of the lower-left corner of the image.
    #[serde(default)]
    pub origin: [f64; 2],
}

impl MapSidecar {
    pub fn starts(&self) -> Vec<Pose> {
        self.start_poses.iter().map(|p| Pose::new(p[0], p[1], p[2])).collect()
    }
}

/// An 8-bit grayscale image, rows stored top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Image of a grid-shaped value array; `pixel(idx)` maps a cell index to its gray value.
    pub fn from_grid(spec: &GridSpec, pixel: impl Fn(usize) -> u8) -> Self {
        let (w, h) = (spec.width, spec.height);
        let mut pixels = Vec::with_capacity(w * h);
        for row in 0..h {
            let j = h - 1 - row;
            pixels.extend((0..w).map(|i| pixel(spec.index(i, j))));
        }
        Self { width: w, height: h, pixels }
    }

    /// Value of grid cell `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> u8 {
        self.pixels[(self.height - 1 - j) * self.width + i]
    }

    /// Binary graymap (P5).
    pub fn to_p5(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Plain-text graymap (P2).
    pub fn to_p2(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses P2 or P5 data; values are rescaled to 0..=255 when maxval differs.
    pub fn parse(data: &[u8]) -> Result<Self, CoreError> {
        let err = |m: &str| CoreError::MapFormat(m.to_string());
        let mut pos = 0;
        let mut header = Vec::with_capacity(4);
        while header.len() < 4 {
            // skip whitespace and comments
            while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
                if data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(err("truncated header"));
            }
            header.push(std::str::from_utf8(&data[start..pos]).map_err(|_| err("non-ascii header"))?.to_string());
        }
        let binary = match header[0].as_str() {
            "P5" => true,
            "P2" => false,
            other => return Err(CoreError::MapFormat(format!("unsupported magic {other:?}"))),
        };
        let num = |s: &str| s.parse::<usize>().map_err(|_| CoreError::MapFormat(format!("bad header field {s:?}")));
        let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
        if width == 0 || height == 0 || maxval == 0 || maxval > 255 {
            return Err(err("unsupported dimensions or maxval"));
        }
        let scale = |v: usize| -> Result<u8, CoreError> {
            if v > maxval {
                return Err(err("pixel exceeds maxval"));
            }
            Ok((v * 255 / maxval) as u8)
        };
        let n = width * height;
        let pixels = if binary {
            // exactly one whitespace byte separates the header from the raster
            let body = data.get(pos + 1..pos + 1 + n).ok_or_else(|| err("truncated raster"))?;
            body.iter().map(|&v| scale(v as usize)).collect::<Result<Vec<_>, _>>()?
        } else {
            let text = std::str::from_utf8(&data[pos..]).map_err(|_| err("non-ascii raster"))?;
            let values: Vec<u8> = text
                .split_ascii_whitespace()
                .take(n)
                .map(|t| t.parse::<usize>().map_err(|_| CoreError::MapFormat(format!("bad pixel {t:?}"))).and_then(scale))
                .collect::<Result<_, _>>()?;
            if values.len() != n {
                return Err(err("truncated raster"));
            }
            values
        };
        Ok(Self { width, height, pixels })
    }
}

pub fn world_image(world: &WorldMap) -> GrayImage {
    GrayImage::from_grid(&world.spec, |idx| if world.is_obstacle_index(idx) { PIXEL_OBSTACLE } else { PIXEL_FREE })
}

/// World with covered cells overlaid in mid gray.
pub fn coverage_image(world: &WorldMap, coverage: &CoverageGrid) -> GrayImage {
    GrayImage::from_grid(&world.spec, |idx| {
        if world.is_obstacle_index(idx) {
            PIXEL_OBSTACLE
        } else if coverage.is_covered(idx) {
            PIXEL_COVERED
        } else {
            PIXEL_FREE
        }
    })
}

pub fn known_map_image(known: &KnownMap) -> GrayImage {
    GrayImage::from_grid(&known.spec, |idx| match known.get(idx) {
        Knowledge::Obstacle => PIXEL_OBSTACLE,
        Knowledge::Free => PIXEL_FREE,
        Knowledge::Unknown => PIXEL_UNKNOWN,
    })
}

pub fn world_from_image(image: &GrayImage, meters_per_pixel: f64, origin: [f64; 2]) -> Result<WorldMap, CoreError> {
    let spec = GridSpec::new(meters_per_pixel, image.width, image.height, origin)?;
    let mut cells = vec![false; spec.len()];
    for j in 0..spec.height {
        for i in 0..spec.width {
            cells[spec.index(i, j)] = image.cell(i, j) < 128;
        }
    }
    WorldMap::from_cells(spec, cells)
}

fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("json")
}

/// Writes `<path>` as P5 plus its JSON sidecar.
pub fn save_world(path: &Path, world: &WorldMap, profile: Option<&str>, starts: &[Pose]) -> Result<(), CoreError> {
    fs::File::create(path)?.write_all(&world_image(world).to_p5())?;
    let sidecar = MapSidecar {
        meters_per_pixel: world.spec.resolution,
        profile: profile.map(str::to_string),
        start_poses: starts.iter().map(|p| [p.x, p.y, p.theta]).collect(),
        origin: world.spec.origin,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Loads a graymap and its sidecar. Without a sidecar the fine resolution and
/// a zero origin are assumed.
pub fn load_world(path: &Path) -> Result<(WorldMap, MapSidecar), CoreError> {
    let image = GrayImage::parse(&fs::read(path)?)?;
    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        serde_json::from_str(&fs::read_to_string(side)?)?
    } else {
        MapSidecar { meters_per_pixel: crate::gridworld::FINE_RESOLUTION, profile: None, start_poses: vec![], origin: [0.0, 0.0] }
    };
    let world = world_from_image(&image, sidecar.meters_per_pixel, sidecar.origin)?;
    Ok((world, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_and_p2_round_trip() {
        let mut world = WorldMap::empty_square(1.0, 0.1);
        world.fill_disk(0.5, 0.3, 0.15);
        let img = world_image(&world);
        assert_eq!(GrayImage::parse(&img.to_p5()).unwrap(), img);
        assert_eq!(GrayImage::parse(img.to_p2().as_bytes()).unwrap(), img);
        let back = world_from_image(&img, 0.1, world.spec.origin).unwrap();
        assert_eq!(back, world);
    }

    #[test]
    fn top_row_is_highest_y() {
        let spec = GridSpec::new(1.0, 3, 4, [0.0, 0.0]).unwrap();
        let img = GrayImage::from_grid(&spec, |idx| idx as u8);
        assert_eq!(&img.pixels[..3], &[9, 10, 11]);
        assert_eq!(img.cell(2, 0), 2);
    }

    #[test]
    fn comments_and_maxval() {
        let img = GrayImage::parse(b"P2\n# a comment\n2 1\n15\n0 15\n").unwrap();
        assert_eq!(img.pixels, vec![0, 255]);
        assert!(GrayImage::parse(b"P3\n1 1\n255\n0\n").is_err());
        assert!(GrayImage::parse(b"P5\n4 4\n255\n\0\0").is_err());
    }

    #[test]
    fn coverage_overlay_reads_back_as_free() {
        let world = WorldMap::empty_square(0.5, 0.1);
        let mut cov = CoverageGrid::new(world.spec);
        cov.cover(world.spec.index(2, 2));
        let img = coverage_image(&world, &cov);
        assert_eq!(img.cell(2, 2), PIXEL_COVERED);
        assert_eq!(world_from_image(&img, 0.1, world.spec.origin).unwrap(), world);
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("room.pgm");
        let world = WorldMap::empty_square(2.0, 0.0375);
        save_world(&path, &world, Some("mow"), &[Pose::new(1.0, 1.0, 0.5)]).unwrap();
        let (back, side) = load_world(&path).unwrap();
        assert_eq!(back, world);
        assert_eq!(side.profile.as_deref(), Some("mow"));
        assert_eq!(side.starts(), vec![Pose::new(1.0, 1.0, 0.5)]);
    }
}
