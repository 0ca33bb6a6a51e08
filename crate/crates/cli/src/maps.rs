//! Map arguments: graymap files with sidecars, or maps built on the fly.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use coverage_core::gridworld::FINE_RESOLUTION;
use coverage_core::mapgen::{generate_random_map, random_start_pose, MapTask};
use coverage_core::mapio::load_world;
use coverage_core::rng::{stream, Subsystem};
use coverage_core::{Pose, ProfileKind, TaskProfile, WorldMap};

use crate::CliError;

/// Where an evaluation map comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MapArg {
    File(PathBuf),
    /// Empty square room of the given side, meters.
    Empty(f64),
    /// Procedural map for the profile's task.
    Random(u64),
}

impl FromStr for MapArg {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CliError::MapArg(s.to_string());
        if let Some(side) = s.strip_prefix("empty:") {
            let side: f64 = side.parse().map_err(|_| bad())?;
            if !(side > 0.0 && side.is_finite()) {
                return Err(bad());
            }
            Ok(Self::Empty(side))
        } else if let Some(seed) = s.strip_prefix("random:") {
            Ok(Self::Random(seed.parse().map_err(|_| bad())?))
        } else if s.is_empty() {
            Err(bad())
        } else {
            Ok(Self::File(PathBuf::from(s)))
        }
    }
}

impl fmt::Display for MapArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::File(p) => write!(f, "{}", p.display()),
            Self::Empty(side) => write!(f, "empty:{side}"),
            Self::Random(seed) => write!(f, "random:{seed}"),
        }
    }
}

/// A loaded map with the start pose an episode uses.
#[derive(Debug, Clone)]
pub struct MapInstance {
    pub id: String,
    pub world: Arc<WorldMap>,
    pub start: Pose,
}

fn file_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Loads or builds `arg`. The start is the first stored start pose when the
/// file has one, otherwise a seeded random free pose.
pub fn load_map(arg: &MapArg, profile: ProfileKind, seed: u64) -> Result<MapInstance, CliError> {
    let radius = TaskProfile::for_kind(profile).agent_radius;
    let (id, world, stored) = match arg {
        MapArg::File(path) => {
            if !path.is_file() {
                return Err(CliError::Usage(format!("map file {} does not exist", path.display())));
            }
            let (world, sidecar) = load_world(path)?;
            (file_id(path), world, sidecar.starts().first().copied())
        }
        MapArg::Empty(side) => (format!("empty-{side}"), WorldMap::empty_square(*side, FINE_RESOLUTION), None),
        MapArg::Random(map_seed) => (format!("random-{map_seed}"), generate_random_map(*map_seed, MapTask::from(profile)).world, None),
    };
    let start = match stored {
        Some(p) => p,
        None => random_start_pose(&world, radius, &mut stream(seed, Subsystem::Episode)),
    };
    Ok(MapInstance { id, world: Arc::new(world), start })
}
