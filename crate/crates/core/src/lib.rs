//! Simulation side of the coverage path planning workbench: the ground-truth
//! world and agent kinematics, the agent's accumulated map knowledge,
//! egocentric multi-scale observations, rewards, procedural maps and the
//! episode loop that ties them together.

pub mod env;
pub mod episode;
pub mod gridworld;
pub mod mapgen;
pub mod mapio;
pub mod mapping;
pub mod obs;
pub mod rewards;
pub mod rng;

use thiserror::Error;

pub use env::{CoverageEnv, EnvConfig, StepOutcome};
pub use episode::{EpisodeHeader, EpisodeLog, StepRecord};
pub use gridworld::{Action, GridSpec, LidarScan, NoiseModel, NoiseSource, Pose, ProfileKind, TaskProfile, WorldMap};
pub use mapping::{CoverageGrid, CoverageStats, FrontierGrid, KnownMap};
pub use obs::{EncoderConfig, Observation};
pub use rewards::{DoneReason, RewardBreakdown, RewardParams};

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: resolution {resolution}, {width}x{height} cells")]
    InvalidGrid { resolution: f64, width: usize, height: usize },
    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid task profile: {0}")]
    InvalidProfile(String),
    #[error("noise level must be 0-3, got {0}")]
    InvalidNoiseLevel(u8),
    #[error("start pose ({x:.3}, {y:.3}) is inside an obstacle")]
    StartBlocked { x: f64, y: f64 },
    #[error("malformed map file: {0}")]
    MapFormat(String),
    #[error("malformed episode log: {0}")]
    LogFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
