//! Episode orchestration on top of the simulator: runs learned, classical or
//! random policies, derives timing and collision metrics from episode logs,
//! renders trajectories and aggregates evaluation summaries.

pub mod maps;
pub mod metrics;
pub mod render;
pub mod runner;
pub mod summary;

use thiserror::Error;

pub use maps::{load_map, MapArg, MapInstance};
pub use metrics::{compute_metrics, time_to_coverage, Metrics};
pub use render::{render_trajectory, RgbImage};
pub use runner::{run_episode, ActorPolicy, Policy};
pub use summary::{read_summary, write_summary, SummaryRow, SUMMARY_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("checkpoint does not fit the environment: {0}")]
    Incompatible(String),
    #[error("invalid map argument {0:?}; expected a graymap path, empty:<side> or random:<seed>")]
    MapArg(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] coverage_core::CoreError),
    #[error(transparent)]
    Network(#[from] coverage_nn::NnError),
    #[error(transparent)]
    Training(#[from] coverage_sac::SacError),
    #[error(transparent)]
    Baseline(#[from] coverage_baselines::BaselineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
