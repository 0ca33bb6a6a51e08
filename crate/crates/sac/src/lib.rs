//! Soft actor-critic with twin critics, target networks, automatic
//! temperature tuning and a replay buffer, trained on the coverage
//! environment under a map curriculum.

pub mod agent;
pub mod config;
pub mod replay;
pub mod train;

use thiserror::Error;

pub use agent::{actor_loss_grad, actor_loss_grad_cached, critic_loss_grad, critic_targets, gaussian_noise, polyak_update, temperature_grad, ActorLoss, SacAgent, UpdateStats};
pub use config::{MapSource, NetworkConfig, SacConfig, TrainConfig};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{final_checkpoint, train, EpisodeSummary, Trainer};

#[derive(Debug, Error)]
pub enum SacError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] coverage_nn::NnError),
    #[error(transparent)]
    Env(#[from] coverage_core::CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
