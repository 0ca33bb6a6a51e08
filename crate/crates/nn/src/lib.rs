//! Small differentiable networks for coverage policies: fully connected and
//! grouped convolution layers with hand-written backward passes, the MLP, CNN
//! and scale-grouped CNN actor/critic architectures, a tanh-Gaussian policy
//! head, Adam and a checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod policy;
pub mod scalar;

use thiserror::Error;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::Checkpoint;
pub use network::{param_count, Arch, ArchitectureSpec, ForwardCache, HeadKind, Layout, Network};
pub use policy::{mean_action, sample_squashed, squashed_backward, SquashedSample};
pub use scalar::Scalar;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{what}: expected {expected} values, got {actual}")]
    ShapeMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("invalid architecture: {0}")]
    InvalidSpec(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
