//! Policy-gradient stack: MLP with hand-written backprop, Gaussian and
//! categorical heads, GAE, clipped PPO and the two-family training loop.

pub mod checkpoint;
pub mod gae;
pub mod mlp;
pub mod policy;
pub mod ppo;
pub mod rollout;
pub mod trainer;

use thiserror::Error;

pub use checkpoint::{Checkpoint, RngState};
pub use gae::gae;
pub use mlp::{Mlp, MlpCache};
pub use policy::{squash, squash_log_jacobian, CategoricalPolicy, GaussianPolicy};
pub use ppo::{ppo_update, Actions, Batch, OptimizerKind, Optimizers, Policy, TrainerConfig, UpdateStats};
pub use rollout::{derive_seed, run_episode, ActMode, Actors, EpisodeRecord, LpControl, Trajectory};
pub use trainer::{evaluate, EvalConfig, FamilyModel, IterationLog, Models, Schedule, Trainer, TrainingConfig};

#[derive(Debug, Error, PartialEq)]
pub enum RlError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
