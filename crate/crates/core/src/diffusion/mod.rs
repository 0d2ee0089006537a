//! Diffusion action-chunk generation: noise schedules, forward noising, an
//! epsilon-prediction loss with hand-written gradients for the reference
//! network, AdamW training, and few-step deterministic sampling.

use thiserror::Error;

pub mod mlp;
pub mod sampling;
pub mod schedule;
pub mod train;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("checkpoint schema version {found}, expected {expected}")]
    SchemaMismatch { expected: u32, found: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub use mlp::MlpDenoiser;
pub use sampling::{ddim_sample, PointMassDenoiser};
pub use schedule::{add_noise, make_schedule, NoiseSchedule, ScheduleKind};
pub use train::{
    load_checkpoint, loss_and_grad, save_checkpoint, train_step, AdamW, Checkpoint, Denoiser,
    LrSchedule, TrainState, TrainableDenoiser,
};
