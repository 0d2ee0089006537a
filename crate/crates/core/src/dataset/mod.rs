//! Training datasets: transition construction from processed episodes,
//! on-disk storage with checksums, and the fixed-ratio two-source batch
//! sampler used for co-training.

use crate::pipeline::PipelineError;
use thiserror::Error;

pub mod sampler;
pub mod store;
pub mod transitions;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("episode needs at least {needed} frames for this horizon, got {got}")]
    EpisodeTooShort { needed: usize, got: usize },
    #[error("dataset has no transitions")]
    EmptyDataset,
    #[error("dataset schema version {found}, expected {expected}")]
    SchemaMismatch { expected: u32, found: u32 },
    #[error("corrupt dataset file: {0}")]
    CorruptFile(String),
    #[error("episodes disagree: {0}")]
    InconsistentEpisodes(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub use sampler::{gather_batch, Batch, CoSampler, SamplerConfig};
pub use store::{load_dataset, save_dataset, DATASET_SCHEMA_VERSION};
pub use transitions::{build_dataset, build_transitions, Dataset, DatasetConfig, Transition};
