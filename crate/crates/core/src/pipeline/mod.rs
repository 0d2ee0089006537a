//! Episode processing: filtering, gap repair, clipping, smoothing, relative
//! actions, and per-embodiment normalization.

use thiserror::Error;

pub mod actions;
pub mod episode;
pub mod filter;
pub mod process;
pub mod smooth;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("episode has no frames")]
    EmptyEpisode,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("normalization stats fitted on {stats} data applied to {data} data")]
    EmbodimentMismatch { stats: Embodiment, data: Embodiment },
    #[error(transparent)]
    Pose(#[from] crate::pose::PoseError),
}

pub use actions::{
    chain_relative_actions, clip_percentiles, compute_relative_actions, denormalize,
    normalize_apply, normalize_fit, percentile, ClipResult, NormalizationStats,
};
pub use episode::{
    load_processed_episode, load_raw_episode, save_processed_episode, save_raw_episode,
    Embodiment, EpisodeIoError, GroundTruth, HandFrame, ProcessedEpisode, ProcessedHand,
    RawEpisode, RawFrame, ARM_DIM, FINGERTIP_DIM, SCHEMA_VERSION,
};
pub use process::{process_episode, ProcessConfig, ProcessOutcome};
pub use filter::{fill_gaps, filter_episode, track_ratio, FilterReport, FilterRules};
pub use smooth::{gaussian_kernel, gaussian_smooth, smooth_scalar_series, DEFAULT_SIGMA_FRAMES};
