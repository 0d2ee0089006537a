//! Library for turning raw dexterous-capture logs into training-ready
//! imitation datasets and for training diffusion action-chunk policies on
//! them.
//!
//! Pipeline overview:
//!
//! 1. [`capture`]: estimate wrist poses from marker-cube corner observations
//!    (or synthesize episodes with known ground truth).
//! 2. [`pipeline`]: filter, gap-fill, outlier-clip and smooth trajectories,
//!    then derive relative-pose actions.
//! 3. [`retarget`]: map glove fingertip positions to hand joint targets.
//! 4. [`dataset`]: normalize per embodiment, slice into observation/action
//!    chunks, store to disk, and sample ratio-weighted training batches.
//! 5. [`diffusion`]: train a denoising action-chunk policy and sample from it.

pub mod pose;
pub mod tol;

pub mod capture;
pub mod dataset;
pub mod diffusion;
pub mod pipeline;
pub mod retarget;

#[cfg(test)]
pub(crate) mod testutil;
