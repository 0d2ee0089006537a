//! Subcommand implementations and the context they share.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use dexflow_core::capture::frame_seed;
use dexflow_core::dataset::{
    gather_batch, load_dataset, Batch, Dataset, DatasetError, SamplerConfig,
};
use dexflow_core::diffusion::DiffusionError;
use dexflow_core::pipeline::{Embodiment, EpisodeIoError, PipelineError};
use nalgebra::DMatrix;
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};

pub mod build;
pub mod eval;
pub mod process;
pub mod sample;
pub mod stats;
pub mod synth;
pub mod train;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no usable data: {0}")]
    NoData(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    EpisodeIo(#[from] EpisodeIoError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 3 when a stage is
    /// left with no data, 4 for numeric failure during training, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::NoData(_) => 3,
            CliError::Dataset(DatasetError::EmptyDataset) => 3,
            CliError::Diffusion(DiffusionError::NonFiniteLoss { .. }) => 4,
            _ => 1,
        }
    }
}

/// Seed-stream salts: every stage draws from its own stream derived from the
/// master seed, so stages can be rerun or reordered without perturbing each
/// other.
pub const STREAM_SYNTH_HUMAN: u64 = 1;
pub const STREAM_SYNTH_ROBOT: u64 = 2;
pub const STREAM_SAMPLER: u64 = 3;
pub const STREAM_NET: u64 = 4;
pub const STREAM_TRAIN: u64 = 5;
pub const STREAM_EVAL: u64 = 6;

/// Resolved configuration plus the master seed and output root every command
/// works under.
pub struct Ctx {
    pub cfg: PipelineConfig,
    pub seed: u64,
    pub root: PathBuf,
}

impl Ctx {
    pub fn stream(&self, salt: u64) -> u64 {
        frame_seed(self.seed, salt)
    }

    pub fn raw_dir(&self) -> PathBuf {
        self.root.join(&self.cfg.paths.raw_dir)
    }

    pub fn processed_dir(&self) -> PathBuf {
        self.root.join(&self.cfg.paths.processed_dir)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join(&self.cfg.paths.dataset_dir)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.root.join(&self.cfg.paths.checkpoint_dir)
    }
}

/// Subdirectories of `root` in name order; the stable iteration order keeps
/// every stage deterministic.
pub fn episode_dirs(root: &Path) -> io::Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .collect::<io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Clears and recreates a directory this tool owns, so reruns never see
/// stale output.
pub fn fresh_dir(dir: &Path) -> io::Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)
}

/// Datasets required by the configured co-training ratio. A source with zero
/// weight is loaded only if present (its stats may still be wanted), never
/// required.
pub struct TrainingData {
    pub robot: Option<Dataset>,
    pub human: Option<Dataset>,
}

impl TrainingData {
    pub fn robot_len(&self) -> usize {
        self.robot.as_ref().map_or(0, |d| d.len())
    }

    pub fn human_len(&self) -> usize {
        self.human.as_ref().map_or(0, |d| d.len())
    }

    /// Shape reference; robot wins when both are present.
    pub fn primary(&self) -> &Dataset {
        self.robot.as_ref().or(self.human.as_ref()).expect("at least one dataset loaded")
    }

    /// Materializes a batch. A missing source is substituted by the other;
    /// batches never reference a source whose weight is zero, so the
    /// substitute is never actually indexed.
    pub fn gather(&self, batch: &Batch) -> Result<(DMatrix<f64>, DMatrix<f64>), DatasetError> {
        let robot = self.robot.as_ref().or(self.human.as_ref()).unwrap();
        let human = self.human.as_ref().or(self.robot.as_ref()).unwrap();
        gather_batch(batch, robot, human)
    }
}

pub fn load_training_data(ctx: &Ctx, scfg: &SamplerConfig) -> Result<TrainingData, CliError> {
    let load = |e: Embodiment, required: bool| -> Result<Option<Dataset>, CliError> {
        let dir = ctx.dataset_dir().join(e.to_string());
        if dir.is_dir() {
            Ok(Some(load_dataset(&dir)?))
        } else if required {
            Err(CliError::NoData(format!(
                "{e} dataset missing at {}; run `dexflow build` first",
                dir.display()
            )))
        } else {
            Ok(None)
        }
    };
    let robot = load(Embodiment::Robot, scfg.robot_per_batch() > 0)?;
    let human = load(Embodiment::Human, scfg.human_per_batch() > 0)?;
    if robot.is_none() && human.is_none() {
        return Err(CliError::NoData(format!(
            "no datasets under {}; run `dexflow build` first",
            ctx.dataset_dir().display()
        )));
    }
    Ok(TrainingData { robot, human })
}
