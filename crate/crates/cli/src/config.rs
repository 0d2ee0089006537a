//! Pipeline configuration: one TOML file drives every subcommand.
//!
//! Unknown keys are rejected so typos fail loudly instead of silently
//! falling back to defaults. Every section may be omitted entirely, in which
//! case its defaults apply.

use std::fs;
use std::path::{Path, PathBuf};

use dexflow_core::capture::CameraIntrinsics;
use dexflow_core::dataset::{DatasetConfig, SamplerConfig};
use dexflow_core::diffusion::{LrSchedule, ScheduleKind};
use dexflow_core::pipeline::FilterRules;
use dexflow_core::retarget::IkParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed; every stage derives its own streams from it.
    pub seed: u64,
    pub paths: Paths,
    pub camera: CameraConfig,
    pub cube: CubeConfig,
    pub world: WorldConfig,
    pub synth: SynthConfig,
    pub filter: FilterSection,
    pub smooth: SmoothConfig,
    pub ik: IkConfig,
    pub dataset: DatasetSection,
    pub sampler: SamplerSection,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            camera: CameraConfig::default(),
            cube: CubeConfig::default(),
            world: WorldConfig::default(),
            synth: SynthConfig::default(),
            filter: FilterSection::default(),
            smooth: SmoothConfig::default(),
            ik: IkConfig::default(),
            dataset: DatasetSection::default(),
            sampler: SamplerSection::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub raw_dir: PathBuf,
    pub processed_dir: PathBuf,
    pub dataset_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            raw_dir: "data/raw".into(),
            processed_dir: "data/processed".into(),
            dataset_dir: "data/datasets".into(),
            checkpoint_dir: "data/checkpoints".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }
}

impl CameraConfig {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CubeConfig {
    pub edge_m: f64,
    /// Cube pose in the wrist frame (translation only).
    pub wrist_offset_m: [f64; 3],
}

impl Default for CubeConfig {
    fn default() -> Self {
        CubeConfig { edge_m: 0.06, wrist_offset_m: [0.0, 0.0, -0.05] }
    }
}

/// How the planar toy world sits in front of the camera: agent coordinates
/// in [-1,1]^2 map to wrist positions on a tilted plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub base_m: [f64; 3],
    pub tilt_deg: f64,
    /// Meters of wrist motion per agent unit.
    pub scale_m: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig { base_m: [0.0, 0.0, 0.6], tilt_deg: 35.0, scale_m: 0.2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub human_episodes: usize,
    pub robot_episodes: usize,
    pub frames: usize,
    pub rate_hz: f64,
    /// Corner pixel noise for handheld ("human") capture.
    pub human_noise_px: f64,
    pub human_dropout: f64,
    /// Corner pixel noise for on-robot capture.
    pub robot_noise_px: f64,
    pub robot_dropout: f64,
    pub embed_dim: usize,
    /// Shared across the dataset and any later evaluation.
    pub embed_seed: u64,
    pub finger_amp: f64,
    pub finger_freq_hz: f64,
    /// Largest scripted move per frame, agent units.
    pub expert_step: f64,
    /// Standard deviation of per-axis noise added to scripted moves.
    pub expert_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            human_episodes: 24,
            robot_episodes: 8,
            frames: 120,
            rate_hz: 30.0,
            human_noise_px: 0.3,
            human_dropout: 0.05,
            robot_noise_px: 0.1,
            robot_dropout: 0.0,
            embed_dim: 8,
            embed_seed: 7,
            finger_amp: 0.5,
            finger_freq_hz: 0.4,
            expert_step: 0.05,
            expert_jitter: 0.004,
        }
    }
}

/// Mirror of the library's filter rules with strict key checking.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub min_track_ratio: f64,
    pub min_frames: usize,
    pub jump_max_m: f64,
    pub max_gap_fill: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        let r = FilterRules::default();
        FilterSection {
            min_track_ratio: r.min_track_ratio,
            min_frames: r.min_frames,
            jump_max_m: r.jump_max_m,
            max_gap_fill: r.max_gap_fill,
        }
    }
}

impl FilterSection {
    pub fn rules(&self) -> FilterRules {
        FilterRules {
            min_track_ratio: self.min_track_ratio,
            min_frames: self.min_frames,
            jump_max_m: self.jump_max_m,
            max_gap_fill: self.max_gap_fill,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothConfig {
    pub sigma_frames: f64,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        SmoothConfig { sigma_frames: dexflow_core::pipeline::DEFAULT_SIGMA_FRAMES }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IkConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub residual_tol_m: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        let p = IkParams::default();
        IkConfig { lambda: p.lambda, max_iters: p.max_iters, residual_tol_m: p.residual_tol_m }
    }
}

impl IkConfig {
    pub fn params(&self) -> IkParams {
        IkParams {
            lambda: self.lambda,
            max_iters: self.max_iters,
            residual_tol_m: self.residual_tol_m,
            ..IkParams::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub chunk_len: usize,
    pub history: usize,
    pub step: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        DatasetSection { chunk_len: d.chunk_len, history: d.history, step: d.step }
    }
}

impl DatasetSection {
    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig { chunk_len: self.chunk_len, history: self.history, step: self.step }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub robot_weight: u32,
    pub human_weight: u32,
    pub batch: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection { robot_weight: 1, human_weight: 2, batch: 256 }
    }
}

impl SamplerSection {
    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig { w_r: self.robot_weight, w_h: self.human_weight, batch: self.batch, seed }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub base_lr: f64,
    pub warmup: usize,
    pub t_max: usize,
    pub schedule: ScheduleKind,
    pub hidden: usize,
    pub temb_dim: usize,
    pub checkpoint_every: usize,
    /// Steps between loss log lines.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 5000,
            base_lr: 3e-4,
            warmup: 2000,
            t_max: 50,
            schedule: ScheduleKind::Cosine,
            hidden: 128,
            temb_dim: 8,
            checkpoint_every: 1000,
            log_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn lr_schedule(&self) -> LrSchedule {
        LrSchedule { base: self.base_lr, warmup: self.warmup, total: self.steps }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Environment steps per episode.
    pub horizon: usize,
    /// Actions executed from each sampled chunk before replanning.
    pub exec_horizon: usize,
    pub ddim_steps: usize,
    /// Success: final distance to goal at most this, agent units.
    pub success_radius: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 50,
            horizon: 120,
            exec_horizon: 12,
            ddim_steps: 16,
            success_radius: 0.05,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source: Box::new(source) })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.synth.frames == 0 {
            return bad("synth.frames must be positive".into());
        }
        if self.synth.rate_hz <= 0.0 {
            return bad(format!("synth.rate_hz must be positive, got {}", self.synth.rate_hz));
        }
        if !(0.0..1.0).contains(&self.synth.human_dropout)
            || !(0.0..1.0).contains(&self.synth.robot_dropout)
        {
            return bad("synth dropout rates must be in [0, 1)".into());
        }
        if self.synth.embed_dim == 0 {
            return bad("synth.embed_dim must be positive".into());
        }
        if self.synth.expert_step <= 0.0 {
            return bad("synth.expert_step must be positive".into());
        }
        if self.cube.edge_m <= 0.0 {
            return bad(format!("cube.edge_m must be positive, got {}", self.cube.edge_m));
        }
        if self.world.scale_m <= 0.0 {
            return bad(format!("world.scale_m must be positive, got {}", self.world.scale_m));
        }
        if self.dataset.chunk_len == 0 {
            return bad("dataset.chunk_len must be positive".into());
        }
        if self.dataset.step == 0 {
            return bad("dataset.step must be positive".into());
        }
        if self.sampler.robot_weight + self.sampler.human_weight == 0 {
            return bad("sampler weights must not both be zero".into());
        }
        if self.sampler.batch == 0 {
            return bad("sampler.batch must be positive".into());
        }
        if self.train.steps == 0 {
            return bad("train.steps must be positive".into());
        }
        if self.train.t_max < 2 {
            return bad(format!("train.t_max must be at least 2, got {}", self.train.t_max));
        }
        if self.train.hidden == 0 || self.train.temb_dim == 0 {
            return bad("train.hidden and train.temb_dim must be positive".into());
        }
        if self.eval.episodes == 0 {
            return bad("eval.episodes must be positive".into());
        }
        if self.eval.exec_horizon == 0 || self.eval.exec_horizon > self.dataset.chunk_len {
            return bad(format!(
                "eval.exec_horizon must be in 1..={}, got {}",
                self.dataset.chunk_len, self.eval.exec_horizon
            ));
        }
        if self.eval.ddim_steps == 0 || self.eval.ddim_steps > self.train.t_max {
            return bad(format!(
                "eval.ddim_steps must be in 1..={}, got {}",
                self.train.t_max, self.eval.ddim_steps
            ));
        }
        if self.eval.success_radius <= 0.0 {
            return bad("eval.success_radius must be positive".into());
        }
        Ok(())
    }
}
