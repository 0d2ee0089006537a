//! Epsilon-prediction training: loss and gradients, AdamW with
//! warmup-then-cosine learning rate, and resumable checkpoints.

use crate::diffusion::mlp::MlpDenoiser;
use crate::diffusion::schedule::{make_schedule, NoiseSchedule, ScheduleKind};
use crate::diffusion::DiffusionError;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub trait Denoiser {
    /// Predicts the noise component of each row of `noisy` (one chunk per
    /// row) at per-row timesteps `ts`, conditioned on the matching row of
    /// `cond`. Output has the shape of `noisy`.
    fn predict_batch(&self, noisy: &DMatrix<f64>, ts: &[usize], cond: &DMatrix<f64>)
        -> DMatrix<f64>;

    /// Width of the flattened chunks this denoiser operates on.
    fn output_dim(&self) -> usize;
}

pub trait TrainableDenoiser: Denoiser {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Chain-rules a loss gradient at the output back to every parameter.
    fn grad(
        &self,
        noisy: &DMatrix<f64>,
        ts: &[usize],
        cond: &DMatrix<f64>,
        dldy: &DMatrix<f64>,
    ) -> Vec<f64>;
}

/// Draws a timestep and noise per item, forms the noised chunks, and returns
/// the mean squared noise-prediction error with its parameter gradient.
pub fn loss_and_grad(
    denoiser: &impl TrainableDenoiser,
    cond: &DMatrix<f64>,
    chunks: &DMatrix<f64>,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha12Rng,
) -> Result<(f64, Vec<f64>), DiffusionError> {
    let (b, d) = (chunks.nrows(), chunks.ncols());
    assert!(b > 0, "empty batch");
    let ts: Vec<usize> = (0..b).map(|_| rng.random_range(1..=schedule.t_max)).collect();
    let eps = DMatrix::from_fn(b, d, |_, _| StandardNormal.sample(rng));

    let mut noisy = DMatrix::zeros(b, d);
    for r in 0..b {
        let ab = schedule.alpha_bar(ts[r]);
        let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
        for c in 0..d {
            noisy[(r, c)] = signal * chunks[(r, c)] + noise * eps[(r, c)];
        }
    }

    let y = denoiser.predict_batch(&noisy, &ts, cond);
    let resid = &y - &eps;
    let loss = resid.iter().map(|v| v * v).sum::<f64>() / (b * d) as f64;
    if !loss.is_finite() {
        return Err(DiffusionError::NonFiniteLoss { step: 0 });
    }
    let scale = 2.0 / (b * d) as f64;
    let dldy = resid.map(|v| v * scale);
    Ok((loss, denoiser.grad(&noisy, &ts, cond, &dldy)))
}

/// Decoupled-weight-decay Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub updates: usize,
}

impl AdamW {
    pub fn new(param_count: usize) -> Self {
        AdamW {
            beta1: 0.95,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            updates: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.m.len());
        self.updates += 1;
        let t = self.updates as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// Linear warmup to `base`, then cosine decay to zero at `total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub warmup: usize,
    pub total: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { base: 3e-4, warmup: 2000, total: 50_000 }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.base * step as f64 / self.warmup as f64;
        }
        if step >= self.total {
            return 0.0;
        }
        let u = (step - self.warmup) as f64 / (self.total - self.warmup) as f64;
        0.5 * self.base * (1.0 + (std::f64::consts::PI * u).cos())
    }
}

#[derive(Debug)]
pub struct TrainState {
    pub step: usize,
    pub seed: u64,
    pub opt: AdamW,
    pub lr: LrSchedule,
    pub rng: ChaCha12Rng,
}

impl TrainState {
    pub fn new(param_count: usize, lr: LrSchedule, seed: u64) -> Self {
        TrainState {
            step: 0,
            seed,
            opt: AdamW::new(param_count),
            lr,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }
}

/// One optimization step; returns the pre-update loss.
pub fn train_step(
    state: &mut TrainState,
    denoiser: &mut MlpDenoiser,
    cond: &DMatrix<f64>,
    chunks: &DMatrix<f64>,
    schedule: &NoiseSchedule,
) -> Result<f64, DiffusionError> {
    let (loss, grad) = loss_and_grad(denoiser, cond, chunks, schedule, &mut state.rng)
        .map_err(|e| match e {
            DiffusionError::NonFiniteLoss { .. } => {
                DiffusionError::NonFiniteLoss { step: state.step }
            }
            other => other,
        })?;
    let lr = state.lr.lr_at(state.step);
    state.opt.update(denoiser.params_mut(), &grad, lr);
    state.step += 1;
    Ok(loss)
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    schema_version: u32,
    chunk_dim: usize,
    cond_dim: usize,
    temb_dim: usize,
    hidden: usize,
    /// Down-channel plan of the full-scale network this net stands in for;
    /// informational only.
    full_scale_down_channels: [usize; 3],
    schedule_kind: ScheduleKind,
    t_max: usize,
    lr: LrSchedule,
    step: usize,
    seed: u64,
    optimizer_updates: usize,
}

/// Everything needed to resume training or run inference.
#[derive(Debug)]
pub struct Checkpoint {
    pub denoiser: MlpDenoiser,
    pub state: TrainState,
    pub schedule: NoiseSchedule,
}

pub fn save_checkpoint(
    dir: &Path,
    denoiser: &MlpDenoiser,
    state: &TrainState,
    schedule: &NoiseSchedule,
) -> Result<(), DiffusionError> {
    fs::create_dir_all(dir)?;
    let manifest = CheckpointManifest {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        chunk_dim: denoiser.chunk_dim,
        cond_dim: denoiser.cond_dim,
        temb_dim: denoiser.temb_dim,
        hidden: denoiser.hidden,
        full_scale_down_channels: [256, 512, 1024],
        schedule_kind: schedule.kind,
        t_max: schedule.t_max,
        lr: state.lr,
        step: state.step,
        seed: state.seed,
        optimizer_updates: state.opt.updates,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;

    let mut params = Vec::with_capacity(denoiser.params().len() * 4);
    for v in denoiser.params() {
        params.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(dir.join("params.bin"), params)?;

    let mut opt = Vec::with_capacity(state.opt.m.len() * 16);
    for v in state.opt.m.iter().chain(&state.opt.v) {
        opt.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join("opt.bin"), opt)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, DiffusionError> {
    let manifest: CheckpointManifest =
        serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(DiffusionError::SchemaMismatch {
            expected: CHECKPOINT_SCHEMA_VERSION,
            found: manifest.schema_version,
        });
    }

    let param_bytes = fs::read(dir.join("params.bin"))?;
    if param_bytes.len() % 4 != 0 {
        return Err(DiffusionError::Malformed("params.bin not a whole number of f32".into()));
    }
    let params: Vec<f64> = param_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let denoiser = {
        let expect = MlpDenoiser::new(
            manifest.chunk_dim,
            manifest.cond_dim,
            manifest.hidden,
            manifest.temb_dim,
            0,
        )
        .param_count();
        if params.len() != expect {
            return Err(DiffusionError::Malformed(format!(
                "params.bin holds {} values, manifest implies {expect}",
                params.len()
            )));
        }
        MlpDenoiser::from_params(
            manifest.chunk_dim,
            manifest.cond_dim,
            manifest.hidden,
            manifest.temb_dim,
            params,
        )
    };

    let opt_bytes = fs::read(dir.join("opt.bin"))?;
    let n = denoiser.param_count();
    if opt_bytes.len() != n * 16 {
        return Err(DiffusionError::Malformed("opt.bin length mismatch".into()));
    }
    let floats: Vec<f64> = opt_bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mut opt = AdamW::new(n);
    opt.m = floats[..n].to_vec();
    opt.v = floats[n..].to_vec();
    opt.updates = manifest.optimizer_updates;

    let schedule = make_schedule(manifest.t_max, manifest.schedule_kind)?;
    // The in-flight RNG stream is not stored; resume derives a fresh stream
    // from the seed and the step count.
    let mut state = TrainState::new(n, manifest.lr, manifest.seed);
    state.step = manifest.step;
    state.opt = opt;
    state.rng = ChaCha12Rng::seed_from_u64(manifest.seed ^ (manifest.step as u64).wrapping_mul(0x9E3779B97F4A7C15));
    Ok(Checkpoint { denoiser, state, schedule })
}
