//! Relative-pose actions, percentile clipping, and per-embodiment
//! normalization.

use crate::pipeline::episode::Embodiment;
use crate::pipeline::PipelineError;
use crate::pose::{lift, relative, Pose, PoseError, RelativePose};
use serde::{Deserialize, Serialize};

pub const CLIP_LO_PCT: f64 = 2.0;
pub const CLIP_HI_PCT: f64 = 97.0;

/// Per-step arm actions: action `i` is the relative pose from frame `i` to
/// frame `i+1`, flattened as 3 translation + 6 rotation components.
pub fn compute_relative_actions(poses: &[Pose]) -> Result<Vec<[f64; 9]>, PipelineError> {
    if poses.len() < 2 {
        return Err(PipelineError::TooFewSamples { needed: 2, got: poses.len() });
    }
    Ok(poses.windows(2).map(|w| relative(&w[0], &w[1]).flatten()).collect())
}

/// Rebuilds the pose series by composing actions onto `start`. Output length
/// is `actions.len() + 1`. Fails if a clipped rotation block is no longer a
/// valid frame.
pub fn chain_relative_actions(start: &Pose, actions: &[[f64; 9]]) -> Result<Vec<Pose>, PoseError> {
    let mut poses = Vec::with_capacity(actions.len() + 1);
    poses.push(start.clone());
    for a in actions {
        let step = lift(&RelativePose::from_flat(a))?;
        let next = poses.last().unwrap().compose(&step);
        poses.push(next);
    }
    Ok(poses)
}

/// Linear-interpolation percentile of an ascending-sorted slice: rank
/// `r = pct/100 · (n−1)`, value `lo + frac·(hi−lo)` between the bracketing
/// order statistics.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=100.0).contains(&pct));
    let r = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = r.floor() as usize;
    let hi = r.ceil() as usize;
    let frac = r - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipResult {
    pub values: Vec<Vec<f64>>,
    /// Per dimension (low, high) percentile bounds.
    pub bounds: Vec<[f64; 2]>,
}

/// Clamps each dimension of a sample series into its own percentile bounds.
pub fn clip_percentiles(
    series: &[Vec<f64>],
    lo_pct: f64,
    hi_pct: f64,
) -> Result<ClipResult, PipelineError> {
    if series.len() < 2 {
        return Err(PipelineError::TooFewSamples { needed: 2, got: series.len() });
    }
    let dims = series[0].len();
    let mut bounds = Vec::with_capacity(dims);
    for d in 0..dims {
        let mut col: Vec<f64> = series.iter().map(|s| s[d]).collect();
        col.sort_by(f64::total_cmp);
        bounds.push([percentile(&col, lo_pct), percentile(&col, hi_pct)]);
    }
    let values = series
        .iter()
        .map(|s| s.iter().zip(&bounds).map(|(v, b)| v.clamp(b[0], b[1])).collect())
        .collect();
    Ok(ClipResult { values, bounds })
}

/// Scaling bounds fitted on one embodiment's actions. Never shared across
/// embodiments; `normalize_apply` rejects mismatched data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub embodiment: Embodiment,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl NormalizationStats {
    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    /// A dimension is constant when its bounds coincide; it maps to 0 and
    /// denormalizes back to the bound.
    pub fn is_constant(&self, d: usize) -> bool {
        self.hi[d] - self.lo[d] <= 1e-12
    }
}

/// Fits per-dimension percentile bounds (p2, p97) over a dataset's actions.
pub fn normalize_fit(
    actions: &[Vec<f64>],
    embodiment: Embodiment,
) -> Result<NormalizationStats, PipelineError> {
    if actions.len() < 2 {
        return Err(PipelineError::TooFewSamples { needed: 2, got: actions.len() });
    }
    let dims = actions[0].len();
    let mut lo = Vec::with_capacity(dims);
    let mut hi = Vec::with_capacity(dims);
    for d in 0..dims {
        let mut col: Vec<f64> = actions.iter().map(|a| a[d]).collect();
        col.sort_by(f64::total_cmp);
        lo.push(percentile(&col, CLIP_LO_PCT));
        hi.push(percentile(&col, CLIP_HI_PCT));
    }
    Ok(NormalizationStats { embodiment, lo, hi })
}

fn check_apply(
    x: &[f64],
    stats: &NormalizationStats,
    data: Embodiment,
) -> Result<(), PipelineError> {
    if data != stats.embodiment {
        return Err(PipelineError::EmbodimentMismatch { stats: stats.embodiment, data });
    }
    if x.len() != stats.dims() {
        return Err(PipelineError::DimensionMismatch { expected: stats.dims(), got: x.len() });
    }
    Ok(())
}

/// Maps each dimension into [-1, 1]: `y = 2(x - lo)/(hi - lo) - 1`, clamped.
pub fn normalize_apply(
    x: &[f64],
    stats: &NormalizationStats,
    data: Embodiment,
) -> Result<Vec<f64>, PipelineError> {
    check_apply(x, stats, data)?;
    Ok(x.iter()
        .enumerate()
        .map(|(d, v)| {
            if stats.is_constant(d) {
                0.0
            } else {
                (2.0 * (v - stats.lo[d]) / (stats.hi[d] - stats.lo[d]) - 1.0).clamp(-1.0, 1.0)
            }
        })
        .collect())
}

pub fn denormalize(
    y: &[f64],
    stats: &NormalizationStats,
    data: Embodiment,
) -> Result<Vec<f64>, PipelineError> {
    check_apply(y, stats, data)?;
    Ok(y.iter()
        .enumerate()
        .map(|(d, v)| {
            if stats.is_constant(d) {
                stats.lo[d]
            } else {
                (v + 1.0) / 2.0 * (stats.hi[d] - stats.lo[d]) + stats.lo[d]
            }
        })
        .collect())
}
