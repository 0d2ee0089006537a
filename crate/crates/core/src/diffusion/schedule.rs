//! Beta schedules and the forward noising process.

use crate::diffusion::DiffusionError;
use serde::{Deserialize, Serialize};

const MAX_BETA: f64 = 0.999;
const COSINE_OFFSET: f64 = 0.008;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Cosine,
    Linear,
}

/// Noising schedule over timesteps 1..=t_max. `alpha_bars[t-1]` is the
/// cumulative signal fraction after t steps: strictly decreasing, inside
/// (0,1), and below 0.05 at the final step so the terminal marginal is near
/// pure noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub t_max: usize,
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Cumulative signal fraction at step t (1-indexed).
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }
}

pub fn make_schedule(t_max: usize, kind: ScheduleKind) -> Result<NoiseSchedule, DiffusionError> {
    if t_max < 2 {
        return Err(DiffusionError::InvalidSchedule(format!(
            "need at least 2 steps, got {t_max}"
        )));
    }
    let betas: Vec<f64> = match kind {
        ScheduleKind::Cosine => {
            // Squared-cosine signal curve; betas are its per-step decay,
            // clipped to keep every step a valid probability.
            let f = |t: f64| {
                ((t / t_max as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)
                    * std::f64::consts::FRAC_PI_2)
                    .cos()
                    .powi(2)
            };
            let f0 = f(0.0);
            (1..=t_max)
                .map(|t| {
                    let prev = f((t - 1) as f64) / f0;
                    let cur = f(t as f64) / f0;
                    (1.0 - cur / prev).clamp(1e-8, MAX_BETA)
                })
                .collect()
        }
        ScheduleKind::Linear => {
            // The classic 1e-4..0.02 ramp is calibrated for 1000 steps;
            // rescale so the terminal signal fraction stays near zero at any
            // length.
            let scale = 1000.0 / t_max as f64;
            let (lo, hi) = (1e-4 * scale, 0.02 * scale);
            (0..t_max)
                .map(|i| {
                    let u = i as f64 / (t_max - 1) as f64;
                    (lo + u * (hi - lo)).clamp(1e-8, MAX_BETA)
                })
                .collect()
        }
    };

    let mut alpha_bars = Vec::with_capacity(t_max);
    let mut prod = 1.0;
    for b in &betas {
        prod *= 1.0 - b;
        alpha_bars.push(prod);
    }

    for w in alpha_bars.windows(2) {
        if !(w[1] < w[0]) {
            return Err(DiffusionError::InvalidSchedule(
                "alpha_bar not strictly decreasing".into(),
            ));
        }
    }
    let (first, last) = (alpha_bars[0], alpha_bars[t_max - 1]);
    if !(0.0 < last && first < 1.0) {
        return Err(DiffusionError::InvalidSchedule("alpha_bar left (0,1)".into()));
    }
    if last >= 0.05 {
        return Err(DiffusionError::InvalidSchedule(format!(
            "terminal alpha_bar {last} is not near-noise"
        )));
    }

    Ok(NoiseSchedule { kind, t_max, betas, alpha_bars })
}

/// Forward noising: a_t = sqrt(alpha_bar_t) a0 + sqrt(1 - alpha_bar_t) eps.
pub fn add_noise(
    a0: &[f64],
    t: usize,
    eps: &[f64],
    s: &NoiseSchedule,
) -> Result<Vec<f64>, DiffusionError> {
    if eps.len() != a0.len() {
        return Err(DiffusionError::ShapeMismatch { expected: a0.len(), got: eps.len() });
    }
    assert!((1..=s.t_max).contains(&t), "t={t} outside schedule 1..={}", s.t_max);
    let ab = s.alpha_bar(t);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(a0.iter().zip(eps).map(|(a, e)| signal * a + noise * e).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn cosine_100_regression_values() {
        let s = make_schedule(100, ScheduleKind::Cosine).unwrap();
        // Frozen from the first run of this implementation.
        assert!((s.alpha_bars[0] - 0.9993687184016583).abs() < 1e-12);
        assert!((s.alpha_bars[49] - 0.49384359044063775).abs() < 1e-12);
        assert!((s.alpha_bars[99] - 2.4285722793500615e-7).abs() < 1e-17);
        assert!(s.alpha_bars[0] > 0.99);
        assert!(s.alpha_bars[99] < 0.05);
    }

    #[test]
    fn both_kinds_satisfy_the_invariants() {
        for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
            for t_max in [2usize, 10, 100, 500] {
                let s = make_schedule(t_max, kind).unwrap();
                assert_eq!(s.betas.len(), t_max);
                assert!(s.betas.iter().all(|b| (0.0..1.0).contains(b)));
                for w in s.alpha_bars.windows(2) {
                    assert!(w[1] < w[0]);
                }
                assert!(s.alpha_bars[0] < 1.0 && s.alpha_bars[0] > 0.0);
                assert!(s.alpha_bars[t_max - 1] < 0.05, "{kind:?} {t_max}");
            }
        }
    }

    #[test]
    fn too_short_schedules_are_rejected() {
        assert!(make_schedule(0, ScheduleKind::Cosine).is_err());
        assert!(make_schedule(1, ScheduleKind::Linear).is_err());
    }

    #[test]
    fn betas_stay_clipped() {
        let s = make_schedule(2, ScheduleKind::Linear).unwrap();
        assert!(s.betas.iter().all(|b| *b <= MAX_BETA));
        let s = make_schedule(100, ScheduleKind::Cosine).unwrap();
        assert!(s.betas.iter().all(|b| *b <= MAX_BETA));
    }

    #[test]
    fn low_noise_step_nearly_preserves_the_chunk() {
        let s = make_schedule(100, ScheduleKind::Cosine).unwrap();
        let a0 = vec![0.3, -0.7, 0.1];
        let eps = vec![1.0, -1.0, 0.5];
        let a1 = add_noise(&a0, 1, &eps, &s).unwrap();
        for (x, y) in a1.iter().zip(&a0) {
            assert!((x - y).abs() < 0.03, "{x} vs {y}");
        }
        // Zero noise keeps the exact scaled signal.
        let a = add_noise(&a0, 40, &[0.0; 3], &s).unwrap();
        let scale = s.alpha_bar(40).sqrt();
        for (x, y) in a.iter().zip(&a0) {
            assert_eq!(*x, scale * y);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let s = make_schedule(10, ScheduleKind::Cosine).unwrap();
        assert!(matches!(
            add_noise(&[0.0; 3], 5, &[0.0; 4], &s),
            Err(DiffusionError::ShapeMismatch { expected: 3, got: 4 })
        ));
    }

    #[test]
    fn terminal_marginal_is_near_unit_gaussian() {
        let s = make_schedule(100, ScheduleKind::Cosine).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(50);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let x = add_noise(&[0.0], 100, &[e], &s).unwrap()[0];
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((0.9..1.1).contains(&var), "var {var}");
    }
}
