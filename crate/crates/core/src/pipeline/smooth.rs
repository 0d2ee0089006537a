//! Gaussian trajectory smoothing.
//!
//! Positions are convolved per axis with a normalized Gaussian kernel
//! truncated at four standard deviations; indices past either end reflect
//! back into the series (edge sample duplicated). Rotations are smoothed with
//! the same weights via a hemisphere-aligned quaternion mean.

use crate::pose::{canonical, unit_from, Pose};
use nalgebra::{Quaternion, Vector3};

pub const DEFAULT_SIGMA_FRAMES: f64 = 2.0;

/// Normalized Gaussian weights over offsets `-r..=r` with `r = ceil(4σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil().max(1.0) as i64;
    let mut w: Vec<f64> = (-r..=r)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

fn reflect(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Convolves one scalar series with the kernel for `sigma`, reflecting at the
/// boundaries. Output length equals input length.
pub fn smooth_scalar_series(xs: &[f64], sigma: f64) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let w = gaussian_kernel(sigma);
    let r = (w.len() / 2) as i64;
    (0..xs.len() as i64)
        .map(|i| {
            w.iter()
                .enumerate()
                .map(|(k, wk)| wk * xs[reflect(i + k as i64 - r, xs.len())])
                .sum()
        })
        .collect()
}

/// Smooths a pose series: per-axis Gaussian convolution of positions and a
/// hemisphere-aligned weighted quaternion mean of rotations.
pub fn gaussian_smooth(poses: &[Pose], sigma: f64) -> Vec<Pose> {
    if poses.is_empty() {
        return Vec::new();
    }
    let w = gaussian_kernel(sigma);
    let r = (w.len() / 2) as i64;
    let n = poses.len();
    (0..n as i64)
        .map(|i| {
            let mut t = Vector3::zeros();
            // Align every neighbour to the window's center quaternion before
            // averaging, so q and -q (the same rotation) cannot cancel.
            let center = poses[i as usize].rotation().into_inner();
            let mut q = Quaternion::new(0.0, 0.0, 0.0, 0.0);
            for (k, wk) in w.iter().enumerate() {
                let p = &poses[reflect(i + k as i64 - r, n)];
                t += *wk * p.translation();
                let mut pq = p.rotation().into_inner();
                if pq.dot(&center) < 0.0 {
                    pq = -pq;
                }
                q += *wk * pq;
            }
            Pose::new(t, canonical(unit_from(q)))
        })
        .collect()
}
