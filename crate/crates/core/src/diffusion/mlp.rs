//! Reference denoising network: a two-hidden-layer SiLU MLP over the
//! flattened noisy chunk, a sinusoidal timestep embedding, and the
//! conditioning vector, with hand-written forward and backward passes.

use crate::diffusion::train::{Denoiser, TrainableDenoiser};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_TEMB_DIM: usize = 32;

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_deriv(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// Transformer-style sinusoidal embedding of an integer timestep.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    debug_assert!(dim >= 2 && dim % 2 == 0);
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for k in 0..half {
        let freq = (-(k as f64) * (10_000.0f64).ln() / (half - 1).max(1) as f64).exp();
        out.push((t as f64 * freq).sin());
        out.push((t as f64 * freq).cos());
    }
    out
}

/// Parameters live in one flat vector, layout [W1 | b1 | W2 | b2 | W3 | b3],
/// matrices row-major with shape (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    pub chunk_dim: usize,
    pub cond_dim: usize,
    pub temb_dim: usize,
    pub hidden: usize,
    params: Vec<f64>,
}

struct Layout {
    w1: std::ops::Range<usize>,
    b1: std::ops::Range<usize>,
    w2: std::ops::Range<usize>,
    b2: std::ops::Range<usize>,
    w3: std::ops::Range<usize>,
    b3: std::ops::Range<usize>,
}

impl MlpDenoiser {
    pub fn new(chunk_dim: usize, cond_dim: usize, hidden: usize, temb_dim: usize, seed: u64) -> Self {
        assert!(chunk_dim > 0 && hidden > 0 && temb_dim >= 2 && temb_dim % 2 == 0);
        let input = chunk_dim + temb_dim + cond_dim;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (rows, cols) in [(hidden, input), (hidden, hidden), (chunk_dim, hidden)] {
            let dist = Normal::new(0.0, (1.0 / cols as f64).sqrt()).unwrap();
            params.extend((0..rows * cols).map(|_| dist.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, rows));
        }
        MlpDenoiser { chunk_dim, cond_dim, temb_dim, hidden, params }
    }

    pub fn from_params(
        chunk_dim: usize,
        cond_dim: usize,
        hidden: usize,
        temb_dim: usize,
        params: Vec<f64>,
    ) -> Self {
        let mut net = MlpDenoiser::new(chunk_dim, cond_dim, hidden, temb_dim, 0);
        assert_eq!(params.len(), net.params.len(), "parameter count mismatch");
        net.params = params;
        net
    }

    pub fn input_dim(&self) -> usize {
        self.chunk_dim + self.temb_dim + self.cond_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layout(&self) -> Layout {
        let (i, h, d) = (self.input_dim(), self.hidden, self.chunk_dim);
        let w1 = 0..h * i;
        let b1 = w1.end..w1.end + h;
        let w2 = b1.end..b1.end + h * h;
        let b2 = w2.end..w2.end + h;
        let w3 = b2.end..b2.end + d * h;
        let b3 = w3.end..w3.end + d;
        Layout { w1, b1, w2, b2, w3, b3 }
    }

    fn weights(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let l = self.layout();
        let (i, h, d) = (self.input_dim(), self.hidden, self.chunk_dim);
        (
            DMatrix::from_row_slice(h, i, &self.params[l.w1]),
            DMatrix::from_row_slice(h, h, &self.params[l.w2]),
            DMatrix::from_row_slice(d, h, &self.params[l.w3]),
        )
    }

    /// Stacks [chunk | temb(t) | cond] rows into the network input matrix.
    fn input_matrix(&self, noisy: &DMatrix<f64>, ts: &[usize], cond: &DMatrix<f64>) -> DMatrix<f64> {
        let b = noisy.nrows();
        assert_eq!(ts.len(), b);
        assert_eq!(cond.nrows(), b);
        assert_eq!(noisy.ncols(), self.chunk_dim);
        assert_eq!(cond.ncols(), self.cond_dim);
        let mut x = DMatrix::zeros(b, self.input_dim());
        for r in 0..b {
            for c in 0..self.chunk_dim {
                x[(r, c)] = noisy[(r, c)];
            }
            for (k, v) in timestep_embedding(ts[r], self.temb_dim).into_iter().enumerate() {
                x[(r, self.chunk_dim + k)] = v;
            }
            for c in 0..self.cond_dim {
                x[(r, self.chunk_dim + self.temb_dim + c)] = cond[(r, c)];
            }
        }
        x
    }

    /// Forward pass keeping pre-activations for the backward pass.
    fn forward(&self, x: &DMatrix<f64>) -> Forward {
        let l = self.layout();
        let (w1, w2, w3) = self.weights();
        let b = x.nrows();
        let mut z1 = x * w1.transpose();
        for r in 0..b {
            for c in 0..self.hidden {
                z1[(r, c)] += self.params[l.b1.start + c];
            }
        }
        let h1 = z1.map(silu);
        let mut z2 = &h1 * w2.transpose();
        for r in 0..b {
            for c in 0..self.hidden {
                z2[(r, c)] += self.params[l.b2.start + c];
            }
        }
        let h2 = z2.map(silu);
        let mut y = &h2 * w3.transpose();
        for r in 0..b {
            for c in 0..self.chunk_dim {
                y[(r, c)] += self.params[l.b3.start + c];
            }
        }
        Forward { z1, h1, z2, h2, y }
    }
}

struct Forward {
    z1: DMatrix<f64>,
    h1: DMatrix<f64>,
    z2: DMatrix<f64>,
    h2: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Denoiser for MlpDenoiser {
    fn predict_batch(
        &self,
        noisy: &DMatrix<f64>,
        ts: &[usize],
        cond: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        self.forward(&self.input_matrix(noisy, ts, cond)).y
    }

    fn output_dim(&self) -> usize {
        self.chunk_dim
    }
}

impl TrainableDenoiser for MlpDenoiser {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Gradient of a scalar loss with respect to every parameter, given the
    /// loss gradient at the output. Recomputes the forward pass; at this
    /// scale that is cheaper than caching across the training loop.
    fn grad(
        &self,
        noisy: &DMatrix<f64>,
        ts: &[usize],
        cond: &DMatrix<f64>,
        dldy: &DMatrix<f64>,
    ) -> Vec<f64> {
        let x = self.input_matrix(noisy, ts, cond);
        let f = self.forward(&x);
        let (_, w2, w3) = self.weights();

        let dw3 = dldy.transpose() * &f.h2;
        let db3 = column_sums(dldy);
        let dh2 = dldy * &w3;
        let dz2 = dh2.zip_map(&f.z2, |g, z| g * silu_deriv(z));
        let dw2 = dz2.transpose() * &f.h1;
        let db2 = column_sums(&dz2);
        let dh1 = &dz2 * &w2;
        let dz1 = dh1.zip_map(&f.z1, |g, z| g * silu_deriv(z));
        let dw1 = dz1.transpose() * &x;
        let db1 = column_sums(&dz1);

        let mut grad = Vec::with_capacity(self.params.len());
        grad.extend(dw1.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()));
        grad.extend(db1);
        grad.extend(dw2.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()));
        grad.extend(db2);
        grad.extend(dw3.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()));
        grad.extend(db3);
        grad
    }
}

fn column_sums(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.ncols()).map(|c| m.column(c).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_net() -> MlpDenoiser {
        MlpDenoiser::new(3, 2, 4, 4, 9)
    }

    fn toy_inputs(b: usize, net: &MlpDenoiser) -> (DMatrix<f64>, Vec<usize>, DMatrix<f64>) {
        let noisy = DMatrix::from_fn(b, net.chunk_dim, |r, c| ((r * 3 + c) as f64 * 0.37).sin());
        let ts: Vec<usize> = (0..b).map(|r| 1 + (r * 7) % 50).collect();
        let cond = DMatrix::from_fn(b, net.cond_dim, |r, c| ((r + c) as f64 * 0.23).cos());
        (noisy, ts, cond)
    }

    #[test]
    fn output_shape_matches_chunk() {
        let net = toy_net();
        let (noisy, ts, cond) = toy_inputs(5, &net);
        let y = net.predict_batch(&noisy, &ts, &cond);
        assert_eq!((y.nrows(), y.ncols()), (5, 3));
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn construction_and_prediction_are_deterministic() {
        let a = toy_net();
        let b = toy_net();
        assert_eq!(a.params(), b.params());
        let (noisy, ts, cond) = toy_inputs(4, &a);
        assert_eq!(a.predict_batch(&noisy, &ts, &cond), b.predict_batch(&noisy, &ts, &cond));
        let c = MlpDenoiser::new(3, 2, 4, 4, 10);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn param_count_matches_layout() {
        let net = toy_net();
        let i = 3 + 4 + 2;
        assert_eq!(net.param_count(), 4 * i + 4 + 4 * 4 + 4 + 3 * 4 + 3);
    }

    #[test]
    fn timestep_embedding_is_bounded_and_distinct() {
        let a = timestep_embedding(1, 16);
        let b = timestep_embedding(50, 16);
        assert_eq!(a.len(), 16);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
        assert_ne!(a, b);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut net = toy_net();
        let (noisy, ts, cond) = toy_inputs(6, &net);
        let target = DMatrix::from_fn(6, 3, |r, c| ((r + c) as f64 * 0.71).sin());

        let loss_of = |net: &MlpDenoiser| -> f64 {
            let y = net.predict_batch(&noisy, &ts, &cond);
            let r = &y - &target;
            r.iter().map(|v| v * v).sum::<f64>() / (r.nrows() * r.ncols()) as f64
        };
        let y = net.predict_batch(&noisy, &ts, &cond);
        let scale = 2.0 / (y.nrows() * y.ncols()) as f64;
        let dldy = (&y - &target).map(|v| v * scale);
        let analytic = net.grad(&noisy, &ts, &cond, &dldy);

        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for p in 0..net.param_count() {
            let orig = net.params()[p];
            net.params_mut()[p] = orig + h;
            let hi = loss_of(&net);
            net.params_mut()[p] = orig - h;
            let lo = loss_of(&net);
            net.params_mut()[p] = orig;
            let fd = (hi - lo) / (2.0 * h);
            let rel = (analytic[p] - fd).abs() / analytic[p].abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }
}
