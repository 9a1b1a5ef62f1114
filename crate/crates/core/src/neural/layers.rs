use rand::Rng;
use serde::{Deserialize, Serialize};

use super::module::Module;
use super::tensor::{matvec_add, matvec_t_add, outer_add, Tensor};
use crate::error::{Error, Result};

/// Affine map `y = W x + b` with `W` of shape `[out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Linear {
            w: Tensor::uniform(&[output, input], bound, rng),
            b: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape[1]
    }

    pub fn output_dim(&self) -> usize {
        self.w.shape[0]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.data.clone();
        matvec_add(&self.w.data, self.input_dim(), x, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let cols = self.input_dim();
        outer_add(&mut grad.w.data, cols, dy, x);
        for (g, d) in grad.b.data.iter_mut().zip(dy) {
            *g += d;
        }
        let mut dx = vec![0.0; cols];
        matvec_t_add(&self.w.data, cols, dy, &mut dx);
        dx
    }

    /// Row-wise forward over a `[T, in]` matrix.
    pub fn forward_rows(&self, x: &Tensor) -> Tensor {
        let t = x.rows();
        let mut y = Tensor::zeros(&[t, self.output_dim()]);
        for i in 0..t {
            y.row_mut(i).copy_from_slice(&self.forward(x.row(i)));
        }
        y
    }

    pub fn backward_rows(&self, x: &Tensor, dy: &Tensor, grad: &mut Linear) -> Tensor {
        let mut dx = Tensor::zeros(&[x.rows(), self.input_dim()]);
        for i in 0..x.rows() {
            let d = self.backward(x.row(i), dy.row(i), grad);
            dx.row_mut(i).copy_from_slice(&d);
        }
        dx
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("w".into(), &mut self.w), ("b".into(), &mut self.b)]
    }
}

/// Trainable lookup table `[rows, dim]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: Tensor,
}

impl Embedding {
    pub fn new<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        Embedding {
            table: Tensor::uniform(&[rows, dim], bound, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.table.shape[1]
    }

    pub fn rows(&self) -> usize {
        self.table.shape[0]
    }

    pub fn forward(&self, ids: &[usize]) -> Tensor {
        let d = self.dim();
        let mut out = Tensor::zeros(&[ids.len(), d]);
        for (t, &id) in ids.iter().enumerate() {
            out.row_mut(t).copy_from_slice(self.table.row(id));
        }
        out
    }

    pub fn backward(&self, ids: &[usize], dout: &Tensor, grad: &mut Embedding) {
        for (t, &id) in ids.iter().enumerate() {
            for (g, d) in grad.table.row_mut(id).iter_mut().zip(dout.row(t)) {
                *g += d;
            }
        }
    }
}

impl Module for Embedding {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("table".into(), &self.table)]
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("table".into(), &mut self.table)]
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Cross-entropy of `softmax(logits)` against `gold`, with its gradient
/// `softmax(logits) - onehot(gold)` with respect to the logits.
pub fn softmax_ce(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    let loss = lse - logits[gold];
    let mut grad: Vec<f64> = logits.iter().map(|x| (x - lse).exp()).collect();
    grad[gold] -= 1.0;
    (loss, grad)
}

/// `[a ; b ; a - b ; a * b]`.
pub fn match_combine(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut out = Vec::with_capacity(4 * a.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.extend(a.iter().zip(b).map(|(x, y)| x - y));
    out.extend(a.iter().zip(b).map(|(x, y)| x * y));
    Ok(out)
}

/// Gradients of [`match_combine`] with respect to both inputs.
pub fn match_combine_backward(a: &[f64], b: &[f64], dout: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = a.len();
    let (d_a, rest) = dout.split_at(h);
    let (d_b, rest) = rest.split_at(h);
    let (d_diff, d_prod) = rest.split_at(h);
    let da = (0..h).map(|i| d_a[i] + d_diff[i] + d_prod[i] * b[i]).collect();
    let db = (0..h).map(|i| d_b[i] - d_diff[i] + d_prod[i] * a[i]).collect();
    (da, db)
}

/// Attention pooling: `s_j = w . v_j + b`, `alpha = softmax(s)` over the
/// unmasked rows, output `sum_j alpha_j v_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttnPool {
    pub w: Tensor,
    pub b: Tensor,
}

/// Attention weights kept for the backward pass; masked rows hold 0.
#[derive(Clone, Debug)]
pub struct AttnCache {
    pub alpha: Vec<f64>,
}

impl AttnPool {
    pub fn new<R: Rng>(dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        AttnPool {
            w: Tensor::uniform(&[dim], bound, rng),
            b: Tensor::zeros(&[1]),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// `mask[j]` is true for rows that take part.
    pub fn forward(&self, vectors: &Tensor, mask: &[bool]) -> Result<(Vec<f64>, AttnCache)> {
        let n = vectors.rows();
        if vectors.cols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: vectors.cols(),
            });
        }
        if !(0..n).any(|j| mask[j]) {
            return Err(Error::AllMasked);
        }
        let live: Vec<usize> = (0..n).filter(|&j| mask[j]).collect();
        let scores: Vec<f64> = live
            .iter()
            .map(|&j| super::tensor::dot(&self.w.data, vectors.row(j)) + self.b.data[0])
            .collect();
        let p = softmax(&scores);
        let mut alpha = vec![0.0; n];
        let mut out = vec![0.0; self.dim()];
        for (k, &j) in live.iter().enumerate() {
            alpha[j] = p[k];
            super::tensor::axpy(p[k], vectors.row(j), &mut out);
        }
        Ok((out, AttnCache { alpha }))
    }

    /// Returns the gradient for every row of `vectors` (zero on masked rows).
    pub fn backward(&self, vectors: &Tensor, cache: &AttnCache, dout: &[f64], grad: &mut AttnPool) -> Tensor {
        let n = vectors.rows();
        let d = self.dim();
        let mut dv = Tensor::zeros(&[n, d]);
        // dL/dalpha_j = dout . v_j ; ds_j = alpha_j (dalpha_j - sum_k alpha_k dalpha_k)
        let dalpha: Vec<f64> = (0..n).map(|j| super::tensor::dot(dout, vectors.row(j))).collect();
        let mean: f64 = (0..n).map(|j| cache.alpha[j] * dalpha[j]).sum();
        #[allow(clippy::needless_range_loop)]
        for j in 0..n {
            let a = cache.alpha[j];
            if a == 0.0 {
                continue;
            }
            let ds = a * (dalpha[j] - mean);
            super::tensor::axpy(ds, vectors.row(j), &mut grad.w.data);
            grad.b.data[0] += ds;
            let row = dv.row_mut(j);
            super::tensor::axpy(a, dout, row);
            super::tensor::axpy(ds, &self.w.data, row);
        }
        dv
    }
}

impl Module for AttnPool {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("w".into(), &mut self.w), ("b".into(), &mut self.b)]
    }
}

/// Inverted dropout. Returns the multiplicative mask that was applied.
pub fn dropout<R: Rng>(x: &mut [f64], rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    for (v, m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    mask
}

/// Row-wise layer normalization with learned gain and bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        let mut gamma = Tensor::zeros(&[dim]);
        gamma.fill(1.0);
        LayerNorm {
            gamma,
            beta: Tensor::zeros(&[dim]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, LayerNormCache) {
        let (t, d) = (x.rows(), x.cols());
        let mut y = Tensor::zeros(&[t, d]);
        let mut xhat = Tensor::zeros(&[t, d]);
        let mut inv_std = Vec::with_capacity(t);
        for i in 0..t {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            let xh = xhat.row_mut(i);
            for k in 0..d {
                xh[k] = (row[k] - mean) * inv;
            }
            let xr = xhat.row(i);
            for (k, yk) in y.row_mut(i).iter_mut().enumerate() {
                *yk = self.gamma.data[k] * xr[k] + self.beta.data[k];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Tensor, grad: &mut LayerNorm) -> Tensor {
        let (t, d) = (dy.rows(), dy.cols());
        let mut dx = Tensor::zeros(&[t, d]);
        for i in 0..t {
            let xh = cache.xhat.row(i);
            let g = dy.row(i);
            let mut dxhat = vec![0.0; d];
            for k in 0..d {
                grad.gamma.data[k] += g[k] * xh[k];
                grad.beta.data[k] += g[k];
                dxhat[k] = g[k] * self.gamma.data[k];
            }
            let sum: f64 = dxhat.iter().sum();
            let sum_xh: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
            let inv = cache.inv_std[i];
            let row = dx.row_mut(i);
            for k in 0..d {
                row[k] = inv / d as f64 * (d as f64 * dxhat[k] - sum - xh[k] * sum_xh);
            }
        }
        dx
    }
}

impl Module for LayerNorm {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
