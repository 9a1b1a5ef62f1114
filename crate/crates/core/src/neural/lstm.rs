use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::dropout;
use super::module::{prefixed, prefixed_mut, Module};
use super::tensor::{matvec_add, matvec_t_add, outer_add, sigmoid, Tensor};

/// One LSTM direction. Gate blocks in `w`, `u` and `b` are ordered input,
/// forget, cell, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

/// Per-step activations kept for backpropagation through time.
#[derive(Clone, Debug)]
pub struct LstmCache {
    x: Tensor,
    /// `[T, 4H]`: post-activation gates i, f, g, o
    gates: Tensor,
    c: Tensor,
    tanh_c: Tensor,
    h: Tensor,
    reverse: bool,
}

impl Lstm {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let w = Tensor::uniform(&[4 * hidden, input], 1.0 / (input.max(1) as f64).sqrt(), rng);
        let u = Tensor::uniform(&[4 * hidden, hidden], 1.0 / (hidden.max(1) as f64).sqrt(), rng);
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        Lstm { w, u, b }
    }

    pub fn hidden(&self) -> usize {
        self.u.shape[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape[1]
    }

    fn order(t: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
        if reverse {
            Box::new((0..t).rev())
        } else {
            Box::new(0..t)
        }
    }

    /// Runs over `x` (`[T, in]`); with `reverse` the sequence is read from the
    /// end. Output row `t` is the state after reading position `t`.
    pub fn forward(&self, x: &Tensor, reverse: bool) -> (Tensor, LstmCache) {
        let t_len = x.rows();
        let h = self.hidden();
        let mut gates = Tensor::zeros(&[t_len, 4 * h]);
        let mut c = Tensor::zeros(&[t_len, h]);
        let mut tanh_c = Tensor::zeros(&[t_len, h]);
        let mut out = Tensor::zeros(&[t_len, h]);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for t in Self::order(t_len, reverse) {
            let mut z = self.b.data.clone();
            matvec_add(&self.w.data, self.input_dim(), x.row(t), &mut z);
            matvec_add(&self.u.data, h, &h_prev, &mut z);
            let g = gates.row_mut(t);
            for k in 0..h {
                g[k] = sigmoid(z[k]);
                g[h + k] = sigmoid(z[h + k]);
                g[2 * h + k] = z[2 * h + k].tanh();
                g[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            let g = gates.row(t);
            let ct = c.row_mut(t);
            for k in 0..h {
                ct[k] = g[h + k] * c_prev[k] + g[k] * g[2 * h + k];
            }
            let (ct, tc) = (c.row(t).to_vec(), tanh_c.row_mut(t));
            for k in 0..h {
                tc[k] = ct[k].tanh();
            }
            let ht = out.row_mut(t);
            for k in 0..h {
                ht[k] = g[3 * h + k] * tanh_c.row(t)[k];
            }
            h_prev.copy_from_slice(out.row(t));
            c_prev.copy_from_slice(&ct);
        }
        let cache = LstmCache {
            x: x.clone(),
            gates,
            c,
            tanh_c,
            h: out.clone(),
            reverse,
        };
        (out, cache)
    }

    /// Backpropagation through time given `dL/dh_t` for every step.
    pub fn backward(&self, cache: &LstmCache, dh_out: &Tensor, grad: &mut Lstm) -> Tensor {
        let t_len = cache.x.rows();
        let h = self.hidden();
        let in_dim = self.input_dim();
        let mut dx = Tensor::zeros(&[t_len, in_dim]);
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let zeros = vec![0.0; h];
        let steps: Vec<usize> = Self::order(t_len, cache.reverse).collect();
        for (pos, &t) in steps.iter().enumerate().rev() {
            let (h_prev, c_prev) = if pos == 0 {
                (&zeros[..], &zeros[..])
            } else {
                let p = steps[pos - 1];
                (cache.h.row(p), cache.c.row(p))
            };
            let g = cache.gates.row(t);
            let tc = cache.tanh_c.row(t);
            let dh_t = dh_out.row(t);
            let mut dz = vec![0.0; 4 * h];
            let mut dc = vec![0.0; h];
            for k in 0..h {
                let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let dh = dh_t[k] + dh_next[k];
                let d_o = dh * tc[k];
                dc[k] = dc_next[k] + dh * o * (1.0 - tc[k] * tc[k]);
                dz[k] = dc[k] * gg * i * (1.0 - i);
                dz[h + k] = dc[k] * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc[k] * i * (1.0 - gg * gg);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc[k] * f;
            }
            outer_add(&mut grad.w.data, in_dim, &dz, cache.x.row(t));
            outer_add(&mut grad.u.data, h, &dz, h_prev);
            for (gb, d) in grad.b.data.iter_mut().zip(&dz) {
                *gb += d;
            }
            matvec_t_add(&self.w.data, in_dim, &dz, dx.row_mut(t));
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_add(&self.u.data, h, &dz, &mut dh_next);
        }
        dx
    }
}

impl Module for Lstm {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("w".into(), &self.w), ("u".into(), &self.u), ("b".into(), &self.b)]
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w".into(), &mut self.w),
            ("u".into(), &mut self.u),
            ("b".into(), &mut self.b),
        ]
    }
}

/// Forward and backward directions over the same input; output rows are
/// `[h_fwd ; h_bwd]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLstmLayer {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl Module for BiLstmLayer {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut v = prefixed("fwd", self.fwd.params());
        v.extend(prefixed("bwd", self.bwd.params()));
        v
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = prefixed_mut("fwd", self.fwd.params_mut());
        v.extend(prefixed_mut("bwd", self.bwd.params_mut()));
        v
    }
}

/// Stacked bidirectional LSTM with dropout between layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub layers: Vec<BiLstmLayer>,
    pub dropout: f64,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache {
    layers: Vec<(LstmCache, LstmCache)>,
    /// dropout mask applied to the output of layer `k` before layer `k+1`
    masks: Vec<Option<Vec<f64>>>,
}

impl BiLstm {
    pub fn new<R: Rng>(input: usize, hidden: usize, layers: usize, dropout: f64, rng: &mut R) -> Self {
        let layers = (0..layers.max(1))
            .map(|k| {
                let i = if k == 0 { input } else { 2 * hidden };
                BiLstmLayer {
                    fwd: Lstm::new(i, hidden, rng),
                    bwd: Lstm::new(i, hidden, rng),
                }
            })
            .collect();
        BiLstm { layers, dropout }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.layers[0].fwd.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fwd.input_dim()
    }

    /// Encodes `[T, in]` into `[T, 2H]`. Dropout between layers is applied
    /// only when `rng` is given.
    pub fn forward(&self, x: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> (Tensor, BiLstmCache) {
        let mut input = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let (hf, cf) = layer.fwd.forward(&input, false);
            let (hb, cb) = layer.bwd.forward(&input, true);
            let h = hf.cols();
            let mut out = Tensor::zeros(&[input.rows(), 2 * h]);
            for t in 0..input.rows() {
                let r = out.row_mut(t);
                r[..h].copy_from_slice(hf.row(t));
                r[h..].copy_from_slice(hb.row(t));
            }
            caches.push((cf, cb));
            let last = k + 1 == self.layers.len();
            let mask = match (&mut rng, last) {
                (Some(r), false) if self.dropout > 0.0 => Some(dropout(&mut out.data, self.dropout, *r)),
                _ => None,
            };
            masks.push(mask);
            input = out;
        }
        (input, BiLstmCache { layers: caches, masks })
    }

    pub fn backward(&self, cache: &BiLstmCache, dout: &Tensor, grad: &mut BiLstm) -> Tensor {
        let mut d = dout.clone();
        for k in (0..self.layers.len()).rev() {
            if let Some(mask) = &cache.masks[k] {
                for (v, m) in d.data.iter_mut().zip(mask) {
                    *v *= m;
                }
            }
            let layer = &self.layers[k];
            let h = layer.fwd.hidden();
            let t_len = d.rows();
            let mut df = Tensor::zeros(&[t_len, h]);
            let mut db = Tensor::zeros(&[t_len, h]);
            for t in 0..t_len {
                df.row_mut(t).copy_from_slice(&d.row(t)[..h]);
                db.row_mut(t).copy_from_slice(&d.row(t)[h..]);
            }
            let (cf, cb) = &cache.layers[k];
            let g = &mut grad.layers[k];
            let mut dx = layer.fwd.backward(cf, &df, &mut g.fwd);
            dx.add_assign(&layer.bwd.backward(cb, &db, &mut g.bwd));
            d = dx;
        }
        d
    }
}

impl Module for BiLstm {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(k, l)| prefixed(&format!("layers.{k}"), l.params()))
            .collect()
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(k, l)| prefixed_mut(&format!("layers.{k}"), l.params_mut()))
            .collect()
    }
}
