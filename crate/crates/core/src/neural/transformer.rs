use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{gelu, gelu_grad, softmax, Embedding, LayerNorm, LayerNormCache, Linear};
use super::module::{prefixed, prefixed_mut, Module};
use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};

/// Multi-head scaled dot-product self-attention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// per head, `[T, T]` attention probabilities (0 on masked keys)
    probs: Vec<Tensor>,
    context: Tensor,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(dim: usize, heads: usize, rng: &mut R) -> Self {
        MultiHeadAttention {
            heads,
            q: Linear::new(dim, dim, rng),
            k: Linear::new(dim, dim, rng),
            v: Linear::new(dim, dim, rng),
            o: Linear::new(dim, dim, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.output_dim()
    }

    /// Attention context before the output projection is also returned in
    /// the cache; `key_mask[s]` false removes position `s` as a key.
    pub fn forward(&self, x: &Tensor, key_mask: &[bool]) -> Result<(Tensor, AttentionCache)> {
        let t_len = x.rows();
        let d = self.dim();
        if !key_mask.iter().any(|&m| m) {
            return Err(Error::AllMasked);
        }
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.q.forward_rows(x);
        let k = self.k.forward_rows(x);
        let v = self.v.forward_rows(x);
        let mut context = Tensor::zeros(&[t_len, d]);
        let mut probs = Vec::with_capacity(self.heads);
        let live: Vec<usize> = (0..t_len).filter(|&s| key_mask[s]).collect();
        for a in 0..self.heads {
            let span = a * dh..(a + 1) * dh;
            let mut p = Tensor::zeros(&[t_len, t_len]);
            for t in 0..t_len {
                let qt = &q.row(t)[span.clone()];
                let scores: Vec<f64> = live.iter().map(|&s| dot(qt, &k.row(s)[span.clone()]) * scale).collect();
                let w = softmax(&scores);
                let prow = p.row_mut(t);
                for (i, &s) in live.iter().enumerate() {
                    prow[s] = w[i];
                }
                let ctx = &mut context.row_mut(t)[span.clone()];
                for (i, &s) in live.iter().enumerate() {
                    axpy(w[i], &v.row(s)[span.clone()], ctx);
                }
            }
            probs.push(p);
        }
        let out = self.o.forward_rows(&context);
        Ok((
            out,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                context,
            },
        ))
    }

    pub fn backward(&self, cache: &AttentionCache, dout: &Tensor, grad: &mut MultiHeadAttention) -> Tensor {
        let t_len = dout.rows();
        let d = self.dim();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dctx = self.o.backward_rows(&cache.context, dout, &mut grad.o);
        let mut dq = Tensor::zeros(&[t_len, d]);
        let mut dk = Tensor::zeros(&[t_len, d]);
        let mut dv = Tensor::zeros(&[t_len, d]);
        for a in 0..self.heads {
            let span = a * dh..(a + 1) * dh;
            let p = &cache.probs[a];
            for t in 0..t_len {
                let dc = &dctx.row(t)[span.clone()];
                let prow = p.row(t);
                let dp: Vec<f64> = (0..t_len)
                    .map(|s| {
                        if prow[s] == 0.0 {
                            0.0
                        } else {
                            dot(dc, &cache.v.row(s)[span.clone()])
                        }
                    })
                    .collect();
                let mean: f64 = (0..t_len).map(|s| prow[s] * dp[s]).sum();
                for s in 0..t_len {
                    if prow[s] == 0.0 {
                        continue;
                    }
                    axpy(prow[s], dc, &mut dv.row_mut(s)[span.clone()]);
                    let ds = prow[s] * (dp[s] - mean) * scale;
                    let ks = cache.k.row(s)[span.clone()].to_vec();
                    axpy(ds, &ks, &mut dq.row_mut(t)[span.clone()]);
                    let qt = cache.q.row(t)[span.clone()].to_vec();
                    axpy(ds, &qt, &mut dk.row_mut(s)[span.clone()]);
                }
            }
        }
        let mut dx = self.q.backward_rows(&cache.x, &dq, &mut grad.q);
        dx.add_assign(&self.k.backward_rows(&cache.x, &dk, &mut grad.k));
        dx.add_assign(&self.v.backward_rows(&cache.x, &dv, &mut grad.v));
        dx
    }
}

impl Module for MultiHeadAttention {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut p = prefixed("q", self.q.params());
        p.extend(prefixed("k", self.k.params()));
        p.extend(prefixed("v", self.v.params()));
        p.extend(prefixed("o", self.o.params()));
        p
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = prefixed_mut("q", self.q.params_mut());
        p.extend(prefixed_mut("k", self.k.params_mut()));
        p.extend(prefixed_mut("v", self.v.params_mut()));
        p.extend(prefixed_mut("o", self.o.params_mut()));
        p
    }
}

/// Post-norm encoder block: `x1 = LN(x + MHA(x))`, `y = LN(x1 + FF(x1))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub ln1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct EncoderLayerCache {
    attn: AttentionCache,
    ln1: LayerNormCache,
    x1: Tensor,
    pre_act: Tensor,
    act: Tensor,
    ln2: LayerNormCache,
}

impl EncoderLayer {
    pub fn new<R: Rng>(dim: usize, heads: usize, ff_dim: usize, rng: &mut R) -> Self {
        EncoderLayer {
            attn: MultiHeadAttention::new(dim, heads, rng),
            ln1: LayerNorm::new(dim),
            ff1: Linear::new(dim, ff_dim, rng),
            ff2: Linear::new(ff_dim, dim, rng),
            ln2: LayerNorm::new(dim),
        }
    }

    pub fn forward(&self, x: &Tensor, mask: &[bool]) -> Result<(Tensor, EncoderLayerCache)> {
        let (a, attn) = self.attn.forward(x, mask)?;
        let mut r1 = x.clone();
        r1.add_assign(&a);
        let (x1, ln1) = self.ln1.forward(&r1);
        let pre_act = self.ff1.forward_rows(&x1);
        let mut act = pre_act.clone();
        act.data.iter_mut().for_each(|v| *v = gelu(*v));
        let f = self.ff2.forward_rows(&act);
        let mut r2 = x1.clone();
        r2.add_assign(&f);
        let (y, ln2) = self.ln2.forward(&r2);
        Ok((
            y,
            EncoderLayerCache {
                attn,
                ln1,
                x1,
                pre_act,
                act,
                ln2,
            },
        ))
    }

    pub fn backward(&self, cache: &EncoderLayerCache, dy: &Tensor, grad: &mut EncoderLayer) -> Tensor {
        let dr2 = self.ln2.backward(&cache.ln2, dy, &mut grad.ln2);
        let dact = self.ff2.backward_rows(&cache.act, &dr2, &mut grad.ff2);
        let mut dpre = dact;
        for (g, &z) in dpre.data.iter_mut().zip(&cache.pre_act.data) {
            *g *= gelu_grad(z);
        }
        let mut dx1 = self.ff1.backward_rows(&cache.x1, &dpre, &mut grad.ff1);
        dx1.add_assign(&dr2);
        let dr1 = self.ln1.backward(&cache.ln1, &dx1, &mut grad.ln1);
        let mut dx = self.attn.backward(&cache.attn, &dr1, &mut grad.attn);
        dx.add_assign(&dr1);
        dx
    }
}

impl Module for EncoderLayer {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut p = prefixed("attn", self.attn.params());
        p.extend(prefixed("ln1", self.ln1.params()));
        p.extend(prefixed("ff1", self.ff1.params()));
        p.extend(prefixed("ff2", self.ff2.params()));
        p.extend(prefixed("ln2", self.ln2.params()));
        p
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = prefixed_mut("attn", self.attn.params_mut());
        p.extend(prefixed_mut("ln1", self.ln1.params_mut()));
        p.extend(prefixed_mut("ff1", self.ff1.params_mut()));
        p.extend(prefixed_mut("ff2", self.ff2.params_mut()));
        p.extend(prefixed_mut("ln2", self.ln2.params_mut()));
        p
    }
}

/// Token ids with their segment ids (0 for the first segment, 1 for the
/// second).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub segments: Vec<usize>,
}

impl TokenSequence {
    /// `[CLS] a [SEP]`, or `[CLS] a [SEP] b [SEP]` for pairs. Segment `b` is
    /// truncated first, then `a`, so the result fits `max_len` positions.
    pub fn build(a: &[usize], b: Option<&[usize]>, cls: usize, sep: usize, max_len: usize) -> Self {
        let specials = if b.is_some() { 3 } else { 2 };
        let budget = max_len.saturating_sub(specials);
        let b_len = b.map_or(0, |b| b.len());
        let over = (a.len() + b_len).saturating_sub(budget);
        let b_keep = b_len - over.min(b_len);
        let a_keep = a.len() - over.saturating_sub(b_len).min(a.len());
        let mut ids = vec![cls];
        ids.extend_from_slice(&a[..a_keep]);
        ids.push(sep);
        let mut segments = vec![0; ids.len()];
        if let Some(b) = b {
            ids.extend_from_slice(&b[..b_keep]);
            ids.push(sep);
            segments.resize(ids.len(), 1);
        }
        TokenSequence { ids, segments }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Token, position and segment embeddings followed by a stack of encoder
/// blocks. Position 0 holds the sequence summary (`[CLS]`) state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerEncoder {
    pub tokens: Embedding,
    pub positions: Embedding,
    pub segments: Embedding,
    pub ln_emb: LayerNorm,
    pub layers: Vec<EncoderLayer>,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    seq: TokenSequence,
    ln_emb: LayerNormCache,
    layers: Vec<EncoderLayerCache>,
}

impl EncoderCache {
    /// Length of the encoded sequence.
    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }
}

impl TransformerEncoder {
    pub fn new<R: Rng>(
        vocab_rows: usize,
        max_positions: usize,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        TransformerEncoder {
            tokens: Embedding::new(vocab_rows, dim, rng),
            positions: Embedding::new(max_positions, dim, rng),
            segments: Embedding::new(2, dim, rng),
            ln_emb: LayerNorm::new(dim),
            layers: (0..layers)
                .map(|_| EncoderLayer::new(dim, heads, ff_dim, rng))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.tokens.dim()
    }

    pub fn max_positions(&self) -> usize {
        self.positions.rows()
    }

    /// Returns the per-token states and the cache; `mask[t]` false removes
    /// position `t` as an attention key.
    pub fn forward(&self, seq: &TokenSequence, mask: &[bool]) -> Result<(Tensor, EncoderCache)> {
        if seq.len() > self.max_positions() {
            return Err(Error::Dimension {
                expected: self.max_positions(),
                actual: seq.len(),
            });
        }
        let positions: Vec<usize> = (0..seq.len()).collect();
        let mut e = self.tokens.forward(&seq.ids);
        e.add_assign(&self.positions.forward(&positions));
        e.add_assign(&self.segments.forward(&seq.segments));
        let (mut x, ln_emb) = self.ln_emb.forward(&e);
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&x, mask)?;
            caches.push(c);
            x = y;
        }
        Ok((
            x,
            EncoderCache {
                seq: seq.clone(),
                ln_emb,
                layers: caches,
            },
        ))
    }

    pub fn backward(&self, cache: &EncoderCache, dout: &Tensor, grad: &mut TransformerEncoder) {
        let mut d = dout.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            d = layer.backward(&cache.layers[k], &d, &mut grad.layers[k]);
        }
        let de = self.ln_emb.backward(&cache.ln_emb, &d, &mut grad.ln_emb);
        let positions: Vec<usize> = (0..cache.seq.len()).collect();
        self.tokens.backward(&cache.seq.ids, &de, &mut grad.tokens);
        self.positions.backward(&positions, &de, &mut grad.positions);
        self.segments.backward(&cache.seq.segments, &de, &mut grad.segments);
    }
}

impl Module for TransformerEncoder {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut p = prefixed("tokens", self.tokens.params());
        p.extend(prefixed("positions", self.positions.params()));
        p.extend(prefixed("segments", self.segments.params()));
        p.extend(prefixed("ln_emb", self.ln_emb.params()));
        for (k, l) in self.layers.iter().enumerate() {
            p.extend(prefixed(&format!("layers.{k}"), l.params()));
        }
        p
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = prefixed_mut("tokens", self.tokens.params_mut());
        p.extend(prefixed_mut("positions", self.positions.params_mut()));
        p.extend(prefixed_mut("segments", self.segments.params_mut()));
        p.extend(prefixed_mut("ln_emb", self.ln_emb.params_mut()));
        for (k, l) in self.layers.iter_mut().enumerate() {
            p.extend(prefixed_mut(&format!("layers.{k}"), l.params_mut()));
        }
        p
    }
}
