use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureAssets, InputRegime, PredictionDistribution};
use crate::corpus::ClaimRecord;
use crate::error::Result;
use crate::neural::{
    dropout, prefixed, prefixed_mut, softmax, softmax_ce, train, AttnCache, AttnPool, EncoderCache, Linear, Module,
    Tensor, TokenSequence, TrainConfig, TrainHistory, Trainable, TransformerEncoder,
};
use crate::seed;

/// Shape of the transformer encoder; the model width comes from
/// `TrainConfig::hidden_dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerArch {
    pub heads: usize,
    pub layers: usize,
    pub ff_multiplier: usize,
    /// `[CLS] a [SEP] b [SEP]` with two 64-token segments fits in 131.
    pub max_positions: usize,
}

impl Default for TransformerArch {
    fn default() -> Self {
        TransformerArch {
            heads: 4,
            layers: 2,
            ff_multiplier: 4,
            max_positions: 131,
        }
    }
}

/// Encoder inputs for one record. Claim-only probes get no snippet
/// sequences; evidence-only probes encode snippets without the claim.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextualInput {
    pub claim: Option<TokenSequence>,
    /// One sequence per non-padded slot, in rank order.
    pub snippets: Vec<TokenSequence>,
}

/// Trainable part of the contextual probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextualParams {
    pub encoder: TransformerEncoder,
    pub evidence_attn: Option<AttnPool>,
    pub fc: Linear,
}

impl Module for ContextualParams {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut p = prefixed("encoder", self.encoder.params());
        if let Some(a) = &self.evidence_attn {
            p.extend(prefixed("evidence_attn", a.params()));
        }
        p.extend(prefixed("fc", self.fc.params()));
        p
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = prefixed_mut("encoder", self.encoder.params_mut());
        if let Some(a) = &mut self.evidence_attn {
            p.extend(prefixed_mut("evidence_attn", a.params_mut()));
        }
        p.extend(prefixed_mut("fc", self.fc.params_mut()));
        p
    }
}

/// Transformer-encoder probe; the `[CLS]` state summarizes each sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextualModel {
    pub regime: InputRegime,
    pub dropout: f64,
    /// Vocabulary only; token embeddings are trained inside the encoder.
    pub assets: FeatureAssets,
    pub params: ContextualParams,
}

pub type ContextualNet = ContextualModel;

struct SeqPass {
    cache: EncoderCache,
    cls: Vec<f64>,
}

struct Pass {
    claim: Option<SeqPass>,
    snippets: Vec<SeqPass>,
    pool: Option<(Tensor, AttnCache)>,
    drop: Option<Vec<f64>>,
    o: Vec<f64>,
    logits: Vec<f64>,
    evidence_missing: bool,
}

const TAG_INIT: u64 = 0x4354_5849;

impl ContextualModel {
    pub fn new(
        assets: &FeatureAssets,
        regime: InputRegime,
        n_labels: usize,
        arch: &TransformerArch,
        config: &TrainConfig,
    ) -> Self {
        let mut rng = seed::rng_at(config.seed, &[TAG_INIT]);
        let d = config.hidden_dim;
        // two extra rows for [CLS] and [SEP]
        let encoder = TransformerEncoder::new(
            assets.vocab.len() + 2,
            arch.max_positions,
            d,
            arch.heads,
            arch.ff_multiplier * d,
            arch.layers,
            &mut rng,
        );
        let evidence_attn = regime.uses_evidence().then(|| AttnPool::new(d, &mut rng));
        let fc_in = if regime == InputRegime::ClaimPlusEvidence {
            2 * d
        } else {
            d
        };
        let fc = Linear::new(fc_in, n_labels, &mut rng);
        ContextualModel {
            regime,
            dropout: config.dropout,
            assets: assets.without_embeddings(),
            params: ContextualParams {
                encoder,
                evidence_attn,
                fc,
            },
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        train_set: &[ClaimRecord],
        y_train: &[usize],
        val_set: &[ClaimRecord],
        y_val: &[usize],
        n_labels: usize,
        regime: InputRegime,
        assets: &FeatureAssets,
        arch: &TransformerArch,
        config: &TrainConfig,
    ) -> Result<(Self, TrainHistory)> {
        let mut model = Self::new(assets, regime, n_labels, arch, config);
        let encode = |records: &[ClaimRecord], ys: &[usize]| -> Vec<(ContextualInput, usize)> {
            records.par_iter().zip(ys).map(|(r, &y)| (model.input(r), y)).collect()
        };
        let (tr, va) = (encode(train_set, y_train), encode(val_set, y_val));
        let history = train(&mut model, &tr, &va, n_labels, config)?;
        Ok((model, history))
    }

    pub fn cls_id(&self) -> usize {
        self.assets.vocab.len()
    }

    pub fn sep_id(&self) -> usize {
        self.assets.vocab.len() + 1
    }

    pub fn input(&self, record: &ClaimRecord) -> ContextualInput {
        let (cls, sep) = (self.cls_id(), self.sep_id());
        let max = self.params.encoder.max_positions();
        let claim_ids = if self.regime.uses_claim() {
            self.assets.encode(&record.claim_text).unwrap_or_default()
        } else {
            Vec::new()
        };
        let claim = self
            .regime
            .uses_claim()
            .then(|| TokenSequence::build(&claim_ids, None, cls, sep, max));
        let snippets = if self.regime.uses_evidence() {
            self.assets
                .encode_slots(record)
                .into_iter()
                .flatten()
                .map(|ids| match self.regime {
                    InputRegime::ClaimPlusEvidence => TokenSequence::build(&claim_ids, Some(&ids), cls, sep, max),
                    _ => TokenSequence::build(&ids, None, cls, sep, max),
                })
                .collect()
        } else {
            Vec::new()
        };
        ContextualInput { claim, snippets }
    }

    /// The `[CLS]` state of one sequence.
    pub fn encode_cls(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        Ok(self.encode(seq)?.cls)
    }

    pub fn predict(&self, record: &ClaimRecord) -> Result<PredictionDistribution> {
        let pass = self.forward(&self.input(record), None)?;
        Ok(PredictionDistribution::new(
            softmax(&pass.logits),
            pass.evidence_missing,
        ))
    }

    fn encode(&self, seq: &TokenSequence) -> Result<SeqPass> {
        let (states, cache) = self.params.encoder.forward(seq, &vec![true; seq.len()])?;
        Ok(SeqPass {
            cls: states.row(0).to_vec(),
            cache,
        })
    }

    fn backward_seq(&self, pass: &SeqPass, dcls: &[f64], g: &mut TransformerEncoder) {
        let mut dout = Tensor::zeros(&[pass.cache_len(), dcls.len()]);
        dout.row_mut(0).copy_from_slice(dcls);
        self.params.encoder.backward(&pass.cache, &dout, g);
    }

    fn forward(&self, input: &ContextualInput, rng: Option<&mut ChaCha8Rng>) -> Result<Pass> {
        let p = &self.params;
        let d = p.encoder.dim();
        let claim = input.claim.as_ref().map(|s| self.encode(s)).transpose()?;
        let snippets = input
            .snippets
            .iter()
            .map(|s| self.encode(s))
            .collect::<Result<Vec<_>>>()?;
        let evidence_missing = self.regime.uses_evidence() && snippets.is_empty();
        let (h_e, pool) = match &p.evidence_attn {
            Some(attn) if !snippets.is_empty() => {
                let rows = Tensor::stack(&snippets.iter().map(|s| s.cls.as_slice()).collect::<Vec<_>>());
                let (v, cache) = attn.forward(&rows, &vec![true; rows.rows()])?;
                (v, Some((rows, cache)))
            }
            _ => (vec![0.0; d], None),
        };
        let mut o = match self.regime {
            InputRegime::ClaimOnly => claim.as_ref().map(|c| c.cls.clone()).unwrap_or_else(|| vec![0.0; d]),
            InputRegime::EvidenceOnly => h_e,
            InputRegime::ClaimPlusEvidence => {
                let mut v = claim.as_ref().map(|c| c.cls.clone()).unwrap_or_else(|| vec![0.0; d]);
                v.extend_from_slice(&h_e);
                v
            }
        };
        let drop = match rng {
            Some(r) if self.dropout > 0.0 => Some(dropout(&mut o, self.dropout, r)),
            _ => None,
        };
        let logits = p.fc.forward(&o);
        Ok(Pass {
            claim,
            snippets,
            pool,
            drop,
            o,
            logits,
            evidence_missing,
        })
    }

    fn backward(&self, pass: &Pass, dlogits: &[f64], g: &mut ContextualParams) {
        let p = &self.params;
        let d = p.encoder.dim();
        let mut dfeat = p.fc.backward(&pass.o, dlogits, &mut g.fc);
        if let Some(mask) = &pass.drop {
            dfeat.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        let (dh_c, dh_e) = match self.regime {
            InputRegime::ClaimOnly => (dfeat, Vec::new()),
            InputRegime::EvidenceOnly => (Vec::new(), dfeat),
            InputRegime::ClaimPlusEvidence => {
                let dh_e = dfeat.split_off(d);
                (dfeat, dh_e)
            }
        };
        if let (Some((rows, cache)), Some(attn)) = (&pass.pool, &p.evidence_attn) {
            let drows = attn.backward(rows, cache, &dh_e, g.evidence_attn.as_mut().expect("grad layout"));
            for (k, s) in pass.snippets.iter().enumerate() {
                self.backward_seq(s, drows.row(k), &mut g.encoder);
            }
        }
        if let Some(c) = &pass.claim {
            self.backward_seq(c, &dh_c, &mut g.encoder);
        }
    }
}

impl SeqPass {
    fn cache_len(&self) -> usize {
        self.cache.len()
    }
}

impl Trainable for ContextualModel {
    type Input = ContextualInput;
    type Params = ContextualParams;

    fn trainable(&self) -> &ContextualParams {
        &self.params
    }

    fn trainable_mut(&mut self) -> &mut ContextualParams {
        &mut self.params
    }

    fn loss_and_grad(
        &self,
        input: &ContextualInput,
        gold: usize,
        rng: &mut ChaCha8Rng,
        grads: &mut ContextualParams,
    ) -> Result<f64> {
        let pass = self.forward(input, Some(rng))?;
        let (loss, dlogits) = softmax_ce(&pass.logits, gold);
        self.backward(&pass, &dlogits, grads);
        Ok(loss)
    }

    fn logits(&self, input: &ContextualInput) -> Result<Vec<f64>> {
        Ok(self.forward(input, None)?.logits)
    }
}
