use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureAssets, InputRegime, PredictionDistribution};
use crate::corpus::ClaimRecord;
use crate::error::Result;
use crate::neural::{
    dropout, match_combine, match_combine_backward, softmax, softmax_ce, train, AttnCache, AttnPool, BiLstm,
    BiLstmCache, Linear, Module, Tensor, TrainConfig, TrainHistory, Trainable,
};
use crate::seed;

/// Token ids visible to a recurrent probe. Parts outside the regime are left
/// empty when the input is built, so they cannot influence the output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecurrentInput {
    pub claim: Option<Vec<usize>>,
    /// One entry per evidence slot; `None` for padded slots.
    pub snippets: Vec<Option<Vec<usize>>>,
}

impl RecurrentInput {
    pub fn from_record(record: &ClaimRecord, regime: InputRegime, assets: &FeatureAssets) -> Self {
        RecurrentInput {
            claim: if regime.uses_claim() {
                assets.encode(&record.claim_text)
            } else {
                None
            },
            snippets: if regime.uses_evidence() {
                assets.encode_slots(record)
            } else {
                Vec::new()
            },
        }
    }

    fn live_snippets(&self) -> Vec<&[usize]> {
        self.snippets.iter().flatten().map(Vec::as_slice).collect()
    }
}

/// Trainable part of the recurrent probe.
///
/// Claim and snippets share one BiLSTM; each has its own token attention.
/// `snippet_attn` pools across evidence slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentParams {
    pub lstm: BiLstm,
    pub claim_attn: Option<AttnPool>,
    pub evidence_attn: Option<AttnPool>,
    pub snippet_attn: Option<AttnPool>,
    pub fc: Linear,
}

impl Module for RecurrentParams {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut p = crate::neural::prefixed("lstm", self.lstm.params());
        for (name, a) in [
            ("claim_attn", &self.claim_attn),
            ("evidence_attn", &self.evidence_attn),
            ("snippet_attn", &self.snippet_attn),
        ] {
            if let Some(a) = a {
                p.extend(crate::neural::prefixed(name, a.params()));
            }
        }
        p.extend(crate::neural::prefixed("fc", self.fc.params()));
        p
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut p = crate::neural::prefixed_mut("lstm", self.lstm.params_mut());
        for (name, a) in [
            ("claim_attn", &mut self.claim_attn),
            ("evidence_attn", &mut self.evidence_attn),
            ("snippet_attn", &mut self.snippet_attn),
        ] {
            if let Some(a) = a {
                p.extend(crate::neural::prefixed_mut(name, a.params_mut()));
            }
        }
        p.extend(crate::neural::prefixed_mut("fc", self.fc.params_mut()));
        p
    }
}

/// BiLSTM-with-attention probe over frozen word vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentModel {
    pub regime: InputRegime,
    pub dropout: f64,
    pub assets: FeatureAssets,
    pub params: RecurrentParams,
}

/// Kept for tests that exercise the network directly.
pub type RecurrentNet = RecurrentModel;

struct SeqPass {
    lstm: BiLstmCache,
    states: Tensor,
    attn: AttnCache,
    pooled: Vec<f64>,
}

struct Pass {
    claim: Option<SeqPass>,
    h_c: Vec<f64>,
    snippets: Vec<SeqPass>,
    /// rows pooled by `snippet_attn`: match vectors, or snippet encodings
    pool_in: Option<(Tensor, AttnCache)>,
    drop: Option<Vec<f64>>,
    o: Vec<f64>,
    logits: Vec<f64>,
    evidence_missing: bool,
}

const TAG_INIT: u64 = 0x494e_4954;

impl RecurrentModel {
    pub fn new(assets: &FeatureAssets, regime: InputRegime, n_labels: usize, config: &TrainConfig) -> Self {
        let mut rng = seed::rng_at(config.seed, &[TAG_INIT]);
        let h = config.hidden_dim;
        let lstm = BiLstm::new(assets.embeddings.dim, h, config.lstm_layers, config.dropout, &mut rng);
        let d = lstm.output_dim();
        let claim_attn = regime.uses_claim().then(|| AttnPool::new(d, &mut rng));
        let evidence_attn = regime.uses_evidence().then(|| AttnPool::new(d, &mut rng));
        let pooled = if regime == InputRegime::ClaimPlusEvidence {
            4 * d
        } else {
            d
        };
        let snippet_attn = regime.uses_evidence().then(|| AttnPool::new(pooled, &mut rng));
        let fc = Linear::new(pooled, n_labels, &mut rng);
        RecurrentModel {
            regime,
            dropout: config.dropout,
            assets: assets.clone(),
            params: RecurrentParams {
                lstm,
                claim_attn,
                evidence_attn,
                snippet_attn,
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
        config: &TrainConfig,
    ) -> Result<(Self, TrainHistory)> {
        let encode = |records: &[ClaimRecord], ys: &[usize]| -> Vec<(RecurrentInput, usize)> {
            records
                .par_iter()
                .zip(ys)
                .map(|(r, &y)| (RecurrentInput::from_record(r, regime, assets), y))
                .collect()
        };
        let (tr, va) = (encode(train_set, y_train), encode(val_set, y_val));
        let mut model = Self::new(assets, regime, n_labels, config);
        let history = train(&mut model, &tr, &va, n_labels, config)?;
        Ok((model, history))
    }

    pub fn input(&self, record: &ClaimRecord) -> RecurrentInput {
        RecurrentInput::from_record(record, self.regime, &self.assets)
    }

    pub fn predict(&self, record: &ClaimRecord) -> Result<PredictionDistribution> {
        let pass = self.forward(&self.input(record), None)?;
        Ok(PredictionDistribution::new(
            softmax(&pass.logits),
            pass.evidence_missing,
        ))
    }

    fn embed(&self, ids: &[usize]) -> Tensor {
        let rows: Vec<&[f64]> = ids.iter().map(|&i| self.assets.embeddings.row(i)).collect();
        Tensor::stack(&rows)
    }

    fn encode_seq(&self, ids: &[usize], attn: &AttnPool, rng: Option<&mut ChaCha8Rng>) -> Result<SeqPass> {
        let (states, lstm) = self.params.lstm.forward(&self.embed(ids), rng);
        let (pooled, attn_cache) = attn.forward(&states, &vec![true; ids.len()])?;
        Ok(SeqPass {
            lstm,
            states,
            attn: attn_cache,
            pooled,
        })
    }

    fn backward_seq(
        &self,
        pass: &SeqPass,
        dpooled: &[f64],
        attn: &AttnPool,
        g_attn: &mut AttnPool,
        g_lstm: &mut BiLstm,
    ) {
        let dstates = attn.backward(&pass.states, &pass.attn, dpooled, g_attn);
        self.params.lstm.backward(&pass.lstm, &dstates, g_lstm);
    }

    fn forward(&self, input: &RecurrentInput, mut rng: Option<&mut ChaCha8Rng>) -> Result<Pass> {
        let p = &self.params;
        let d = p.lstm.output_dim();
        let claim = match (&input.claim, &p.claim_attn) {
            (Some(ids), Some(attn)) => Some(self.encode_seq(ids, attn, rng.as_deref_mut())?),
            _ => None,
        };
        let h_c = claim.as_ref().map_or_else(|| vec![0.0; d], |c| c.pooled.clone());
        let mut snippets = Vec::new();
        if let Some(attn) = &p.evidence_attn {
            for ids in input.live_snippets() {
                snippets.push(self.encode_seq(ids, attn, rng.as_deref_mut())?);
            }
        }
        let evidence_missing = self.regime.uses_evidence() && snippets.is_empty();
        let (mut o, pool_in) = match (&p.snippet_attn, snippets.is_empty()) {
            (None, _) => (h_c.clone(), None),
            (Some(attn), true) => (vec![0.0; attn.dim()], None),
            (Some(attn), false) => {
                let rows: Vec<Vec<f64>> = snippets
                    .iter()
                    .map(|s| {
                        if self.regime == InputRegime::ClaimPlusEvidence {
                            match_combine(&h_c, &s.pooled)
                        } else {
                            Ok(s.pooled.clone())
                        }
                    })
                    .collect::<Result<_>>()?;
                let rows = Tensor::stack(&rows.iter().map(Vec::as_slice).collect::<Vec<_>>());
                let (pooled, cache) = attn.forward(&rows, &vec![true; rows.rows()])?;
                (pooled, Some((rows, cache)))
            }
        };
        let drop = match rng {
            Some(r) if self.dropout > 0.0 => Some(dropout(&mut o, self.dropout, r)),
            _ => None,
        };
        let logits = p.fc.forward(&o);
        Ok(Pass {
            claim,
            h_c,
            snippets,
            pool_in,
            drop,
            o,
            logits,
            evidence_missing,
        })
    }

    fn backward(&self, pass: &Pass, dlogits: &[f64], g: &mut RecurrentParams) {
        let p = &self.params;
        let mut dfeat = p.fc.backward(&pass.o, dlogits, &mut g.fc);
        if let Some(mask) = &pass.drop {
            dfeat.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
        }
        let mut dh_c = vec![0.0; pass.h_c.len()];
        match (&p.snippet_attn, &pass.pool_in) {
            (None, _) => dh_c = dfeat,
            (Some(_), None) => {}
            (Some(attn), Some((rows, cache))) => {
                let drows = attn.backward(rows, cache, &dfeat, g.snippet_attn.as_mut().expect("grad layout"));
                let e_attn = p.evidence_attn.as_ref().expect("evidence attention");
                for (k, s) in pass.snippets.iter().enumerate() {
                    let dh_e = if self.regime == InputRegime::ClaimPlusEvidence {
                        let (da, db) = match_combine_backward(&pass.h_c, &s.pooled, drows.row(k));
                        dh_c.iter_mut().zip(&da).for_each(|(x, y)| *x += y);
                        db
                    } else {
                        drows.row(k).to_vec()
                    };
                    self.backward_seq(
                        s,
                        &dh_e,
                        e_attn,
                        g.evidence_attn.as_mut().expect("grad layout"),
                        &mut g.lstm,
                    );
                }
            }
        }
        if let (Some(c), Some(attn)) = (&pass.claim, &p.claim_attn) {
            self.backward_seq(c, &dh_c, attn, g.claim_attn.as_mut().expect("grad layout"), &mut g.lstm);
        }
    }
}

impl Trainable for RecurrentModel {
    type Input = RecurrentInput;
    type Params = RecurrentParams;

    fn trainable(&self) -> &RecurrentParams {
        &self.params
    }

    fn trainable_mut(&mut self) -> &mut RecurrentParams {
        &mut self.params
    }

    fn loss_and_grad(
        &self,
        input: &RecurrentInput,
        gold: usize,
        rng: &mut ChaCha8Rng,
        grads: &mut RecurrentParams,
    ) -> Result<f64> {
        let pass = self.forward(input, Some(rng))?;
        let (loss, dlogits) = softmax_ce(&pass.logits, gold);
        self.backward(&pass, &dlogits, grads);
        Ok(loss)
    }

    fn logits(&self, input: &RecurrentInput) -> Result<Vec<f64>> {
        Ok(self.forward(input, None)?.logits)
    }
}
