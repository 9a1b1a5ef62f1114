use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureAssets, InputRegime, PredictionDistribution};
use crate::corpus::ClaimRecord;
use crate::error::Result;
use crate::features::{tokenize, vectorize_tf_streams, SparseVector, Vocabulary};
use crate::forest::{fit_forest, predict_forest, ForestConfig, ForestModel};

/// Token streams the regime may see: the claim, the real snippets, or both.
pub fn regime_tokens(record: &ClaimRecord, regime: InputRegime) -> Vec<Vec<String>> {
    let mut streams = Vec::new();
    if regime.uses_claim() {
        streams.push(tokenize(&record.claim_text));
    }
    if regime.uses_evidence() {
        streams.extend(record.real_snippets().map(|s| tokenize(&s.text)));
    }
    streams
}

/// Bag-of-words term frequencies over the regime-selected text.
pub fn regime_vector(record: &ClaimRecord, regime: InputRegime, vocab: &Vocabulary) -> SparseVector {
    let streams = regime_tokens(record, regime);
    vectorize_tf_streams(streams.iter().map(Vec::as_slice), vocab)
}

/// Random forest over term-frequency vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestProbe {
    pub vocab: Vocabulary,
    pub asset_hash: String,
    pub model: ForestModel,
}

impl ForestProbe {
    pub fn fit(
        train: &[ClaimRecord],
        labels: &[usize],
        n_labels: usize,
        regime: InputRegime,
        assets: &FeatureAssets,
        config: &ForestConfig,
    ) -> Result<Self> {
        let x: Vec<SparseVector> = train
            .par_iter()
            .map(|r| regime_vector(r, regime, &assets.vocab))
            .collect();
        let model = fit_forest(&x, labels, n_labels, config)?;
        Ok(ForestProbe {
            vocab: assets.vocab.clone(),
            asset_hash: assets.hash.clone(),
            model,
        })
    }

    pub fn predict(&self, record: &ClaimRecord, regime: InputRegime) -> PredictionDistribution {
        let x = regime_vector(record, regime, &self.vocab);
        let missing = regime == InputRegime::EvidenceOnly && !record.has_evidence();
        PredictionDistribution::new(predict_forest(&self.model, &x), missing)
    }
}
