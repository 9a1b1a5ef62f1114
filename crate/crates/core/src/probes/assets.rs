use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ClaimRecord, SNIPPET_SLOTS};
use crate::error::Result;
use crate::features::{
    build_vocab, load_embeddings, tokenize, EmbeddingTable, OovPolicy, Vocabulary, MAX_SEQ_TOKENS, PAD,
};

/// How text is turned into features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSettings {
    pub min_count: usize,
    /// Per-sequence token limit for the neural families.
    pub max_tokens: usize,
    /// Used only when no embedding file is given.
    pub embedding_dim: usize,
    /// Whitespace-separated text vectors (GloVe format).
    pub embeddings_path: Option<PathBuf>,
    /// Half-width of the uniform range for rows not covered by the file.
    pub oov_scale: f64,
    pub seed: u64,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        FeatureSettings {
            min_count: 2,
            max_tokens: MAX_SEQ_TOKENS,
            embedding_dim: 100,
            embeddings_path: None,
            oov_scale: 0.5,
            seed: 0,
        }
    }
}

/// Vocabulary and frozen word vectors shared by every probe of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureAssets {
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub max_tokens: usize,
    pub hash: String,
}

impl FeatureAssets {
    /// Builds the vocabulary over claims and snippets of `train`.
    pub fn build(train: &[ClaimRecord], settings: &FeatureSettings) -> Result<Self> {
        let streams = train
            .iter()
            .flat_map(|r| std::iter::once(tokenize(&r.claim_text)).chain(r.real_snippets().map(|s| tokenize(&s.text))));
        let vocab = build_vocab(streams, settings.min_count);
        let policy = OovPolicy::Random {
            seed: settings.seed,
            scale: settings.oov_scale,
        };
        let embeddings = match &settings.embeddings_path {
            Some(path) => load_embeddings(path, &vocab, policy)?,
            None => EmbeddingTable::from_policy(&vocab, settings.embedding_dim, policy),
        };
        Ok(Self::from_parts(vocab, embeddings, settings.max_tokens))
    }

    pub fn from_parts(vocab: Vocabulary, embeddings: EmbeddingTable, max_tokens: usize) -> Self {
        let mut h = Sha256::new();
        h.update(vocab.fingerprint().as_bytes());
        h.update((embeddings.dim as u64).to_le_bytes());
        for v in &embeddings.data {
            h.update(v.to_le_bytes());
        }
        h.update((max_tokens as u64).to_le_bytes());
        FeatureAssets {
            vocab,
            embeddings,
            max_tokens,
            hash: hex::encode(h.finalize()),
        }
    }

    /// Truncated token ids of `text`; `None` when nothing is left.
    pub fn encode(&self, text: &str) -> Option<Vec<usize>> {
        let ids: Vec<usize> = tokenize(text)
            .iter()
            .take(self.max_tokens)
            .map(|t| self.vocab.index_or_unk(t))
            .filter(|&i| i != PAD)
            .collect();
        (!ids.is_empty()).then_some(ids)
    }

    /// Copy without the word vectors, for models that learn their own
    /// token embeddings. The hash still identifies the full assets.
    pub fn without_embeddings(&self) -> Self {
        FeatureAssets {
            vocab: self.vocab.clone(),
            embeddings: EmbeddingTable::zeros(0, self.embeddings.dim),
            max_tokens: self.max_tokens,
            hash: self.hash.clone(),
        }
    }

    /// Token ids per evidence slot (slot `r - 1` holds rank `r`). Padded
    /// and empty snippets give `None`.
    pub fn encode_slots(&self, record: &ClaimRecord) -> Vec<Option<Vec<usize>>> {
        let mut slots = vec![None; SNIPPET_SLOTS];
        for s in record.real_snippets() {
            let r = s.rank as usize;
            if (1..=SNIPPET_SLOTS).contains(&r) {
                slots[r - 1] = self.encode(&s.text);
            }
        }
        slots
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EvidenceSnippet;

    fn record(claim: &str, snippet: &str) -> ClaimRecord {
        let mut snippets = vec![EvidenceSnippet::new(1, snippet, "a.org")];
        snippets.extend((2..=10).map(EvidenceSnippet::pad));
        ClaimRecord {
            id: "r".into(),
            claim_text: claim.into(),
            label: "true".into(),
            origin_domain: String::new(),
            snippets,
        }
    }

    #[test]
    fn vocabulary_covers_claims_and_snippets() {
        let settings = FeatureSettings {
            min_count: 1,
            embedding_dim: 4,
            ..Default::default()
        };
        let a = FeatureAssets::build(&[record("alpha beta", "gamma")], &settings).unwrap();
        for t in ["alpha", "beta", "gamma"] {
            assert!(a.vocab.get(t).is_some());
        }
        assert_eq!(a.embeddings.rows, a.vocab.len());
        assert_eq!(a.encode(""), None);
        assert_eq!(a.encode("alpha zzz").unwrap().len(), 2);
        let b = FeatureAssets::build(&[record("alpha beta", "gamma")], &settings).unwrap();
        assert_eq!(a.hash, b.hash);
    }
}
