use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token/index bijection. Indices 0 and 1 are reserved for padding and
/// unknown tokens; the rest are ordered by descending frequency, then
/// lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    min_count: usize,
    tokens: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_tokens(r.tokens, r.min_count)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            min_count: v.min_count,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, min_count: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied().filter(|&i| i > UNK)
    }

    /// Index of `token`, falling back to [`UNK`].
    pub fn index_or_unk(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_or_unk(t.as_ref())).collect()
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

/// Builds a vocabulary from token streams, keeping tokens seen at least
/// `min_count` times.
pub fn build_vocab<I, S>(streams: I, min_count: usize) -> Vocabulary
where
    I: IntoIterator<Item = S>,
    S: AsRef<[String]>,
{
    let min_count = min_count.max(1);
    let mut counts: HashMap<String, usize> = HashMap::new();
    for stream in streams {
        for t in stream.as_ref() {
            *counts.entry(t.clone()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
    let tokens = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
        .into_iter()
        .chain(kept.into_iter().map(|(t, _)| t))
        .collect();
    Vocabulary::from_tokens(tokens, min_count)
}
