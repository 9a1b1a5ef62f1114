use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Vocabulary;

/// Sparse non-negative vector with entries sorted by index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn from_map(dim: usize, map: BTreeMap<u32, f64>) -> Self {
        SparseVector {
            dim,
            entries: map.into_iter().filter(|(_, v)| *v > 0.0).collect(),
        }
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn add(&self, other: &SparseVector) -> SparseVector {
        let mut map: BTreeMap<u32, f64> = self.entries.iter().copied().collect();
        for &(i, v) in &other.entries {
            *map.entry(i).or_default() += v;
        }
        SparseVector::from_map(self.dim.max(other.dim), map)
    }

    pub fn is_valid(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].0 < w[1].0)
            && self.entries.iter().all(|&(i, v)| (i as usize) < self.dim && v > 0.0)
    }
}

/// Raw term-frequency vector over the in-vocabulary tokens of all streams;
/// out-of-vocabulary tokens are ignored.
pub fn vectorize_tf_streams<'a, I, S>(streams: I, vocab: &Vocabulary) -> SparseVector
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    let mut map: BTreeMap<u32, f64> = BTreeMap::new();
    for stream in streams {
        for t in stream {
            if let Some(i) = vocab.get(t.as_ref()) {
                *map.entry(i as u32).or_default() += 1.0;
            }
        }
    }
    SparseVector::from_map(vocab.len(), map)
}

pub fn vectorize_tf<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> SparseVector {
    vectorize_tf_streams([tokens], vocab)
}
