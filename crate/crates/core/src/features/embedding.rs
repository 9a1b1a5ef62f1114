use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::seed;

/// What to put in rows for tokens that the embedding file does not cover.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OovPolicy {
    Zeros,
    Random { seed: u64, scale: f64 },
}

/// `|V| x d` row-major embedding matrix aligned with a vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub rows: usize,
    pub data: Vec<f64>,
}

fn random_row(token: &str, seed_value: u64, scale: f64, dim: usize) -> Vec<f64> {
    let mut rng = seed::rng_at(seed_value, &[seed::tag(token)]);
    (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingTable {
            dim,
            rows,
            data: vec![0.0; rows * dim],
        }
    }

    /// Table filled entirely by `policy`; the padding row stays zero.
    pub fn from_policy(vocab: &Vocabulary, dim: usize, policy: OovPolicy) -> Self {
        let mut t = Self::zeros(vocab.len(), dim);
        for i in 0..vocab.len() {
            if i != PAD {
                t.fill_oov(i, vocab.token(i), policy);
            }
        }
        t
    }

    fn fill_oov(&mut self, row: usize, token: &str, policy: OovPolicy) {
        if let OovPolicy::Random { seed, scale } = policy {
            let r = random_row(token, seed, scale, self.dim);
            self.row_mut(row).copy_from_slice(&r);
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Reads a whitespace-separated text embedding file (`token v1 ... vd` per
/// line) and aligns it with `vocab`.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary, policy: OovPolicy) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), vocab, policy)
}

pub fn read_embeddings<R: BufRead>(reader: R, vocab: &Vocabulary, policy: OovPolicy) -> Result<EmbeddingTable> {
    let mut dim: Option<usize> = None;
    let mut found: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {d} values, found {}", values.len()),
            });
        }
        let Some(idx) = vocab.get(token) else { continue };
        let row = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        found[idx] = Some(row);
    }
    let dim = dim.ok_or_else(|| Error::Empty("embedding file has no vectors".into()))?;
    let mut table = EmbeddingTable::zeros(vocab.len(), dim);
    for (i, row) in found.into_iter().enumerate() {
        match row {
            Some(r) => table.row_mut(i).copy_from_slice(&r),
            None if i != PAD => table.fill_oov(i, vocab.token(i), policy),
            None => {}
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_vocab, tokenize};

    #[test]
    fn reads_rows_for_vocab_tokens() {
        let v = build_vocab([tokenize("a")], 1);
        let t = read_embeddings("a 1.0 2.0\nq 3 4\n".as_bytes(), &v, OovPolicy::Zeros).unwrap();
        assert_eq!(t.dim, 2);
        assert_eq!(t.rows, v.len());
        assert_eq!(t.row(v.get("a").unwrap()), [1.0, 2.0]);
        assert_eq!(t.row(PAD), [0.0, 0.0]);
    }

    #[test]
    fn missing_token_policies() {
        let v = build_vocab([tokenize("a b")], 1);
        let b = v.get("b").unwrap();
        let t = read_embeddings("a 1 2\n".as_bytes(), &v, OovPolicy::Zeros).unwrap();
        assert_eq!(t.row(b), [0.0, 0.0]);
        let pol = OovPolicy::Random { seed: 4, scale: 0.1 };
        let t1 = read_embeddings("a 1 2\n".as_bytes(), &v, pol).unwrap();
        let t2 = read_embeddings("a 1 2\n".as_bytes(), &v, pol).unwrap();
        assert_eq!(t1.row(b), t2.row(b));
        assert!(t1.row(b).iter().any(|x| *x != 0.0));
        assert_eq!(t1.row(PAD), [0.0, 0.0]);
    }

    #[test]
    fn inconsistent_dimension_reports_line() {
        let v = build_vocab([tokenize("a")], 1);
        match read_embeddings("a 1 2\nb 1 2 3\n".as_bytes(), &v, OovPolicy::Zeros) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
