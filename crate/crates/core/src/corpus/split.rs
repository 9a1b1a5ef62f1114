use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ClaimRecord;
use crate::error::{Error, Result};
use crate::seed;

/// Fractions of each label assigned to train, validation and test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            val: 0.10,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    fn validate(&self) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios {r:?} must be non-negative and sum to 1"
            )));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items. Remainder ties go to the
    /// earlier part, so the test part is filled last.
    pub fn apportion(&self, n: usize) -> [usize; 3] {
        let quotas = self.as_array().map(|r| r * n as f64);
        let mut counts = quotas.map(|q| q.floor() as usize);
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &i in order.iter().take(n.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        counts
    }
}

/// A disjoint, exhaustive, label-stratified partition of a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitBundle {
    pub train: Vec<ClaimRecord>,
    pub val: Vec<ClaimRecord>,
    pub test: Vec<ClaimRecord>,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl SplitBundle {
    pub fn parts(&self) -> [(&'static str, &[ClaimRecord]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

/// Minimum records per label needed to place one in every part.
pub const MIN_PER_LABEL: usize = 3;

/// Splits per label: each label's records are shuffled with a seed-derived
/// stream and cut by [`SplitRatios::apportion`]. Within each part records
/// keep their input order.
pub fn stratified_split(records: &[ClaimRecord], seed: u64, ratios: SplitRatios) -> Result<SplitBundle> {
    ratios.validate()?;
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_label.entry(r.label.as_str()).or_default().push(i);
    }
    if let Some((label, idx)) = by_label.iter().find(|(_, v)| v.len() < MIN_PER_LABEL) {
        return Err(Error::TooFewRecords {
            label: label.to_string(),
            count: idx.len(),
            required: MIN_PER_LABEL,
        });
    }

    let mut assignment = vec![0u8; records.len()];
    for (label, mut idx) in by_label {
        let mut rng = seed::rng_at(seed, &[seed::tag(label)]);
        idx.shuffle(&mut rng);
        let [n_train, n_val, _] = ratios.apportion(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            assignment[i] = if k < n_train {
                0
            } else if k < n_train + n_val {
                1
            } else {
                2
            };
        }
    }

    let mut parts: [Vec<ClaimRecord>; 3] = Default::default();
    for (r, &p) in records.iter().zip(&assignment) {
        parts[p as usize].push(r.clone());
    }
    let [train, val, test] = parts;
    Ok(SplitBundle {
        train,
        val,
        test,
        ratios,
        seed,
    })
}
