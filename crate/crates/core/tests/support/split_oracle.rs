//! Exhaustive split search used as the oracle for the tree builder.

use std::collections::BTreeMap;

use factprobe::features::SparseVector;
use factprobe::forest::{fit_forest, ForestConfig, MaxFeatures, Node};

/// The six-point, two-feature fixture and its labels.
#[allow(dead_code)]
pub fn six_points() -> (Vec<Vec<f64>>, Vec<usize>) {
    let rows = vec![
        vec![0.0, 3.0],
        vec![1.0, 0.0],
        vec![2.0, 1.0],
        vec![2.0, 4.0],
        vec![3.0, 2.0],
        vec![5.0, 5.0],
    ];
    (rows, vec![0, 0, 1, 0, 1, 1])
}

pub fn dense(dim: usize, rows: &[Vec<f64>]) -> Vec<SparseVector> {
    rows.iter()
        .map(|r| {
            let map: BTreeMap<u32, f64> = r
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as u32, *v))
                .collect();
            SparseVector::from_map(dim, map)
        })
        .collect()
}

pub fn gini(y: &[usize], n_labels: usize) -> f64 {
    let mut c = vec![0.0; n_labels];
    for &l in y {
        c[l] += 1.0;
    }
    let n = y.len() as f64;
    1.0 - c.iter().map(|x| (x / n) * (x / n)).sum::<f64>()
}

/// Exhaustive search over every feature and every midpoint threshold.
pub fn brute_force_root(rows: &[Vec<f64>], y: &[usize], n_labels: usize, min_leaf: usize) -> Option<(u32, f64, f64)> {
    let n = rows.len() as f64;
    let parent = gini(y, n_labels);
    let mut best: Option<(u32, f64, f64)> = None;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let left: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][f] <= t).map(|i| y[i]).collect();
            let right: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][f] > t).map(|i| y[i]).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let gain = parent
                - left.len() as f64 / n * gini(&left, n_labels)
                - right.len() as f64 / n * gini(&right, n_labels);
            let better = match best {
                None => true,
                Some((bf, bt, bg)) => gain > bg + 1e-12 || ((gain - bg).abs() <= 1e-12 && (f as u32, t) < (bf, bt)),
            };
            if better {
                best = Some((f as u32, t, gain));
            }
        }
    }
    best.filter(|b| b.2 > 1e-12)
}

pub fn single_tree() -> ForestConfig {
    ForestConfig {
        n_trees: 1,
        min_samples_leaf: 1,
        min_samples_split: 2,
        features_per_split: MaxFeatures::All,
        bootstrap: false,
        max_depth: None,
        seed: 3,
    }
}

pub fn root_of(rows: &[Vec<f64>], y: &[usize], n_labels: usize, config: &ForestConfig) -> Option<(u32, f64)> {
    let x = dense(rows[0].len(), rows);
    let model = fit_forest(&x, y, n_labels, config).unwrap();
    match &model.trees[0].nodes[0] {
        Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
        Node::Leaf { .. } => None,
    }
}
