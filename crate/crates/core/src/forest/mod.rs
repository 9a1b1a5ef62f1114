//! Random forest over sparse term-frequency vectors, split by Gini impurity.

mod tree;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::seed;

pub use tree::{DecisionTree, Node, SplitChoice, GAIN_TIE};
use tree::{TreeBuilder, TreeParams};

/// Gini impurity `1 - sum_k (c_k / n)^2` of a label-count vector.
pub fn gini_impurity(counts: &[u64]) -> Result<f64> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Empty("gini impurity of all-zero counts".into()));
    }
    let f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    Ok(tree::gini_weighted(&f, n as f64))
}

/// How many candidate features to examine per split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, dim: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((dim as f64).sqrt().round() as usize).max(1),
            MaxFeatures::All => dim.max(1),
            MaxFeatures::Count(n) => n.clamp(1, dim.max(1)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub features_per_split: MaxFeatures,
    pub bootstrap: bool,
    #[serde(default)]
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self::best()
    }
}

impl ForestConfig {
    /// The best configuration from the published tuning run.
    pub fn best() -> Self {
        ForestConfig {
            n_trees: 1000,
            min_samples_leaf: 3,
            min_samples_split: 10,
            features_per_split: MaxFeatures::Sqrt,
            bootstrap: true,
            max_depth: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_samples_leaf == 0 || self.min_samples_split < 2 {
            return Err(Error::Config(format!(
                "forest needs n_trees >= 1, min_samples_leaf >= 1, min_samples_split >= 2 (got {}, {}, {})",
                self.n_trees, self.min_samples_leaf, self.min_samples_split
            )));
        }
        Ok(())
    }

    /// Short stable description used in grid tables.
    pub fn describe(&self) -> String {
        format!(
            "trees={} leaf={} split={}",
            self.n_trees, self.min_samples_leaf, self.min_samples_split
        )
    }
}

/// Hyperparameter grid for the forest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestGrid {
    pub n_trees: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
}

impl Default for ForestGrid {
    fn default() -> Self {
        ForestGrid {
            n_trees: vec![100, 500, 1000],
            min_samples_leaf: vec![1, 3, 5, 10],
            min_samples_split: vec![2, 5, 10],
        }
    }
}

impl ForestGrid {
    pub fn configs(&self, base: &ForestConfig) -> Vec<ForestConfig> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &min_samples_leaf in &self.min_samples_leaf {
                for &min_samples_split in &self.min_samples_split {
                    out.push(ForestConfig {
                        n_trees,
                        min_samples_leaf,
                        min_samples_split,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub n_labels: usize,
    pub dim: usize,
    pub trees: Vec<DecisionTree>,
    /// Accuracy of out-of-bag votes on the training set, when bootstrapping.
    pub oob_accuracy: Option<f64>,
}

struct FittedTree {
    tree: DecisionTree,
    oob: Vec<(usize, Vec<f64>)>,
}

fn fit_one(
    x: &[SparseVector],
    y: &[usize],
    dim: usize,
    params: &TreeParams,
    config: &ForestConfig,
    index: usize,
) -> FittedTree {
    let mut rng = seed::rng_at(config.seed, &[index as u64]);
    let n = x.len();
    let mut weight = vec![0u32; n];
    if config.bootstrap {
        for _ in 0..n {
            weight[rng.gen_range(0..n)] += 1;
        }
    } else {
        weight.iter_mut().for_each(|w| *w = 1);
    }
    let samples: Vec<usize> = (0..n).filter(|&i| weight[i] > 0).collect();
    let tree = TreeBuilder::new(x, y, &weight, dim, params).build(samples, &mut rng);
    let oob = (0..n)
        .filter(|&i| weight[i] == 0)
        .map(|i| (i, tree.predict_distribution(&x[i])))
        .collect();
    FittedTree { tree, oob }
}

/// Fits `config.n_trees` trees. Each tree draws from its own seed-derived
/// stream, so the result does not depend on the thread count.
pub fn fit_forest(x: &[SparseVector], y: &[usize], n_labels: usize, config: &ForestConfig) -> Result<ForestModel> {
    config.validate()?;
    if x.is_empty() {
        return Err(Error::Empty("forest training set".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= n_labels) {
        return Err(Error::Dimension {
            expected: n_labels,
            actual: bad + 1,
        });
    }
    let dim = x.iter().map(|v| v.dim).max().unwrap_or(0);
    let params = TreeParams {
        n_labels,
        min_samples_leaf: config.min_samples_leaf,
        min_samples_split: config.min_samples_split,
        max_features: config.features_per_split.resolve(dim),
        max_depth: config.max_depth,
    };
    let fitted: Vec<FittedTree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| fit_one(x, y, dim, &params, config, t))
        .collect();

    let mut oob_sum = vec![vec![0.0; n_labels]; x.len()];
    let mut oob_seen = vec![false; x.len()];
    let mut trees = Vec::with_capacity(fitted.len());
    for f in fitted {
        for (i, d) in f.oob {
            oob_seen[i] = true;
            for (a, b) in oob_sum[i].iter_mut().zip(d) {
                *a += b;
            }
        }
        trees.push(f.tree);
    }
    let oob_accuracy = if config.bootstrap {
        let (mut hit, mut seen) = (0usize, 0usize);
        for i in 0..x.len() {
            if oob_seen[i] {
                seen += 1;
                if argmax(&oob_sum[i]) == y[i] {
                    hit += 1;
                }
            }
        }
        (seen > 0).then(|| hit as f64 / seen as f64)
    } else {
        None
    };
    Ok(ForestModel {
        config: config.clone(),
        n_labels,
        dim,
        trees,
        oob_accuracy,
    })
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean of the per-tree leaf label distributions.
pub fn predict_forest(model: &ForestModel, x: &SparseVector) -> Vec<f64> {
    let mut p = vec![0.0; model.n_labels];
    for t in &model.trees {
        for (a, b) in p.iter_mut().zip(t.predict_distribution(x)) {
            *a += b;
        }
    }
    let n = model.trees.len() as f64;
    p.iter_mut().for_each(|v| *v /= n);
    p
}
