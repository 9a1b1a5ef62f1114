use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::SparseVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

/// A fitted classification tree. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_counts(&self, x: &SparseVector) -> &[u32] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(*feature) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Normalized label histogram of the leaf reached by `x`.
    pub fn predict_distribution(&self, x: &SparseVector) -> Vec<f64> {
        let counts = self.leaf_counts(x);
        let total: u32 = counts.iter().sum();
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left as usize).max(go(t, *right as usize)),
            }
        }
        go(self, 0)
    }
}

/// Gini impurity of weighted label counts with total `n`.
pub(crate) fn gini_weighted(counts: &[f64], n: f64) -> f64 {
    1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
}

/// Gains closer than this are treated as tied, so rounding in the impurity
/// sums cannot decide between mathematically equal splits.
pub const GAIN_TIE: f64 = 1e-12;

/// The winning split at a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: u32,
    pub threshold: f64,
    pub gain: f64,
}

impl SplitChoice {
    /// Higher gain wins; gains within [`GAIN_TIE`] of each other are equal
    /// and go to the lower feature, then the lower threshold.
    fn beats(&self, other: &Option<SplitChoice>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.gain > o.gain + GAIN_TIE
                    || ((self.gain - o.gain).abs() <= GAIN_TIE
                        && (self.feature, self.threshold) < (o.feature, o.threshold))
            }
        }
    }
}

pub(crate) struct TreeParams {
    pub n_labels: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_features: usize,
    pub max_depth: Option<usize>,
}

/// Reusable per-tree scratch space.
struct Scratch {
    slot: Vec<u32>,
    seen: Vec<u32>,
    stamp: u32,
}

const NO_SLOT: u32 = u32::MAX;

pub(crate) struct TreeBuilder<'a> {
    x: &'a [SparseVector],
    y: &'a [usize],
    weight: &'a [u32],
    params: &'a TreeParams,
    scratch: Scratch,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(x: &'a [SparseVector], y: &'a [usize], weight: &'a [u32], dim: usize, params: &'a TreeParams) -> Self {
        TreeBuilder {
            x,
            y,
            weight,
            params,
            scratch: Scratch {
                slot: vec![NO_SLOT; dim],
                seen: vec![0; dim],
                stamp: 0,
            },
            nodes: Vec::new(),
        }
    }

    fn counts(&self, samples: &[usize]) -> (Vec<f64>, f64) {
        let mut c = vec![0.0; self.params.n_labels];
        for &s in samples {
            c[self.y[s]] += self.weight[s] as f64;
        }
        let n = c.iter().sum();
        (c, n)
    }

    /// Features with a nonzero value in at least one sample of the node, in
    /// ascending order.
    fn candidate_features(&mut self, samples: &[usize]) -> Vec<u32> {
        self.scratch.stamp = self.scratch.stamp.wrapping_add(1);
        if self.scratch.stamp == 0 {
            self.scratch.seen.iter_mut().for_each(|s| *s = 0);
            self.scratch.stamp = 1;
        }
        let stamp = self.scratch.stamp;
        let mut out = Vec::new();
        for &s in samples {
            for &(f, _) in &self.x[s].entries {
                let seen = &mut self.scratch.seen[f as usize];
                if *seen != stamp {
                    *seen = stamp;
                    out.push(f);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Best threshold for one feature given its nonzero entries at the node.
    /// Returns `None` when the feature is constant at the node.
    fn best_threshold(
        &self,
        feature: u32,
        mut entries: Vec<(f64, usize)>,
        parent: &[f64],
        total: f64,
    ) -> Option<Option<SplitChoice>> {
        let l = self.params.n_labels;
        let mut zero_counts = parent.to_vec();
        let mut zero_weight = total;
        for &(_, s) in &entries {
            let w = self.weight[s] as f64;
            zero_counts[self.y[s]] -= w;
            zero_weight -= w;
        }
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

        // Groups of equal value in ascending order, the implicit zeros first.
        let mut groups: Vec<(f64, Vec<f64>, f64)> = Vec::new();
        if zero_weight > 0.0 {
            groups.push((0.0, zero_counts, zero_weight));
        }
        for &(v, s) in &entries {
            let w = self.weight[s] as f64;
            match groups.last_mut() {
                Some(g) if g.0 == v => {
                    g.1[self.y[s]] += w;
                    g.2 += w;
                }
                _ => {
                    let mut c = vec![0.0; l];
                    c[self.y[s]] = w;
                    groups.push((v, c, w));
                }
            }
        }
        if groups.len() < 2 {
            return None;
        }

        let parent_gini = gini_weighted(parent, total);
        let min_leaf = self.params.min_samples_leaf as f64;
        let mut left = vec![0.0; l];
        let mut left_w = 0.0;
        let mut best: Option<SplitChoice> = None;
        for pair in groups.windows(2) {
            let (v_lo, c_lo, w_lo) = &pair[0];
            for (a, b) in left.iter_mut().zip(c_lo) {
                *a += b;
            }
            left_w += w_lo;
            let right_w = total - left_w;
            if left_w < min_leaf || right_w < min_leaf {
                continue;
            }
            let right: Vec<f64> = parent.iter().zip(&left).map(|(p, a)| p - a).collect();
            let gain = parent_gini
                - (left_w / total) * gini_weighted(&left, left_w)
                - (right_w / total) * gini_weighted(&right, right_w);
            let cand = SplitChoice {
                feature,
                threshold: 0.5 * (v_lo + pair[1].0),
                gain,
            };
            if cand.beats(&best) {
                best = Some(cand);
            }
        }
        Some(best)
    }

    /// Searches sampled candidate features for the best split.
    pub fn find_split(&mut self, samples: &[usize], rng: &mut ChaCha8Rng) -> Option<SplitChoice> {
        let (parent, total) = self.counts(samples);
        let mut cand = self.candidate_features(samples);
        let mut best: Option<SplitChoice> = None;
        let mut informative = 0usize;
        let mut next = 0usize;
        while informative < self.params.max_features && next < cand.len() {
            let want = (self.params.max_features - informative).min(cand.len() - next);
            // partial Fisher-Yates over the remaining candidates
            for i in next..next + want {
                let j = rng.gen_range(i..cand.len());
                cand.swap(i, j);
            }
            let batch: Vec<u32> = cand[next..next + want].to_vec();
            next += want;

            for (k, &f) in batch.iter().enumerate() {
                self.scratch.slot[f as usize] = k as u32;
            }
            let mut buckets: Vec<Vec<(f64, usize)>> = vec![Vec::new(); batch.len()];
            for &s in samples {
                for &(f, v) in &self.x[s].entries {
                    let k = self.scratch.slot[f as usize];
                    if k != NO_SLOT {
                        buckets[k as usize].push((v, s));
                    }
                }
            }
            for &f in &batch {
                self.scratch.slot[f as usize] = NO_SLOT;
            }

            for (f, entries) in batch.into_iter().zip(buckets) {
                if let Some(choice) = self.best_threshold(f, entries, &parent, total) {
                    informative += 1;
                    if let Some(c) = choice {
                        if c.beats(&best) {
                            best = Some(c);
                        }
                    }
                }
            }
        }
        best
    }

    fn leaf(&mut self, counts: &[f64]) -> u32 {
        self.nodes.push(Node::Leaf {
            counts: counts.iter().map(|&c| c as u32).collect(),
        });
        (self.nodes.len() - 1) as u32
    }

    pub fn build(mut self, root_samples: Vec<usize>, rng: &mut ChaCha8Rng) -> DecisionTree {
        // Explicit stack: (samples, depth, parent slot to patch).
        enum Patch {
            Root,
            Left(usize),
            Right(usize),
        }
        let mut stack = vec![(root_samples, 0usize, Patch::Root)];
        while let Some((samples, depth, patch)) = stack.pop() {
            let (counts, total) = self.counts(&samples);
            let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
            let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
            let split = if pure || depth_capped || total < self.params.min_samples_split as f64 {
                None
            } else {
                self.find_split(&samples, rng).filter(|s| s.gain > GAIN_TIE)
            };
            let id = match split {
                None => self.leaf(&counts),
                Some(s) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        samples.iter().partition(|&&i| self.x[i].get(s.feature) <= s.threshold);
                    self.nodes.push(Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left: 0,
                        right: 0,
                    });
                    let id = self.nodes.len() - 1;
                    stack.push((r, depth + 1, Patch::Right(id)));
                    stack.push((l, depth + 1, Patch::Left(id)));
                    id as u32
                }
            };
            match patch {
                Patch::Root => {}
                Patch::Left(p) => {
                    if let Node::Split { left, .. } = &mut self.nodes[p] {
                        *left = id;
                    }
                }
                Patch::Right(p) => {
                    if let Node::Split { right, .. } = &mut self.nodes[p] {
                        *right = id;
                    }
                }
            }
        }
        DecisionTree { nodes: self.nodes }
    }
}
