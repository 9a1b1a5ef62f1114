use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClaimRecord, EvidenceSnippet, LabelScheme, CANONICAL_LABELS, SNIPPET_SLOTS};
use crate::error::{Error, Result};
use crate::seed;

pub const SYNTH_ORIGIN: &str = "factcheck.example";
const SOURCE_DOMAINS: usize = 40;

/// Parameters of the synthetic leakage corpus.
///
/// Each snippet at rank `r` carries its record's label marker with
/// probability `leakage * rank_decay^(r-1)`; each claim carries it with
/// probability `claim_signal`. All other tokens are label-independent filler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageSpec {
    pub labels: Vec<String>,
    pub n: usize,
    pub leakage: f64,
    pub rank_decay: f64,
    pub claim_signal: f64,
    #[serde(default)]
    pub label_weights: Option<Vec<f64>>,
    #[serde(default = "default_filler")]
    pub filler_vocab: usize,
    #[serde(default = "default_len")]
    pub claim_len: usize,
    #[serde(default = "default_len")]
    pub snippet_len: usize,
}

fn default_filler() -> usize {
    2000
}

fn default_len() -> usize {
    12
}

impl Default for LeakageSpec {
    fn default() -> Self {
        LeakageSpec {
            labels: CANONICAL_LABELS.iter().map(|s| s.to_string()).collect(),
            n: 1000,
            leakage: 0.8,
            rank_decay: 0.8,
            claim_signal: 0.0,
            label_weights: None,
            filler_vocab: default_filler(),
            claim_len: default_len(),
            snippet_len: default_len(),
        }
    }
}

/// The marker token correlated with label `index`.
pub fn marker_token(index: usize) -> String {
    format!("zzmark{index}")
}

fn filler_token(index: usize) -> String {
    format!("w{index}")
}

impl LeakageSpec {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {p} is not a probability")))
            }
        };
        prob("leakage", self.leakage)?;
        prob("rank_decay", self.rank_decay)?;
        prob("claim_signal", self.claim_signal)?;
        if self.labels.len() < 2 {
            return Err(Error::Config("synthetic corpus needs at least two labels".into()));
        }
        if self.filler_vocab == 0 || self.claim_len == 0 || self.snippet_len == 0 {
            return Err(Error::Config("filler vocabulary and lengths must be positive".into()));
        }
        if let Some(w) = &self.label_weights {
            if w.len() != self.labels.len()
                || w.iter().any(|x| !x.is_finite() || *x < 0.0)
                || w.iter().sum::<f64>() <= 0.0
            {
                return Err(Error::Config(
                    "label_weights must be one non-negative weight per label".into(),
                ));
            }
        }
        Ok(())
    }

    /// Probability that the snippet at `rank` (1-based) carries the marker.
    pub fn marker_probability(&self, rank: usize) -> f64 {
        self.leakage * self.rank_decay.powi(rank as i32 - 1)
    }

    /// Closed-form expected number of marked snippets per record.
    pub fn expected_markers_per_record(&self) -> f64 {
        (1..=SNIPPET_SLOTS).map(|r| self.marker_probability(r)).sum()
    }

    /// Label scheme matching the generated records.
    pub fn scheme(&self) -> LabelScheme {
        LabelScheme::custom("synthetic", self.labels.clone()).expect("validated labels")
    }
}

fn sentence<R: Rng>(rng: &mut R, len: usize, vocab: usize, marker: Option<&str>) -> String {
    let mut toks: Vec<String> = (0..len).map(|_| filler_token(rng.gen_range(0..vocab))).collect();
    if let Some(m) = marker {
        let at = rng.gen_range(0..len);
        toks[at] = m.to_string();
    }
    toks.join(" ")
}

/// Generates `spec.n` records deterministically from `seed`.
pub fn generate_leakage_corpus(spec: &LeakageSpec, seed: u64) -> Result<Vec<ClaimRecord>> {
    spec.validate()?;
    let weights = spec
        .label_weights
        .clone()
        .unwrap_or_else(|| vec![1.0; spec.labels.len()]);
    let label_dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let y = label_dist.sample(&mut rng);
        let marker = marker_token(y);
        let claim_marker = rng.gen_bool(spec.claim_signal).then_some(marker.as_str());
        let claim = sentence(&mut rng, spec.claim_len, spec.filler_vocab, claim_marker);
        let snippets = (1..=SNIPPET_SLOTS)
            .map(|rank| {
                let marked = rng.gen_bool(spec.marker_probability(rank));
                let text = sentence(
                    &mut rng,
                    spec.snippet_len,
                    spec.filler_vocab,
                    marked.then_some(marker.as_str()),
                );
                let domain = format!("site{}.example", rng.gen_range(0..SOURCE_DOMAINS));
                EvidenceSnippet::new(rank as u8, text, domain)
            })
            .collect();
        out.push(ClaimRecord {
            id: format!("synth-{i:06}"),
            claim_text: claim,
            label: spec.labels[y].clone(),
            origin_domain: SYNTH_ORIGIN.into(),
            snippets,
        });
    }
    Ok(out)
}
