//! Claim/evidence datasets: record types, file IO, label schemes, filtering,
//! stratified splitting and the synthetic leakage generator.

mod io;
mod multifc;
mod scheme;
mod split;
mod synth;

use serde::{Deserialize, Serialize};

pub use io::{content_hash, load_corpus, normalize_domain, normalize_record, read_corpus, write_corpus};
pub use multifc::{convert_multifc, MultiFcRow};
pub use scheme::{group_three_class, merge_for_cross_eval, LabelScheme, VeracityGroup, CANONICAL_LABELS};
pub use split::{stratified_split, SplitBundle, SplitRatios};
pub use synth::{generate_leakage_corpus, marker_token, LeakageSpec};

/// Number of evidence slots per record.
pub const SNIPPET_SLOTS: usize = 10;

fn is_false(b: &bool) -> bool {
    !*b
}

/// One ranked search result used as evidence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSnippet {
    pub rank: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub source_domain: String,
    /// Set on slots that hold no crawled evidence.
    #[serde(default, skip_serializing_if = "is_false")]
    pub padded: bool,
}

impl EvidenceSnippet {
    pub fn new(rank: u8, text: impl Into<String>, source_domain: impl Into<String>) -> Self {
        EvidenceSnippet {
            rank,
            title: None,
            text: text.into(),
            source_domain: source_domain.into(),
            padded: false,
        }
    }

    pub fn pad(rank: u8) -> Self {
        EvidenceSnippet {
            rank,
            title: None,
            text: String::new(),
            source_domain: String::new(),
            padded: true,
        }
    }
}

/// One sample: a claim, its ranked evidence and its veracity label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub id: String,
    #[serde(rename = "claim")]
    pub claim_text: String,
    pub label: String,
    #[serde(default)]
    pub origin_domain: String,
    #[serde(default)]
    pub snippets: Vec<EvidenceSnippet>,
}

impl ClaimRecord {
    pub fn real_snippets(&self) -> impl Iterator<Item = &EvidenceSnippet> {
        self.snippets.iter().filter(|s| !s.padded)
    }

    pub fn has_evidence(&self) -> bool {
        self.real_snippets().next().is_some()
    }
}

/// Drops records whose label is one of the scheme's non-veracity labels.
pub fn filter_nonveracity(records: Vec<ClaimRecord>, scheme: &LabelScheme) -> Vec<ClaimRecord> {
    records.into_iter().filter(|r| !scheme.is_excluded(&r.label)).collect()
}
