use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Shared label set that both built-in schemes merge onto for cross-dataset
/// scoring.
pub const CANONICAL_LABELS: [&str; 5] = ["false", "mostly false", "mixture", "mostly true", "true"];

/// Three-way veracity grouping used for grouped accuracies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VeracityGroup {
    FalseGroup,
    MixGroup,
    TrueGroup,
}

impl VeracityGroup {
    pub const ALL: [VeracityGroup; 3] = [Self::FalseGroup, Self::MixGroup, Self::TrueGroup];

    pub fn index(self) -> usize {
        match self {
            Self::FalseGroup => 0,
            Self::MixGroup => 1,
            Self::TrueGroup => 2,
        }
    }
}

/// Ordered label set of a dataset together with its exclusion list and the
/// merge and grouping maps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub name: String,
    pub labels: Vec<String>,
    #[serde(default)]
    pub excluded: Vec<String>,
    #[serde(default)]
    pub merge_map: BTreeMap<String, String>,
    #[serde(default)]
    pub group_map: BTreeMap<String, VeracityGroup>,
}

fn owned(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn standard_groups(labels: &[String]) -> BTreeMap<String, VeracityGroup> {
    labels
        .iter()
        .filter_map(|l| {
            let g = match l.as_str() {
                "pants on fire!" | "false" | "mostly false" => VeracityGroup::FalseGroup,
                "half-true" | "mixture" => VeracityGroup::MixGroup,
                "mostly true" | "true" => VeracityGroup::TrueGroup,
                _ => return None,
            };
            Some((l.clone(), g))
        })
        .collect()
}

impl LabelScheme {
    /// PolitiFact labels, with the flip-flop ratings excluded.
    pub fn politifact() -> Self {
        let labels = owned(&[
            "pants on fire!",
            "false",
            "mostly false",
            "half-true",
            "mostly true",
            "true",
        ]);
        let merge_map = [
            ("pants on fire!", "false"),
            ("false", "false"),
            ("mostly false", "mostly false"),
            ("half-true", "mixture"),
            ("mostly true", "mostly true"),
            ("true", "true"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        LabelScheme {
            name: "politifact".into(),
            group_map: standard_groups(&labels),
            labels,
            excluded: owned(&["full flop", "half flip", "no flip"]),
            merge_map,
        }
    }

    /// Snopes labels, with the non-veracity ratings excluded.
    pub fn snopes() -> Self {
        let labels = owned(&CANONICAL_LABELS);
        LabelScheme {
            name: "snopes".into(),
            group_map: standard_groups(&labels),
            merge_map: labels.iter().map(|l| (l.clone(), l.clone())).collect(),
            labels,
            excluded: owned(&[
                "unproven",
                "miscaptioned",
                "legend",
                "outdated",
                "misattributed",
                "scam",
                "correct attribution",
            ]),
        }
    }

    /// The canonical five-label scheme with identity merge.
    pub fn canonical() -> Self {
        let labels = owned(&CANONICAL_LABELS);
        LabelScheme {
            name: "canonical".into(),
            group_map: standard_groups(&labels),
            merge_map: labels.iter().map(|l| (l.clone(), l.clone())).collect(),
            labels,
            excluded: Vec::new(),
        }
    }

    /// A custom scheme over arbitrary labels. Merge and group maps are filled
    /// in for any label that is already canonical.
    pub fn custom(name: &str, labels: Vec<String>) -> Result<Self> {
        let all_canonical = labels.iter().all(|l| CANONICAL_LABELS.contains(&l.as_str()));
        let scheme = LabelScheme {
            name: name.to_string(),
            group_map: if all_canonical {
                standard_groups(&labels)
            } else {
                BTreeMap::new()
            },
            merge_map: if all_canonical {
                labels.iter().map(|l| (l.clone(), l.clone())).collect()
            } else {
                BTreeMap::new()
            },
            labels,
            excluded: Vec::new(),
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "politifact" => Some(Self::politifact()),
            "snopes" => Some(Self::snopes()),
            "canonical" => Some(Self::canonical()),
            _ => None,
        }
    }

    /// Resolves a built-in name, or else reads a TOML scheme file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::builtin(name_or_path) {
            Some(s) => Ok(s),
            None => Self::load(Path::new(name_or_path)),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scheme: LabelScheme = toml::from_str(text).map_err(|e| Error::Config(format!("label scheme: {e}")))?;
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("label scheme serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::Config(format!("scheme {} has no labels", self.name)));
        }
        let mut seen = BTreeSet::new();
        for l in &self.labels {
            if !seen.insert(l) {
                return Err(Error::Config(format!("scheme {}: duplicate label {l:?}", self.name)));
            }
        }
        if !self.merge_map.is_empty() {
            for l in &self.labels {
                match self.merge_map.get(l) {
                    None => {
                        return Err(Error::Config(format!(
                            "scheme {}: merge_map missing label {l:?}",
                            self.name
                        )))
                    }
                    Some(t) if !CANONICAL_LABELS.contains(&t.as_str()) => {
                        return Err(Error::Config(format!(
                            "scheme {}: {l:?} merges to non-canonical {t:?}",
                            self.name
                        )))
                    }
                    _ => {}
                }
            }
        }
        if !self.group_map.is_empty() {
            if let Some(l) = self.labels.iter().find(|l| !self.group_map.contains_key(*l)) {
                return Err(Error::Config(format!(
                    "scheme {}: group_map missing label {l:?}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn require_index(&self, label: &str) -> Result<usize> {
        self.index_of(label).ok_or_else(|| self.unknown(label))
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn is_excluded(&self, label: &str) -> bool {
        self.excluded.iter().any(|l| l == label)
    }

    pub fn has_merge_map(&self) -> bool {
        !self.merge_map.is_empty()
    }

    pub fn has_group_map(&self) -> bool {
        !self.group_map.is_empty()
    }

    fn unknown(&self, label: &str) -> Error {
        Error::UnknownLabel {
            label: label.to_string(),
            scheme: self.name.clone(),
        }
    }

    /// Content hash over the labels and maps; the scheme name is excluded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.labels {
            h.update(l.as_bytes());
            h.update([0]);
        }
        h.update([1]);
        for (k, v) in &self.merge_map {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        h.update([1]);
        for (k, v) in &self.group_map {
            h.update(k.as_bytes());
            h.update([v.index() as u8]);
        }
        hex::encode(h.finalize())
    }
}

/// Maps a label onto the shared canonical set used for cross-dataset scoring.
pub fn merge_for_cross_eval<'a>(label: &str, scheme: &'a LabelScheme) -> Result<&'a str> {
    if scheme.index_of(label).is_none() {
        return Err(scheme.unknown(label));
    }
    scheme
        .merge_map
        .get(label)
        .map(String::as_str)
        .ok_or_else(|| Error::SchemeMismatch(format!("scheme {} has no merge map", scheme.name)))
}

pub fn group_three_class(label: &str, scheme: &LabelScheme) -> Result<VeracityGroup> {
    if scheme.index_of(label).is_none() {
        return Err(scheme.unknown(label));
    }
    scheme
        .group_map
        .get(label)
        .copied()
        .ok_or_else(|| Error::SchemeMismatch(format!("scheme {} has no group map", scheme.name)))
}
