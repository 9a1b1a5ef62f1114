//! Trained (model family, input regime) pairs behind one prediction
//! interface.

mod assets;
mod checkpoint;
mod contextual;
mod forest_probe;
mod recurrent;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClaimRecord, LabelScheme, SplitBundle};
use crate::error::{Error, Result};
use crate::eval::metrics::selection_score;
use crate::forest::{argmax, ForestConfig};
use crate::neural::{TrainConfig, TrainHistory};

pub use assets::{FeatureAssets, FeatureSettings};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use contextual::{ContextualInput, ContextualModel, ContextualNet, ContextualParams, TransformerArch};
pub use forest_probe::{regime_tokens, regime_vector, ForestProbe};
pub use recurrent::{RecurrentInput, RecurrentModel, RecurrentNet, RecurrentParams};

/// Which parts of a record a probe may look at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InputRegime {
    ClaimOnly,
    EvidenceOnly,
    ClaimPlusEvidence,
}

impl InputRegime {
    pub const ALL: [InputRegime; 3] = [Self::ClaimOnly, Self::EvidenceOnly, Self::ClaimPlusEvidence];

    pub fn uses_claim(self) -> bool {
        self != Self::EvidenceOnly
    }

    pub fn uses_evidence(self) -> bool {
        self != Self::ClaimOnly
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ClaimOnly => "claim",
            Self::EvidenceOnly => "evidence",
            Self::ClaimPlusEvidence => "claim+evidence",
        }
    }
}

impl fmt::Display for InputRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "claim" | "claimonly" | "c" => Ok(Self::ClaimOnly),
            "evidence" | "evidenceonly" | "e" => Ok(Self::EvidenceOnly),
            "claim+evidence" | "claimplusevidence" | "c+e" | "both" => Ok(Self::ClaimPlusEvidence),
            other => Err(Error::Config(format!("unknown input regime '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Forest,
    Recurrent,
    Contextual,
}

impl Family {
    pub const ALL: [Family; 3] = [Self::Forest, Self::Recurrent, Self::Contextual];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Forest => "forest",
            Self::Recurrent => "recurrent",
            Self::Contextual => "contextual",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "forest" | "rf" => Ok(Self::Forest),
            "recurrent" | "lstm" => Ok(Self::Recurrent),
            "contextual" | "transformer" | "bert" => Ok(Self::Contextual),
            other => Err(Error::Config(format!("unknown model family '{other}'"))),
        }
    }
}

/// Output of a probe for one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub probabilities: Vec<f64>,
    pub argmax: usize,
    /// The regime needed evidence but every slot was padded, so the zero
    /// vector stood in for it.
    pub evidence_missing: bool,
}

impl PredictionDistribution {
    pub fn new(probabilities: Vec<f64>, evidence_missing: bool) -> Self {
        let argmax = argmax(&probabilities);
        PredictionDistribution {
            probabilities,
            argmax,
            evidence_missing,
        }
    }
}

/// Hyperparameters for one fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyper {
    Forest(ForestConfig),
    Neural(TrainConfig),
}

impl Hyper {
    pub fn describe(&self) -> String {
        match self {
            Hyper::Forest(c) => c.describe(),
            Hyper::Neural(c) => c.describe(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProbeModel {
    Forest(ForestProbe),
    Recurrent(RecurrentModel),
    Contextual(ContextualModel),
}

/// A trained probe. Immutable once fitted; prediction is thread-safe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub regime: InputRegime,
    pub scheme: LabelScheme,
    /// Content hash of the training split.
    pub train_hash: String,
    pub hyper: Hyper,
    pub history: Option<TrainHistory>,
    pub model: ProbeModel,
}

impl Probe {
    pub fn family(&self) -> Family {
        match self.model {
            ProbeModel::Forest(_) => Family::Forest,
            ProbeModel::Recurrent(_) => Family::Recurrent,
            ProbeModel::Contextual(_) => Family::Contextual,
        }
    }

    /// `family-regime`, e.g. `forest-evidence`.
    pub fn name(&self) -> String {
        probe_name(self.family(), self.regime)
    }

    /// Hash of the vocabulary and embedding assets the probe was fitted with.
    pub fn asset_hash(&self) -> &str {
        match &self.model {
            ProbeModel::Forest(m) => &m.asset_hash,
            ProbeModel::Recurrent(m) => &m.assets.hash,
            ProbeModel::Contextual(m) => &m.assets.hash,
        }
    }

    pub fn predict(&self, record: &ClaimRecord) -> Result<PredictionDistribution> {
        let dist = match &self.model {
            ProbeModel::Forest(m) => m.predict(record, self.regime),
            ProbeModel::Recurrent(m) => m.predict(record)?,
            ProbeModel::Contextual(m) => m.predict(record)?,
        };
        if dist.probabilities.len() != self.scheme.len() {
            return Err(Error::Dimension {
                expected: self.scheme.len(),
                actual: dist.probabilities.len(),
            });
        }
        Ok(dist)
    }

    /// Predictions for every record, computed in parallel, returned in input
    /// order.
    pub fn predict_all(&self, records: &[ClaimRecord]) -> Result<Vec<PredictionDistribution>> {
        records.par_iter().map(|r| self.predict(r)).collect()
    }
}

pub fn probe_name(family: Family, regime: InputRegime) -> String {
    let r = match regime {
        InputRegime::ClaimOnly => "claim",
        InputRegime::EvidenceOnly => "evidence",
        InputRegime::ClaimPlusEvidence => "claim_evidence",
    };
    format!("{family}-{r}")
}

/// Validation scores of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub val_micro_f1: f64,
    pub val_macro_f1: f64,
    /// Mean of the two, used for model selection.
    pub val_score: f64,
}

fn gold_indices(records: &[ClaimRecord], scheme: &LabelScheme) -> Result<Vec<usize>> {
    records.iter().map(|r| scheme.require_index(&r.label)).collect()
}

/// Fits one probe on `splits.train` and scores it on `splits.val`. Neural
/// families also use the validation split for early stopping.
pub fn fit_probe(
    family: Family,
    regime: InputRegime,
    splits: &SplitBundle,
    scheme: &LabelScheme,
    assets: &FeatureAssets,
    arch: &TransformerArch,
    hyper: &Hyper,
) -> Result<(Probe, FitReport)> {
    let y_train = gold_indices(&splits.train, scheme)?;
    let y_val = gold_indices(&splits.val, scheme)?;
    let (model, history) = match (family, hyper) {
        (Family::Forest, Hyper::Forest(config)) => {
            let m = ForestProbe::fit(&splits.train, &y_train, scheme.len(), regime, assets, config)?;
            (ProbeModel::Forest(m), None)
        }
        (Family::Recurrent, Hyper::Neural(config)) => {
            let (m, h) = RecurrentModel::fit(
                &splits.train,
                &y_train,
                &splits.val,
                &y_val,
                scheme.len(),
                regime,
                assets,
                config,
            )?;
            (ProbeModel::Recurrent(m), Some(h))
        }
        (Family::Contextual, Hyper::Neural(config)) => {
            let (m, h) = ContextualModel::fit(
                &splits.train,
                &y_train,
                &splits.val,
                &y_val,
                scheme.len(),
                regime,
                assets,
                arch,
                config,
            )?;
            (ProbeModel::Contextual(m), Some(h))
        }
        (f, h) => {
            return Err(Error::Config(format!(
                "hyperparameters {} do not fit the {f} family",
                h.describe()
            )))
        }
    };
    let probe = Probe {
        regime,
        scheme: scheme.clone(),
        train_hash: crate::corpus::content_hash(&splits.train),
        hyper: hyper.clone(),
        history,
        model,
    };
    let preds: Vec<usize> = probe.predict_all(&splits.val)?.into_iter().map(|d| d.argmax).collect();
    let (val_micro_f1, val_macro_f1, val_score) = selection_score(&preds, &y_val, scheme.len())?;
    Ok((
        probe,
        FitReport {
            val_micro_f1,
            val_macro_f1,
            val_score,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_back() {
        for r in InputRegime::ALL {
            assert_eq!(r.as_str().parse::<InputRegime>().unwrap(), r);
        }
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("nonsense".parse::<Family>().is_err());
        assert_eq!(
            probe_name(Family::Forest, InputRegime::ClaimPlusEvidence),
            "forest-claim_evidence"
        );
    }

    #[test]
    fn distribution_argmax_prefers_lowest_index() {
        let d = PredictionDistribution::new(vec![0.4, 0.4, 0.2], false);
        assert_eq!(d.argmax, 0);
    }
}
