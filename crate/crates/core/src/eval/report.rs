use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, macro_f1, micro_f1, per_label_stats, LabelStats};
use crate::corpus::{group_three_class, merge_for_cross_eval, ClaimRecord, LabelScheme, VeracityGroup};
use crate::error::{Error, Result};
use crate::probes::Probe;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EvalMode {
    /// Test split of the dataset the probe was trained on, native labels.
    Within,
    /// Another dataset, scored after mapping both sides onto the canonical
    /// labels.
    Cross,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Within => "within",
            EvalMode::Cross => "cross",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub probe: String,
    pub dataset: String,
    pub mode: EvalMode,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Labels the per-label statistics refer to.
    pub labels: Vec<String>,
    pub per_label: Vec<LabelStats>,
    /// Recall of each veracity group (false, mixture, true); `None` when the
    /// scheme has no grouping or the group has no gold items.
    pub grouped: [Option<f64>; 3],
    pub n_items: usize,
    pub n_evidence_missing: usize,
}

/// Per-group recall: the share of items whose gold label falls in a group
/// whose predicted label falls in the same group.
pub fn grouped_accuracy(pred_groups: &[VeracityGroup], gold_groups: &[VeracityGroup]) -> [Option<f64>; 3] {
    let mut hit = [0usize; 3];
    let mut total = [0usize; 3];
    for (p, g) in pred_groups.iter().zip(gold_groups) {
        total[g.index()] += 1;
        if p == g {
            hit[g.index()] += 1;
        }
    }
    std::array::from_fn(|i| (total[i] > 0).then(|| hit[i] as f64 / total[i] as f64))
}

fn groups(labels: &[String], scheme: &LabelScheme) -> Result<Option<Vec<VeracityGroup>>> {
    if !scheme.has_group_map() {
        return Ok(None);
    }
    labels
        .iter()
        .map(|l| group_three_class(l, scheme))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Scores label strings. `scheme` supplies the label set for macro F1 and
/// the three-class grouping.
pub fn score_labels(
    probe: &str,
    dataset: &str,
    mode: EvalMode,
    preds: &[String],
    golds: &[String],
    scheme: &LabelScheme,
) -> Result<MetricReport> {
    let labels = scheme.labels.clone();
    let grouped = match (groups(preds, scheme)?, groups(golds, scheme)?) {
        (Some(p), Some(g)) => grouped_accuracy(&p, &g),
        _ => [None; 3],
    };
    Ok(MetricReport {
        probe: probe.to_string(),
        dataset: dataset.to_string(),
        mode,
        micro_f1: micro_f1(preds, golds)?,
        macro_f1: macro_f1(preds, golds, &labels)?,
        accuracy: accuracy(preds, golds)?,
        per_label: per_label_stats(preds, golds, &labels)?,
        labels,
        grouped,
        n_items: golds.len(),
        n_evidence_missing: 0,
    })
}

/// Runs `probe` over `records` (labelled in `corpus_scheme`) and scores it.
///
/// WITHIN requires the corpus to use the probe's own scheme. CROSS maps
/// gold and predicted labels through their schemes' merge maps and scores
/// over the canonical labels.
pub fn evaluate(
    probe: &Probe,
    records: &[ClaimRecord],
    corpus_scheme: &LabelScheme,
    dataset: &str,
    mode: EvalMode,
) -> Result<MetricReport> {
    if records.is_empty() {
        return Err(Error::Empty(format!("evaluation set {dataset}")));
    }
    let dists = probe.predict_all(records)?;
    let preds: Vec<&str> = dists.iter().map(|d| probe.scheme.label(d.argmax)).collect();
    let golds: Vec<&str> = records.iter().map(|r| r.label.as_str()).collect();
    let mut report = match mode {
        EvalMode::Within => {
            if corpus_scheme.fingerprint() != probe.scheme.fingerprint() {
                return Err(Error::SchemeMismatch(format!(
                    "probe uses scheme {} but {dataset} is labelled with {}",
                    probe.scheme.name, corpus_scheme.name
                )));
            }
            for g in &golds {
                corpus_scheme.require_index(g)?;
            }
            let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
            score_labels(&probe.name(), dataset, mode, &own(&preds), &own(&golds), corpus_scheme)?
        }
        EvalMode::Cross => {
            if !probe.scheme.has_merge_map() || !corpus_scheme.has_merge_map() {
                return Err(Error::SchemeMismatch(format!(
                    "cross-dataset scoring needs merge maps for {} and {}",
                    probe.scheme.name, corpus_scheme.name
                )));
            }
            let p = preds
                .iter()
                .map(|l| merge_for_cross_eval(l, &probe.scheme).map(str::to_string))
                .collect::<Result<Vec<_>>>()?;
            let g = golds
                .iter()
                .map(|l| merge_for_cross_eval(l, corpus_scheme).map(str::to_string))
                .collect::<Result<Vec<_>>>()?;
            score_labels(&probe.name(), dataset, mode, &p, &g, &LabelScheme::canonical())?
        }
    };
    report.n_evidence_missing = dists.iter().filter(|d| d.evidence_missing).count();
    Ok(report)
}

pub const METRICS_HEADER: &str = "probe,dataset,mode,micro_f1,macro_f1,acc_false,acc_mix,acc_true";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// CSV with one row per report.
pub fn metrics_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{},{},{}",
            r.probe,
            r.dataset,
            r.mode.as_str(),
            r.micro_f1,
            r.macro_f1,
            cell(r.grouped[0]),
            cell(r.grouped[1]),
            cell(r.grouped[2]),
        );
    }
    out
}

/// Markdown table with the same columns as [`metrics_csv`].
pub fn metrics_markdown(reports: &[MetricReport]) -> String {
    let mut out = String::from(
        "| probe | dataset | mode | micro F1 | macro F1 | acc false | acc mixture | acc true |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    let md = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    for r in reports {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.3} | {:.3} | {} | {} | {} |",
            r.probe,
            r.dataset,
            r.mode.as_str(),
            r.micro_f1,
            r.macro_f1,
            md(r.grouped[0]),
            md(r.grouped[1]),
            md(r.grouped[2]),
        );
    }
    out
}
