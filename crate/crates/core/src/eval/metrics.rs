use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths<T>(predictions: &[T], golds: &[T]) -> Result<()> {
    if predictions.len() != golds.len() {
        return Err(Error::Dimension {
            expected: golds.len(),
            actual: predictions.len(),
        });
    }
    if golds.is_empty() {
        return Err(Error::Empty("metric over zero items".into()));
    }
    Ok(())
}

/// Precision, recall and F1 of one label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl LabelStats {
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        LabelStats {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Per-label statistics in the order of `labels`. Items whose gold or
/// predicted label is not listed only count against the listed side.
pub fn per_label_stats<T: PartialEq>(predictions: &[T], golds: &[T], labels: &[T]) -> Result<Vec<LabelStats>> {
    check_lengths(predictions, golds)?;
    Ok(labels
        .iter()
        .map(|l| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (p, g) in predictions.iter().zip(golds) {
                match (p == l, g == l) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            LabelStats::from_counts(tp, fp, fn_)
        })
        .collect())
}

/// Micro-averaged F1: `2 TP / (2 TP + FP + FN)` with counts pooled over every
/// label that occurs in either sequence.
pub fn micro_f1<T: PartialEq + Clone>(predictions: &[T], golds: &[T]) -> Result<f64> {
    check_lengths(predictions, golds)?;
    let mut labels: Vec<T> = Vec::new();
    for x in golds.iter().chain(predictions) {
        if !labels.contains(x) {
            labels.push(x.clone());
        }
    }
    let stats = per_label_stats(predictions, golds, &labels)?;
    let tp: u64 = stats.iter().map(|s| s.true_positives).sum();
    let fp: u64 = stats.iter().map(|s| s.false_positives).sum();
    let fn_: u64 = stats.iter().map(|s| s.false_negatives).sum();
    Ok(if tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    })
}

/// Unweighted mean of per-label F1 over `labels`; a label with no true or
/// predicted items contributes 0.
pub fn macro_f1<T: PartialEq>(predictions: &[T], golds: &[T], labels: &[T]) -> Result<f64> {
    let stats = per_label_stats(predictions, golds, labels)?;
    if stats.is_empty() {
        return Err(Error::Empty("macro F1 over an empty label set".into()));
    }
    Ok(stats.iter().map(|s| s.f1).sum::<f64>() / stats.len() as f64)
}

pub fn accuracy<T: PartialEq>(predictions: &[T], golds: &[T]) -> Result<f64> {
    check_lengths(predictions, golds)?;
    let hit = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hit as f64 / golds.len() as f64)
}

/// The model-selection score: mean of micro and macro F1 over label indices
/// `0..n_labels`.
pub fn selection_score(predictions: &[usize], golds: &[usize], n_labels: usize) -> Result<(f64, f64, f64)> {
    let labels: Vec<usize> = (0..n_labels).collect();
    let micro = micro_f1(predictions, golds)?;
    let macro_ = macro_f1(predictions, golds, &labels)?;
    Ok((micro, macro_, 0.5 * (micro + macro_)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn micro_examples() {
        assert_eq!(micro_f1(&["A", "B"], &["A", "B"]).unwrap(), 1.0);
        let golds = ["A", "A", "B", "B"];
        let preds = ["A", "A", "A", "B"];
        assert!((micro_f1(&preds, &golds).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(micro_f1(&["B", "A"], &["A", "B"]).unwrap(), 0.0);
    }

    #[test]
    fn macro_examples() {
        let golds = ["A", "A", "B"];
        let preds = ["A", "A", "A"];
        // F1_A = 2*2/(2*2+1+0) = 0.8, F1_B = 0
        assert!((macro_f1(&preds, &golds, &["A", "B"]).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(macro_f1(&golds, &golds, &["A", "B"]).unwrap(), 1.0);
        // an absent label counts as zero
        assert!((macro_f1(&golds, &golds, &["A", "B", "C"]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(micro_f1(&[1, 2], &[1]).is_err());
        assert!(macro_f1(&[1], &[1, 2], &[1, 2]).is_err());
        assert!(micro_f1::<u8>(&[], &[]).is_err());
    }

    #[test]
    fn per_label_precision_recall() {
        let s = per_label_stats(&["A", "A", "A"], &["A", "A", "B"], &["A", "B"]).unwrap();
        assert!((s[0].precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s[0].recall, 1.0);
        assert_eq!(s[1].f1, 0.0);
    }
}
