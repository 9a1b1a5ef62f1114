//! Metrics, per-probe reports and evidence-rank ablation.

mod ablation;
pub mod metrics;
mod report;

pub use ablation::{ablate_record, ablation_csv, ablation_curve, AblationCurve, Direction, ABLATION_HEADER};
pub use metrics::{accuracy, macro_f1, micro_f1, per_label_stats, selection_score, LabelStats};
pub use report::{
    evaluate, grouped_accuracy, metrics_csv, metrics_markdown, score_labels, EvalMode, MetricReport, METRICS_HEADER,
};
