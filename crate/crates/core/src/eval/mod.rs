//! Accuracy evaluation: DBH error statistics, segmentation quality, and
//! dataset manifests.

mod manifest;
mod metrics;
mod seg;

pub use manifest::{
    apply_predictions, load_manifest, load_predictions, parse_manifest, EvaluationRecord, Manifest, RejectedRow, Split,
    SplitCounts, MANIFEST_COLUMNS,
};
pub use metrics::{dbh_metrics, group_by_species, metrics_from_pairs, MetricsReport, SpeciesTable, AVERAGE_ROW};
pub use seg::{seg_metrics, SegMetrics};
