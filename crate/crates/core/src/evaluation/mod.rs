//! Metrics and the two evaluation protocols: three-class gated polarity
//! with cross-validated thresholds, and binary weighted P/R/F1 with AUPR and
//! bootstrap intervals.

mod bootstrap;
mod metrics;
mod polarity;
mod report;
mod thresholds;

pub use bootstrap::{bootstrap_ci, percentile, BOOTSTRAP_RESAMPLE, MAX_REDRAWS};
pub use metrics::{accuracy, aupr, f1_per_class, macro_f1, pr_curve, prf_weighted, Prf, PrPoint};
pub use polarity::{apply_thresholds, gate, polarity_score, PolarityMap};
pub use report::{
    binary_report, binary_report_at, gated_scores, pr_curve_csv, review_decision, three_class_report, tune_review_threshold, BinaryReport, BootstrapConfig,
    ConfidenceInterval, LevelMetrics, ScoredReview, ScoredSegment, ThreeClassReport,
};
pub use thresholds::{
    best_thresholds, fold_assignment, search_thresholds_cv, threshold_grid, CvThresholds, FoldThresholds,
    GRID_STEPS_PER_UNIT,
};
