//! Leave-one-subject-out evaluation, cross-validated tuning objectives and
//! end-to-end pipeline orchestration.

mod folds;
mod metrics;
mod pipeline;
mod tuning;

pub use folds::{stratified_folds, training_indices};
pub use metrics::{
    compute_metrics, render_table, write_fold_csv, Confusion, FoldResult, MeanStd, MetricSummary, MetricsReport,
    SubjectLevel,
};
pub use pipeline::{
    fft_feature_table, loocv_with, run_pipeline, write_json, Budget, Frontend, LeakageAudit, Mode, PipelineConfig,
    PipelineId, PipelineRun, RunManifest,
};
pub use tuning::{
    apply_snn_point, classifier_from_point, classifier_objective, classifier_space, snn_objective, snn_space,
    tune_classifier, tune_snn, SnnTuning,
};
