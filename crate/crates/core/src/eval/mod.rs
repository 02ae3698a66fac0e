//! Metrics, baselines, cross-validation and the synthetic benchmark.

pub mod baseline;
pub mod logistic;
pub mod metrics;
pub mod pipeline;
pub mod svd;
pub mod synth;

pub use baseline::{extract_baseline_features, train_baseline, BaselineContext, BaselineKind};
pub use logistic::{train_logistic, LogisticModel};
pub use metrics::{auc, compute_metrics, summarize, MetricSummary, MetricsReport};
pub use pipeline::{
    analyze_interactions, cross_validate, default_fractions, prepare_shared, robustness_sweep, run_fold, with_folds,
    CvReport, FoldResult, InteractionAnalysis, Method, MethodReport, PipelineConfig, SharedComponents, StageAudit,
    SweepReport, SweepRow,
};
pub use svd::{fit_truncated_svd, TruncatedSvd};
pub use synth::{generate_synthetic_benchmark, GroundTruth, SynthConfig, SynthData};
