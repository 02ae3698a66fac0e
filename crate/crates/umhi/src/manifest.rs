//! Run manifests and the stored metrics report.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use umhi_core::eval::pipeline::{CvReport, SweepReport};
use umhi_core::eval::{MetricSummary, MetricsReport};

use crate::error::Result;
use crate::io::file_sha256;

pub const MANIFEST_FORMAT: &str = "manifest";
pub const METRICS_FORMAT: &str = "metrics";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub path: String,
    pub sha256: String,
}

impl FileChecksum {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileChecksum { path: path.display().to_string(), sha256: file_sha256(path)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Wall-clock time per named stage.
#[derive(Debug, Default)]
pub struct Stopwatch {
    pub stages: Vec<StageTiming>,
}

impl Stopwatch {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTiming { stage: stage.to_string(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.stages.push(StageTiming { stage: stage.to_string(), seconds });
    }

    pub fn seconds(&self, stage: &str) -> Option<f64> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| s.seconds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub summary: MetricSummary,
}

/// Everything needed to rerun a command: the full configuration, checksums
/// of what it read and wrote, stage timings and, for evaluations, the metric
/// summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub crate_version: String,
    /// Every configuration key with its value; a config file with these lines
    /// reproduces the run.
    pub config: Vec<(String, String)>,
    pub inputs: Vec<FileChecksum>,
    pub outputs: Vec<FileChecksum>,
    pub stages: Vec<StageTiming>,
    pub metrics: Vec<MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub folds: Vec<MetricsReport>,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub consumed: u64,
    pub leaked: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub stages: Vec<StageCount>,
}

/// Contents of `metrics.json`. Holds no timings, so identical runs give
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub n_pairs: usize,
    pub n_unfollow: usize,
    pub methods: Vec<MethodMetrics>,
    pub folds: Vec<FoldAudit>,
    pub total_leaked: u64,
    pub sweep: Option<SweepReport>,
}

impl MetricsFile {
    pub fn new(report: &CvReport, n_pairs: usize, n_unfollow: usize, sweep: Option<SweepReport>) -> Self {
        MetricsFile {
            n_pairs,
            n_unfollow,
            methods: report
                .methods
                .iter()
                .map(|m| MethodMetrics { method: m.method.as_str().to_string(), folds: m.folds.clone(), summary: m.summary })
                .collect(),
            folds: report
                .folds
                .iter()
                .map(|f| FoldAudit {
                    fold: f.fold,
                    n_train: f.n_train,
                    n_test: f.n_test,
                    stages: f
                        .audit
                        .iter()
                        .map(|a| StageCount { stage: a.stage.as_str().to_string(), consumed: a.consumed, leaked: a.leaked })
                        .collect(),
                })
                .collect(),
            total_leaked: report.total_leaked(),
            sweep,
        }
    }

    pub fn method(&self, name: &str) -> Option<&MethodMetrics> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn summaries(&self) -> Vec<MethodSummary> {
        self.methods.iter().map(|m| MethodSummary { method: m.method.clone(), summary: m.summary }).collect()
    }
}
