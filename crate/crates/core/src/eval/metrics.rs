//! Precision, recall and rank-sum AUC.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Label;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from average ranks.
pub fn auc(scored: &[(f64, Label)]) -> Result<f64> {
    if scored.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let n_pos = scored.iter().filter(|(_, l)| l.is_unfollow()).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    // Twice the positive rank sum, kept integral so the result is exact.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scored[order[end]].0 == scored[order[start]].0 {
            end += 1;
        }
        // 1-based ranks start+1..=end average to (start + 1 + end) / 2.
        let twice_avg = (start + 1 + end) as u128;
        let pos_in_group = order[start..end].iter().filter(|&&k| scored[k].1.is_unfollow()).count() as u128;
        twice_rank_sum += twice_avg * pos_in_group;
        start = end;
    }
    let np = n_pos as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2 * np * n_neg as u128) as f64)
}

/// Metrics at `threshold` (a score `>= threshold` predicts unfollow).
pub fn compute_metrics(scored: &[(f64, Label)], threshold: f64) -> Result<MetricsReport> {
    let auc = auc(scored)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for &(s, l) in scored {
        match (s >= threshold, l.is_unfollow()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = tp as f64 / (tp + fn_) as f64;
    let n_pos = tp + fn_;
    Ok(MetricsReport { precision, recall, auc, n_pos, n_neg: scored.len() - n_pos, threshold })
}

/// Mean and sample standard deviation of each metric across folds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricSummary {
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
}

pub fn summarize(reports: &[MetricsReport]) -> MetricSummary {
    let col = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).collect::<Vec<f64>>();
    let (p, r, a) = (col(|m| m.precision), col(|m| m.recall), col(|m| m.auc));
    MetricSummary {
        precision_mean: math::mean(&p),
        precision_std: math::std_dev(&p),
        recall_mean: math::mean(&r),
        recall_std: math::std_dev(&r),
        auc_mean: math::mean(&a),
        auc_std: math::std_dev(&a),
    }
}
