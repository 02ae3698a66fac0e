//! Handcrafted-feature baselines scored by logistic regression.
//!
//! Action features (both kinds): follower and followee post counts, exposure,
//! tf-idf similarity, mean and max followee upvotes. Structural features add
//! in/out degrees of both endpoints, common neighbors, reciprocity and
//! neighbor Jaccard. Content features add each endpoint's truncated-SVD
//! document coordinates.

use alloc::format;
use alloc::vec::Vec;

use super::logistic::{train_logistic, LogisticModel};
use super::svd::{fit_truncated_svd, TruncatedSvd};
use crate::audit::{LabelAudit, Stage};
use crate::error::{Error, Result};
use crate::graph::{EvalItem, Label, TemporalGraph};
use crate::netstats::{exposure, sparse_cosine, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BaselineKind {
    /// Structural + action features.
    StructuralAction,
    /// Document (SVD) + action features.
    ContentAction,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::StructuralAction => "SA+LR",
            BaselineKind::ContentAction => "DA+LR",
        }
    }
}

/// Graph, per-user tf-idf documents and (for the content kind) a fitted SVD.
#[derive(Debug, Clone)]
pub struct BaselineContext<'a> {
    graph: &'a TemporalGraph,
    docs: &'a [SparseVector],
    neighbors: Vec<Vec<u32>>,
    svd: Option<TruncatedSvd>,
}

impl<'a> BaselineContext<'a> {
    pub fn new(graph: &'a TemporalGraph, docs: &'a [SparseVector]) -> Self {
        BaselineContext { graph, docs, neighbors: graph.symmetrized(), svd: None }
    }

    /// Fits the document SVD on the given (training) users.
    pub fn fit_svd(&mut self, users: &[usize], vocab: usize, rank: usize, seed: u64) -> Result<()> {
        let rows: Vec<SparseVector> = users.iter().map(|&u| self.docs[u].clone()).collect();
        self.svd = Some(fit_truncated_svd(&rows, vocab, rank, seed)?);
        Ok(())
    }

    pub fn svd(&self) -> Option<&TruncatedSvd> {
        self.svd.as_ref()
    }

    pub fn action_features(&self, i: usize, j: usize) -> [f64; 6] {
        let g = self.graph;
        let w = g.window();
        let upvotes: Vec<f64> = g.posts(j).iter().filter(|p| w.contains(p.time)).map(|p| p.upvotes as f64).collect();
        let mean_up = if upvotes.is_empty() { 0.0 } else { upvotes.iter().sum::<f64>() / upvotes.len() as f64 };
        let max_up = upvotes.iter().copied().fold(0.0, f64::max);
        [
            g.posts(i).len() as f64,
            g.posts(j).len() as f64,
            exposure(g.posts(j), w) as f64,
            sparse_cosine(&self.docs[i], &self.docs[j]),
            mean_up,
            max_up,
        ]
    }

    pub fn structural_features(&self, i: usize, j: usize) -> [f64; 7] {
        let g = self.graph;
        let (a, b) = (&self.neighbors[i], &self.neighbors[j]);
        let (mut x, mut y, mut common) = (0, 0, 0usize);
        while x < a.len() && y < b.len() {
            match a[x].cmp(&b[y]) {
                core::cmp::Ordering::Less => x += 1,
                core::cmp::Ordering::Greater => y += 1,
                core::cmp::Ordering::Equal => {
                    common += 1;
                    x += 1;
                    y += 1;
                }
            }
        }
        let union = a.len() + b.len() - common;
        let jaccard = if union == 0 { 0.0 } else { common as f64 / union as f64 };
        [
            g.in_neighbors(i).len() as f64,
            g.out_neighbors(i).len() as f64,
            g.in_neighbors(j).len() as f64,
            g.out_neighbors(j).len() as f64,
            common as f64,
            if g.has_edge(j, i) { 1.0 } else { 0.0 },
            jaccard,
        ]
    }
}

pub fn extract_baseline_features(ctx: &BaselineContext, i: usize, j: usize, kind: BaselineKind) -> Result<Vec<f64>> {
    let n = ctx.graph.num_users();
    if i >= n || j >= n {
        return Err(Error::UnknownUser(i.max(j) as u32));
    }
    let mut out = Vec::new();
    match kind {
        BaselineKind::StructuralAction => out.extend_from_slice(&ctx.structural_features(i, j)),
        BaselineKind::ContentAction => {
            let svd = ctx.svd.as_ref().ok_or_else(|| Error::MissingComponent(format!("document SVD for {}", kind.as_str())))?;
            out.extend(svd.transform(&ctx.docs[i]));
            out.extend(svd.transform(&ctx.docs[j]));
        }
    }
    out.extend_from_slice(&ctx.action_features(i, j));
    Ok(out)
}

/// Fits the logistic baseline on `pairs`.
pub fn train_baseline<A: LabelAudit>(
    ctx: &BaselineContext,
    pairs: &[EvalItem],
    kind: BaselineKind,
    l2: f64,
    audit: &mut A,
) -> Result<LogisticModel> {
    let mut rows = Vec::with_capacity(pairs.len());
    for it in pairs {
        audit.consume(Stage::Baseline, it.follower.0, it.followee.0);
        rows.push(extract_baseline_features(ctx, it.follower.index(), it.followee.index(), kind)?);
    }
    let labels: Vec<Label> = pairs.iter().map(|p| p.label).collect();
    train_logistic(&rows, &labels, l2)
}
