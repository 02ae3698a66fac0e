//! Cross-validated evaluation of the fused model, its ablations and the
//! baselines.
//!
//! Components that read no labels (LINE, random-walk embeddings, word vectors,
//! tf-idf documents and the history factorization of `R_train`, which masks
//! every evaluation pair) are trained once in [`prepare_shared`]. Everything
//! that reads labeled pairs (content pretraining, fusion heads, baselines) is
//! retrained per fold in [`run_fold`].

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::baseline::{extract_baseline_features, train_baseline, BaselineContext, BaselineKind};
use super::metrics::{compute_metrics, summarize, MetricSummary, MetricsReport};
use crate::audit::{LabelAudit, PairAudit, Stage};
use crate::embed::{train_line, train_walk_embedding, EmbeddingTable, LineConfig, Proximity, SkipGramConfig, WalkConfig};
use crate::error::{Error, Result};
use crate::fusion::{assemble_features, fusion_forward, train_fusion, Components, ContentVectors, FusionConfig, FusionModel};
use crate::graph::{mask_test_edges, EvalItem, EvalSet, Label, TemporalGraph, UnfollowMatrix};
use crate::math;
use crate::mf::{factorize_history, FactorModel, MfConfig};
use crate::netstats::{
    assign_roles, burt_constraint, condition_values, pagerank, rou_curve, Condition, Idf, PageRankConfig,
    RoleAssignment, RouTable, SparseVector,
};
use crate::rng;
use crate::text::{
    prepare_corpus, pretrain_content_encoder, train_word_vectors, ContentEncoder, HanConfig, PretrainConfig,
    TextCorpus,
};

/// A row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Method {
    Umhi,
    Line1,
    Line2,
    Line12,
    Han,
    Line12Han,
    Mf,
    Deepwalk,
    Node2vec,
    SaLr,
    DaLr,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Umhi,
        Method::Line1,
        Method::Line2,
        Method::Line12,
        Method::Han,
        Method::Line12Han,
        Method::Mf,
        Method::Deepwalk,
        Method::Node2vec,
        Method::SaLr,
        Method::DaLr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Umhi => "UMHI",
            Method::Line1 => "LINE1",
            Method::Line2 => "LINE2",
            Method::Line12 => "LINE1+LINE2",
            Method::Han => "HAN",
            Method::Line12Han => "LINE1+LINE2+HAN",
            Method::Mf => "MF",
            Method::Deepwalk => "Deepwalk",
            Method::Node2vec => "node2vec",
            Method::SaLr => "SA+LR",
            Method::DaLr => "DA+LR",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s))
    }

    fn sources(self) -> Sources {
        let s = Sources::default();
        match self {
            Method::Umhi => Sources { line1: true, line2: true, content: true, history: true, ..s },
            Method::Line1 => Sources { line1: true, ..s },
            Method::Line2 => Sources { line2: true, ..s },
            Method::Line12 => Sources { line1: true, line2: true, ..s },
            Method::Han => Sources { content: true, ..s },
            Method::Line12Han => Sources { line1: true, line2: true, content: true, ..s },
            Method::Mf => Sources { history: true, ..s },
            Method::Deepwalk => Sources { deepwalk: true, ..s },
            Method::Node2vec => Sources { node2vec: true, ..s },
            Method::SaLr | Method::DaLr => s,
        }
    }

    fn baseline(self) -> Option<BaselineKind> {
        match self {
            Method::SaLr => Some(BaselineKind::StructuralAction),
            Method::DaLr => Some(BaselineKind::ContentAction),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Sources {
    line1: bool,
    line2: bool,
    content: bool,
    history: bool,
    deepwalk: bool,
    node2vec: bool,
}

impl Sources {
    fn union(self, o: Sources) -> Sources {
        Sources {
            line1: self.line1 || o.line1,
            line2: self.line2 || o.line2,
            content: self.content || o.content,
            history: self.history || o.history,
            deepwalk: self.deepwalk || o.deepwalk,
            node2vec: self.node2vec || o.node2vec,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    /// Shared by both LINE orders; `order` is overridden.
    pub line: LineConfig,
    pub word: SkipGramConfig,
    pub han: HanConfig,
    pub pretrain: PretrainConfig,
    pub mf: MfConfig,
    pub fusion: FusionConfig,
    /// Deepwalk uses these settings with `p = q = 1`.
    pub walk: WalkConfig,
    pub baseline_l2: f64,
    pub svd_rank: usize,
    pub folds: usize,
    pub threshold: f64,
    pub methods: Vec<Method>,
    /// Master seed; every stage draws from a named substream of it.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl PipelineConfig {
    /// Published sizes: LINE 100 per order, 100-unit LSTMs, k = 64, MLP [256, 64].
    pub fn paper() -> Self {
        PipelineConfig {
            line: LineConfig::new(Proximity::First),
            word: SkipGramConfig::default(),
            han: HanConfig::default(),
            pretrain: PretrainConfig::default(),
            mf: MfConfig::default(),
            fusion: FusionConfig::default(),
            walk: WalkConfig { p: 1.0, q: 0.5, ..WalkConfig::default() },
            baseline_l2: 1.0,
            svd_rank: 50,
            folds: 5,
            threshold: 0.5,
            methods: Method::ALL.to_vec(),
            seed: 0,
        }
    }

    /// Reduced widths that fit a desktop time budget on a few thousand users.
    /// Optimizer settings, epochs and caps are unchanged.
    pub fn desk() -> Self {
        let mut c = Self::paper();
        c.line.dim = 32;
        c.word.dim = 16;
        c.han.word_hidden = 8;
        c.han.post_hidden = 8;
        c.han.word_att = 8;
        c.han.post_att = 8;
        c.mf.k = 16;
        c.fusion.hidden = vec![64, 32];
        c.walk.dim = 32;
        c
    }

    fn sources(&self) -> Sources {
        self.methods.iter().fold(Sources::default(), |acc, m| acc.union(m.sources()))
    }
}

/// Label-free artifacts trained once per dataset.
#[derive(Debug, Clone)]
pub struct SharedComponents {
    pub corpus: TextCorpus,
    pub docs: Vec<SparseVector>,
    pub line1: Option<EmbeddingTable>,
    pub line2: Option<EmbeddingTable>,
    pub deepwalk: Option<EmbeddingTable>,
    pub node2vec: Option<EmbeddingTable>,
    pub word_vectors: Option<EmbeddingTable>,
    pub history: Option<FactorModel>,
    /// Consumption of the history stage, checked against every evaluation pair.
    pub history_audit: PairAudit,
}

impl SharedComponents {
    fn components<'a>(&'a self, src: Sources, content: Option<&'a ContentVectors>) -> Result<Components<'a>> {
        let missing = |name: &str| Error::MissingComponent(name.to_string());
        let mut c = Components::default();
        if src.line1 {
            c.structure.push(("LINE1", self.line1.as_ref().ok_or_else(|| missing("LINE1"))?));
        }
        if src.line2 {
            c.structure.push(("LINE2", self.line2.as_ref().ok_or_else(|| missing("LINE2"))?));
        }
        if src.deepwalk {
            c.structure.push(("Deepwalk", self.deepwalk.as_ref().ok_or_else(|| missing("Deepwalk"))?));
        }
        if src.node2vec {
            c.structure.push(("node2vec", self.node2vec.as_ref().ok_or_else(|| missing("node2vec"))?));
        }
        if src.content {
            c.content = Some(content.ok_or_else(|| missing("content"))?);
        }
        if src.history {
            c.history = Some(self.history.as_ref().ok_or_else(|| missing("history"))?);
        }
        Ok(c)
    }
}

/// tf-idf document per user over its window posts.
pub fn user_documents(corpus: &TextCorpus) -> Vec<SparseVector> {
    let documents = corpus.documents();
    let idf = Idf::fit(&documents, corpus.vocab.len());
    documents.iter().map(|d| idf.vectorize(d)).collect()
}

/// `R` with every evaluation pair zeroed.
pub fn training_history(unfollow: &UnfollowMatrix, eval: &EvalSet) -> UnfollowMatrix {
    mask_test_edges(unfollow, eval)
}

pub fn prepare_shared(graph: &TemporalGraph, unfollow: &UnfollowMatrix, eval: &EvalSet, cfg: &PipelineConfig) -> Result<SharedComponents> {
    let src = cfg.sources();
    let corpus = prepare_corpus(graph);
    let docs = user_documents(&corpus);
    let line = |order, name| {
        let c = LineConfig { order, seed: rng::derive_seed(cfg.seed, name), ..cfg.line };
        train_line(graph, &c)
    };
    let line1 = if src.line1 { Some(line(Proximity::First, "line1")?) } else { None };
    let line2 = if src.line2 { Some(line(Proximity::Second, "line2")?) } else { None };
    let deepwalk = if src.deepwalk {
        let c = WalkConfig { p: 1.0, q: 1.0, seed: rng::derive_seed(cfg.seed, "deepwalk"), ..cfg.walk };
        Some(train_walk_embedding(graph, &c)?)
    } else {
        None
    };
    let node2vec = if src.node2vec {
        let c = WalkConfig { seed: rng::derive_seed(cfg.seed, "node2vec"), ..cfg.walk };
        Some(train_walk_embedding(graph, &c)?)
    } else {
        None
    };
    let word_vectors =
        if src.content { Some(train_word_vectors(&corpus, &cfg.word, rng::derive_seed(cfg.seed, "word2vec"))?) } else { None };
    let mut history_audit = PairAudit::new(eval.pair_set());
    let history = if src.history {
        let r_train = training_history(unfollow, eval);
        let c = MfConfig { seed: rng::derive_seed(cfg.seed, "mf"), ..cfg.mf };
        Some(factorize_history(&r_train, &c, &mut history_audit)?.model)
    } else {
        None
    };
    Ok(SharedComponents { corpus, docs, line1, line2, deepwalk, node2vec, word_vectors, history, history_audit })
}

fn fold_seed(cfg: &PipelineConfig, fold: usize, stage: &str) -> u64 {
    rng::derive_seed(cfg.seed, &format!("fold{fold}-{stage}"))
}

/// Pretrains the content encoder on the fold's training pairs and encodes
/// every user.
pub fn fold_content<A: LabelAudit>(
    shared: &SharedComponents,
    train: &[EvalItem],
    fold: usize,
    cfg: &PipelineConfig,
    audit: &mut A,
) -> Result<(ContentEncoder, ContentVectors)> {
    let words = shared.word_vectors.clone().ok_or_else(|| Error::MissingComponent("word vectors".to_string()))?;
    let mut r = rng::stream(fold_seed(cfg, fold, "han-init"), "han");
    let encoder = ContentEncoder::new(words, cfg.han, &mut r);
    let pc = PretrainConfig { seed: fold_seed(cfg, fold, "han-pretrain"), ..cfg.pretrain };
    let out = pretrain_content_encoder(encoder, &shared.corpus.posts, train, &pc, audit)?;
    let vectors = ContentVectors::encode(&out.encoder, &shared.corpus.posts);
    Ok((out.encoder, vectors))
}

/// Labeled pairs consumed by one stage within one fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageAudit {
    pub stage: Stage,
    pub consumed: u64,
    pub leaked: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Vec<(Method, MetricsReport)>,
    pub audit: Vec<StageAudit>,
}

fn fusion_cfg(cfg: &PipelineConfig, fold: usize) -> FusionConfig {
    FusionConfig { seed: fold_seed(cfg, fold, "fusion"), ..cfg.fusion.clone() }
}

fn score_fusion(model: &FusionModel, components: &Components, test: &[EvalItem]) -> Result<Vec<(f64, Label)>> {
    test.iter()
        .map(|it| {
            let d = assemble_features(it.follower.index(), it.followee.index(), components)?;
            Ok((fusion_forward(model, &d)?, it.label))
        })
        .collect()
}

/// Trains every configured method on all folds but `fold` and scores fold `fold`.
pub fn run_fold(
    graph: &TemporalGraph,
    shared: &SharedComponents,
    eval: &EvalSet,
    fold: usize,
    cfg: &PipelineConfig,
) -> Result<FoldResult> {
    let wrap = |e: Error| Error::Fold { fold, source: alloc::boxed::Box::new(e) };
    if !eval.has_folds() || fold >= eval.num_folds {
        return Err(wrap(Error::invalid("evaluation set has no such fold")));
    }
    let train = eval.train_items(fold);
    let test = eval.test_items(fold);
    let forbidden: BTreeSet<(u32, u32)> = test.iter().map(|it| (it.follower.0, it.followee.0)).collect();
    let mut audit = PairAudit::new(forbidden.clone());

    let src = cfg.sources();
    let content = if src.content { Some(fold_content(shared, &train, fold, cfg, &mut audit).map_err(wrap)?.1) } else { None };

    let mut metrics = Vec::new();
    for &method in &cfg.methods {
        let scored = match method.baseline() {
            Some(kind) => {
                let mut ctx = BaselineContext::new(graph, &shared.docs);
                if kind == BaselineKind::ContentAction {
                    let users: BTreeSet<usize> =
                        train.iter().flat_map(|it| [it.follower.index(), it.followee.index()]).collect();
                    let users: Vec<usize> = users.into_iter().collect();
                    ctx.fit_svd(&users, shared.corpus.vocab.len(), cfg.svd_rank, fold_seed(cfg, fold, "svd")).map_err(wrap)?;
                }
                let model = train_baseline(&ctx, &train, kind, cfg.baseline_l2, &mut audit).map_err(wrap)?;
                test.iter()
                    .map(|it| {
                        let x = extract_baseline_features(&ctx, it.follower.index(), it.followee.index(), kind)?;
                        Ok((model.predict_proba(&x), it.label))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap)?
            }
            None => {
                let components = shared.components(method.sources(), content.as_ref()).map_err(wrap)?;
                let stream = format!("fusion-{}", method.as_str());
                let out = train_fusion(&train, &components, &fusion_cfg(cfg, fold), &stream, &mut audit).map_err(wrap)?;
                score_fusion(&out.model, &components, &test).map_err(wrap)?
            }
        };
        metrics.push((method, compute_metrics(&scored, cfg.threshold).map_err(wrap)?));
    }

    let mut stages = Vec::new();
    for stage in Stage::ALL {
        let (consumed, leaked) = if stage == Stage::History {
            // The shared stage is checked against every evaluation pair.
            (shared.history_audit.consumed(stage), shared.history_audit.leaked(stage))
        } else {
            (audit.consumed(stage), audit.leaked(stage))
        };
        stages.push(StageAudit { stage, consumed, leaked });
    }
    Ok(FoldResult { fold, n_train: train.len(), n_test: test.len(), metrics, audit: stages })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MethodReport {
    pub method: Method,
    pub folds: Vec<MetricsReport>,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvReport {
    pub methods: Vec<MethodReport>,
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    /// Merges fold results (in any order) into per-method reports.
    pub fn from_folds(mut folds: Vec<FoldResult>) -> Self {
        folds.sort_by_key(|f| f.fold);
        let mut methods: Vec<MethodReport> = Vec::new();
        if let Some(first) = folds.first() {
            for (k, &(method, _)) in first.metrics.iter().enumerate() {
                let per: Vec<MetricsReport> = folds.iter().map(|f| f.metrics[k].1).collect();
                methods.push(MethodReport { method, summary: summarize(&per), folds: per });
            }
        }
        CvReport { methods, folds }
    }

    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn total_leaked(&self) -> u64 {
        self.folds.iter().flat_map(|f| &f.audit).map(|a| a.leaked).sum()
    }
}

/// Assigns folds if needed, trains shared components once and runs every fold.
pub fn cross_validate(graph: &TemporalGraph, unfollow: &UnfollowMatrix, eval: &EvalSet, cfg: &PipelineConfig) -> Result<CvReport> {
    let eval = with_folds(eval, cfg)?;
    let shared = prepare_shared(graph, unfollow, &eval, cfg)?;
    let folds = (0..eval.num_folds).map(|f| run_fold(graph, &shared, &eval, f, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(CvReport::from_folds(folds))
}

/// `eval` itself if it already has `cfg.folds` folds, otherwise a seeded split.
pub fn with_folds(eval: &EvalSet, cfg: &PipelineConfig) -> Result<EvalSet> {
    if eval.has_folds() && eval.num_folds == cfg.folds {
        Ok(eval.clone())
    } else {
        crate::graph::kfold_split(eval, cfg.folds, rng::derive_seed(cfg.seed, "folds"))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub fraction: f64,
    pub n_train: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepReport {
    pub fold: usize,
    pub rows: Vec<SweepRow>,
    /// Fractions dropped because a class had no examples.
    pub skipped: Vec<f64>,
}

/// The fractions 0.1, 0.2, ..., 0.9.
pub fn default_fractions() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// Refits only the full model's fusion head on seeded subsamples of fold
/// `fold`'s training pairs; components come from the full training pairs.
pub fn robustness_sweep(
    shared: &SharedComponents,
    eval: &EvalSet,
    fold: usize,
    fractions: &[f64],
    cfg: &PipelineConfig,
) -> Result<SweepReport> {
    let wrap = |e: Error| Error::Fold { fold, source: alloc::boxed::Box::new(e) };
    if !eval.has_folds() || fold >= eval.num_folds {
        return Err(wrap(Error::invalid("evaluation set has no such fold")));
    }
    let train = eval.train_items(fold);
    let test = eval.test_items(fold);
    let mut audit = PairAudit::new(test.iter().map(|it| (it.follower.0, it.followee.0)).collect());
    let src = Method::Umhi.sources();
    let content = if src.content { Some(fold_content(shared, &train, fold, cfg, &mut audit).map_err(wrap)?.1) } else { None };
    let components = shared.components(src, content.as_ref()).map_err(wrap)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &fraction in fractions {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("training fraction {fraction} outside (0, 1]")));
        }
        let mut idx: Vec<usize> = (0..train.len()).collect();
        idx.shuffle(&mut rng::stream(fold_seed(cfg, fold, "sweep"), &format!("{fraction}")));
        idx.truncate(math::round(fraction * train.len() as f64) as usize);
        idx.sort_unstable();
        let subset: Vec<EvalItem> = idx.iter().map(|&k| train[k]).collect();
        let n_pos = subset.iter().filter(|it| it.label.is_unfollow()).count();
        if n_pos == 0 || n_pos == subset.len() {
            skipped.push(fraction);
            continue;
        }
        let stream = format!("fusion-{}", Method::Umhi.as_str());
        let out = train_fusion(&subset, &components, &fusion_cfg(cfg, fold), &stream, &mut audit).map_err(wrap)?;
        let scored = score_fusion(&out.model, &components, &test).map_err(wrap)?;
        rows.push(SweepRow { fraction, n_train: subset.len(), report: compute_metrics(&scored, cfg.threshold).map_err(wrap)? });
    }
    if audit.total_leaked() != 0 {
        return Err(wrap(Error::invalid("test labels reached a training stage")));
    }
    Ok(SweepReport { fold, rows, skipped })
}

/// Roles plus unfollow-ratio curves over similarity and exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionAnalysis {
    pub pagerank: Vec<f64>,
    pub constraint: Vec<f64>,
    pub roles: RoleAssignment,
    pub similarity: RouTable,
    pub exposure: RouTable,
}

pub fn analyze_interactions(
    graph: &TemporalGraph,
    eval: &EvalSet,
    pagerank_cfg: &PageRankConfig,
    bins: usize,
) -> Result<InteractionAnalysis> {
    let pr = pagerank(graph, pagerank_cfg)?;
    let constraint = burt_constraint(graph);
    let roles = assign_roles(&pr.scores, &constraint);
    let docs = user_documents(&prepare_corpus(graph));
    let sim = condition_values(eval, Condition::Similarity, graph, &docs);
    let expo = condition_values(eval, Condition::Exposure, graph, &docs);
    Ok(InteractionAnalysis {
        similarity: rou_curve(eval, &sim, &roles, bins)?,
        exposure: rou_curve(eval, &expo, &roles, bins)?,
        pagerank: pr.scores,
        constraint,
        roles,
    })
}
