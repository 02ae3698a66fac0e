//! Feature assembly from frozen components and the MLP fusion head.
//!
//! For a pair `(i, j)` the input is `n_i ⊕ n_j ⊕ m_i ⊕ m_j ⊕ p_i ⊕ q_j` where
//! `n` concatenates the structure embeddings, `m` is the content vector and
//! `p`, `q` are the history factors. Any subset of the three sources may be
//! present, which is how ablations are built.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::audit::{LabelAudit, Stage};
use crate::batch::{stratified_split, BalancedSampler};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::metrics::auc;
use crate::graph::{EvalItem, Label, UserId};
use crate::math::{self, bce_with_logit, matvec_add, matvec_t_add, outer_add, sigmoid};
use crate::mf::FactorModel;
use crate::optim::{Adam, AdamConfig};
use crate::rng;
use crate::text::{ContentEncoder, TokenizedPost};

/// Logits are clamped to this magnitude so scores stay strictly inside (0, 1).
pub const LOGIT_CLAMP: f64 = 35.0;

/// Precomputed content vectors `m`, `None` for users without usable posts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContentVectors {
    pub dim: usize,
    pub vectors: Vec<Option<Vec<f64>>>,
}

impl ContentVectors {
    pub fn encode(encoder: &ContentEncoder, posts: &[Vec<TokenizedPost>]) -> Self {
        let vectors = posts.iter().map(|ps| encoder.encode_user(ps).ok().map(|e| e.m)).collect();
        ContentVectors { dim: encoder.output_dim(), vectors }
    }
}

/// Borrowed, frozen component outputs.
#[derive(Debug, Clone, Default)]
pub struct Components<'a> {
    /// Node embedding tables, concatenated in this order into `n`.
    pub structure: Vec<(&'a str, &'a EmbeddingTable)>,
    pub content: Option<&'a ContentVectors>,
    pub history: Option<&'a FactorModel>,
}

impl Components<'_> {
    /// Length of the assembled feature vector.
    pub fn width(&self) -> usize {
        let n: usize = self.structure.iter().map(|(_, t)| t.dim()).sum();
        2 * n + 2 * self.content.map_or(0, |c| c.dim) + 2 * self.history.map_or(0, |h| h.k)
    }

    /// Names of the present sources, in feature order.
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = self.structure.iter().map(|(n, _)| String::from(*n)).collect();
        if self.content.is_some() {
            out.push(String::from("content"));
        }
        if self.history.is_some() {
            out.push(String::from("history"));
        }
        out
    }
}

/// `d = n_i ⊕ n_j ⊕ m_i ⊕ m_j ⊕ p_i ⊕ q_j` over the present components.
pub fn assemble_features(i: usize, j: usize, c: &Components) -> Result<Vec<f64>> {
    let mut d = Vec::with_capacity(c.width());
    assemble_into(i, j, c, &mut d)?;
    Ok(d)
}

fn assemble_into(i: usize, j: usize, c: &Components, d: &mut Vec<f64>) -> Result<()> {
    d.clear();
    if c.width() == 0 {
        return Err(Error::invalid("no feature components selected"));
    }
    for u in [i, j] {
        for (name, table) in &c.structure {
            if u >= table.len() {
                return Err(Error::MissingComponent(format!("{name} vector for user {u}")));
            }
            d.extend_from_slice(table.get(u));
        }
    }
    if let Some(content) = c.content {
        for u in [i, j] {
            match content.vectors.get(u) {
                Some(Some(m)) => d.extend_from_slice(m),
                _ => return Err(Error::MissingComponent(format!("content vector for user {u}"))),
            }
        }
    }
    if let Some(h) = c.history {
        if i >= h.num_users || j >= h.num_users {
            return Err(Error::MissingComponent(format!("history factors for pair ({i}, {j})")));
        }
        d.extend_from_slice(h.follower(i));
        d.extend_from_slice(h.followee(j));
    }
    Ok(())
}

/// Per-feature affine map `(x - mean) * inv_std`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Standardizer { mean: vec![0.0; width], inv_std: vec![1.0; width] }
    }

    /// Fits on `rows`; constant columns get unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let w = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; w];
        for r in rows {
            math::axpy(1.0 / n, r, &mut mean);
        }
        let mut var = vec![0.0; w];
        for r in rows {
            for ((v, &x), &m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let inv_std = var.iter().map(|&v| if v > 1e-24 { 1.0 / math::sqrt(v) } else { 1.0 }).collect();
        Standardizer { mean, inv_std }
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(x.iter().zip(&self.mean).zip(&self.inv_std).map(|((&x, &m), &s)| (x - m) * s));
    }
}

/// Fully connected network with ReLU hidden layers and one linear output.
/// Layer `l` stores `W_l` (row-major `out x in`) followed by `b_l`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn num_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn zeros(sizes: Vec<usize>) -> Self {
        let n = Self::num_params(&sizes);
        Mlp { sizes, params: vec![0.0; n] }
    }

    /// He-uniform hidden layers, a small output layer so initial outputs sit
    /// near 0.5, zero biases.
    pub fn new<R: Rng>(input: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut mlp = Self::zeros(sizes);
        let layers = mlp.sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (mlp.sizes[l], mlp.sizes[l + 1]);
            let scale = if l + 1 == layers {
                0.1 / math::sqrt(fan_in as f64)
            } else {
                math::sqrt(6.0 / fan_in as f64)
            };
            for w in &mut mlp.params[off..off + fan_in * fan_out] {
                *w = rng.gen_range(-scale..scale);
            }
            off += fan_in * fan_out + fan_out;
        }
        mlp
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    fn layer(&self, l: usize) -> (usize, usize, usize) {
        let off: usize = self.sizes.windows(2).take(l).map(|w| w[1] * w[0] + w[1]).sum();
        (off, self.sizes[l], self.sizes[l + 1])
    }

    /// Output logit and every layer's input activation.
    fn forward_trace(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let layers = self.sizes.len() - 1;
        let mut acts = vec![x.to_vec()];
        for l in 0..layers {
            let (off, n_in, n_out) = self.layer(l);
            let mut z = self.params[off + n_in * n_out..off + n_in * n_out + n_out].to_vec();
            matvec_add(&self.params[off..off + n_in * n_out], n_out, n_in, &acts[l], &mut z);
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        let logit = acts.pop().map_or(0.0, |z| z[0]);
        (logit, acts)
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.forward_trace(x).0
    }

    /// Adds `dlogit · ∂logit/∂θ` to `grads`; returns `∂logit/∂x · dlogit` if asked.
    fn backward(&self, acts: &[Vec<f64>], dlogit: f64, grads: &mut [f64], want_input: bool) -> Option<Vec<f64>> {
        let layers = self.sizes.len() - 1;
        let mut delta = vec![dlogit];
        for l in (0..layers).rev() {
            let (off, n_in, n_out) = self.layer(l);
            outer_add(&mut grads[off..off + n_in * n_out], &delta, &acts[l]);
            math::axpy(1.0, &delta, &mut grads[off + n_in * n_out..off + n_in * n_out + n_out]);
            if l == 0 && !want_input {
                return None;
            }
            let mut prev = vec![0.0; n_in];
            matvec_t_add(&self.params[off..off + n_in * n_out], n_out, n_in, &delta, &mut prev);
            if l > 0 {
                for (p, &a) in prev.iter_mut().zip(&acts[l]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Some(delta)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Standardization plus MLP; `y = σ(MLP((d - μ) / s))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusionModel {
    pub standardizer: Standardizer,
    pub mlp: Mlp,
}

impl FusionModel {
    pub fn input_width(&self) -> usize {
        self.mlp.input_width()
    }

    fn check_width(&self, d: &[f64]) -> Result<()> {
        if d.len() != self.input_width() {
            return Err(Error::DimensionMismatch { expected: self.input_width(), found: d.len() });
        }
        Ok(())
    }

    fn clamped_logit(&self, d: &[f64]) -> f64 {
        let mut x = Vec::with_capacity(d.len());
        self.standardizer.apply(d, &mut x);
        self.mlp.logit(&x).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    }
}

pub fn fusion_forward(model: &FusionModel, d: &[f64]) -> Result<f64> {
    model.check_width(d)?;
    Ok(sigmoid(model.clamped_logit(d)))
}

/// `∂y/∂d` (ignores the clamp, which only binds at |logit| = 35).
pub fn fusion_input_gradient(model: &FusionModel, d: &[f64]) -> Result<Vec<f64>> {
    model.check_width(d)?;
    let mut x = Vec::with_capacity(d.len());
    model.standardizer.apply(d, &mut x);
    let (logit, acts) = model.mlp.forward_trace(&x);
    let y = sigmoid(logit);
    let mut scratch = vec![0.0; model.mlp.params.len()];
    let mut g = model.mlp.backward(&acts, y * (1.0 - y), &mut scratch, true).unwrap_or_default();
    for (gi, &s) in g.iter_mut().zip(&model.standardizer.inv_std) {
        *gi *= s;
    }
    Ok(g)
}

/// Mean binary cross-entropy of `model` over raw feature rows, and its
/// gradient with respect to the MLP parameters.
pub fn fusion_loss_and_grad(model: &FusionModel, rows: &[&[f64]], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(Error::invalid("batch rows and targets must be non-empty and aligned"));
    }
    let mut grads = vec![0.0; model.mlp.params.len()];
    let mut x = Vec::new();
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    for (&d, &t) in rows.iter().zip(targets) {
        model.check_width(d)?;
        model.standardizer.apply(d, &mut x);
        let (logit, acts) = model.mlp.forward_trace(&x);
        loss += bce_with_logit(logit, t);
        model.mlp.backward(&acts, (sigmoid(logit) - t) * scale, &mut grads, false);
    }
    Ok((loss * scale, grads))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusionConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            hidden: vec![256, 64],
            epochs: 10,
            batch_size: 64,
            adam: AdamConfig::published(0.001),
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub model: FusionModel,
    /// Validation AUC per epoch (empty without a validation split).
    pub validation_auc: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub first_batch_loss: Option<f64>,
}

/// Trains on precomputed feature rows. `stream` names the random substream so
/// several heads trained from one seed (ablations) stay independent.
pub fn fit_fusion(rows: &[Vec<f64>], labels: &[Label], cfg: &FusionConfig, stream: &str) -> Result<FusionOutcome> {
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: rows.len(), found: labels.len() });
    }
    if cfg.batch_size < 2 {
        return Err(Error::invalid("batch size must be at least 2"));
    }
    let mut r = rng::stream(cfg.seed, stream);
    let (train_idx, val_idx) = stratified_split(labels, cfg.validation_fraction, &mut r);
    let sampler = BalancedSampler::new(train_idx.iter().map(|&k| labels[k]))?;
    let width = rows[0].len();
    let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&k| rows[k].clone()).collect();
    let mut model = FusionModel { standardizer: Standardizer::fit(&train_rows), mlp: Mlp::new(width, &cfg.hidden, &mut r) };
    let mut adam = Adam::new(cfg.adam, model.mlp.params.len());
    let half = cfg.batch_size / 2;
    let batches_per_epoch = train_idx.len().div_ceil(cfg.batch_size);
    let mut picks = Vec::new();
    let mut targets = Vec::with_capacity(2 * half);
    let mut validation_auc = Vec::new();
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut first_batch_loss = None;
    for epoch in 0..cfg.epochs {
        for _ in 0..batches_per_epoch {
            sampler.sample(half, &mut r, &mut picks);
            let batch: Vec<&[f64]> = picks.iter().map(|&k| train_rows[k].as_slice()).collect();
            targets.clear();
            targets.extend(picks.iter().map(|&k| labels[train_idx[k]].target()));
            let (loss, grads) = fusion_loss_and_grad(&model, &batch, &targets)?;
            first_batch_loss.get_or_insert(loss);
            adam.step(&mut model.mlp.params, &grads);
        }
        if !model.mlp.is_finite() {
            return Err(Error::invalid("fusion head diverged"));
        }
        if !val_idx.is_empty() {
            let scored: Vec<(f64, Label)> =
                val_idx.iter().map(|&k| (model.clamped_logit(&rows[k]), labels[k])).collect();
            let a = auc(&scored).unwrap_or(0.5);
            validation_auc.push(a);
            if best.as_ref().is_none_or(|b| a > b.1) {
                best = Some((epoch, a, model.mlp.params.clone()));
            }
        }
    }
    let best_epoch = best.map(|(epoch, _, params)| {
        model.mlp.params = params;
        epoch
    });
    Ok(FusionOutcome { model, validation_auc, best_epoch, first_batch_loss })
}

/// Assembles features for `pairs` and trains the head. Components are only
/// borrowed, so they cannot change.
pub fn train_fusion<A: LabelAudit>(
    pairs: &[EvalItem],
    components: &Components,
    cfg: &FusionConfig,
    stream: &str,
    audit: &mut A,
) -> Result<FusionOutcome> {
    let mut rows = Vec::with_capacity(pairs.len());
    for it in pairs {
        audit.consume(Stage::Fusion, it.follower.0, it.followee.0);
        rows.push(assemble_features(it.follower.index(), it.followee.index(), components)?);
    }
    let labels: Vec<Label> = pairs.iter().map(|p| p.label).collect();
    fit_fusion(&rows, &labels, cfg, stream)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictionRecord {
    pub follower: UserId,
    pub followee: UserId,
    pub score: f64,
    pub label: Label,
}

impl PredictionRecord {
    /// Threshold rule: unfollow iff `score >= 0.5`.
    pub fn from_score(follower: UserId, followee: UserId, score: f64) -> Self {
        PredictionRecord { follower, followee, score, label: Label::from_bool(score >= 0.5) }
    }
}

pub fn predict_edge(model: &FusionModel, components: &Components, i: UserId, j: UserId) -> Result<PredictionRecord> {
    let d = assemble_features(i.index(), j.index(), components)?;
    Ok(PredictionRecord::from_score(i, j, fusion_forward(model, &d)?))
}

/// Mean loss over all rows; used by tests to compare models.
pub fn mean_loss(model: &FusionModel, rows: &[Vec<f64>], labels: &[Label]) -> f64 {
    let mut x = Vec::new();
    let total: f64 = rows
        .iter()
        .zip(labels)
        .map(|(d, l)| {
            model.standardizer.apply(d, &mut x);
            bce_with_logit(model.mlp.logit(&x), l.target())
        })
        .sum();
    total / rows.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{derivative, rel_err};

    fn random_model(seed: u64, sizes: &[usize]) -> FusionModel {
        let mut r = rng::seeded(seed);
        let mut mlp = Mlp::zeros(sizes.to_vec());
        for p in &mut mlp.params {
            *p = r.gen_range(-0.7..0.7);
        }
        let w = sizes[0];
        let standardizer = Standardizer {
            mean: (0..w).map(|_| r.gen_range(-0.5..0.5)).collect(),
            inv_std: (0..w).map(|_| r.gen_range(0.5..2.0)).collect(),
        };
        FusionModel { standardizer, mlp }
    }

    #[test]
    fn feature_order_and_width() {
        let a = EmbeddingTable::from_data(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = EmbeddingTable::from_data(2, 1, vec![5.0, 6.0]).unwrap();
        let content = ContentVectors { dim: 1, vectors: vec![Some(vec![7.0]), Some(vec![8.0])] };
        let h = FactorModel { num_users: 2, k: 1, lambda: 0.0, p: vec![9.0, 10.0], q: vec![11.0, 12.0] };
        let c = Components { structure: vec![("a", &a), ("b", &b)], content: Some(&content), history: Some(&h) };
        assert_eq!(c.width(), 10);
        let d = assemble_features(0, 1, &c).unwrap();
        assert_eq!(d, vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0, 7.0, 8.0, 9.0, 12.0]);
        assert_ne!(d, assemble_features(1, 0, &c).unwrap());
        let missing = ContentVectors { dim: 1, vectors: vec![Some(vec![7.0]), None] };
        let c2 = Components { content: Some(&missing), ..c.clone() };
        match assemble_features(0, 1, &c2) {
            Err(Error::MissingComponent(m)) => assert!(m.contains("content")),
            other => panic!("{other:?}"),
        }
        assert!(assemble_features(0, 1, &Components::default()).is_err());
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = FusionModel { standardizer: Standardizer::identity(3), mlp: Mlp::zeros(vec![3, 4, 1]) };
        assert_eq!(fusion_forward(&m, &[1.0, -2.0, 3.0]).unwrap(), 0.5);
        assert!(fusion_forward(&m, &[1.0]).is_err());
        let rec = PredictionRecord::from_score(UserId(0), UserId(1), 0.5);
        assert_eq!(rec.label, Label::Unfollow);
        assert_eq!(PredictionRecord::from_score(UserId(0), UserId(1), 0.4999).label, Label::Hold);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let m = random_model(3, &[5, 6, 4, 1]);
        let mut r = rng::seeded(4);
        for _ in 0..20 {
            let d: Vec<f64> = (0..5).map(|_| r.gen_range(-2.0..2.0)).collect();
            let g = fusion_input_gradient(&m, &d).unwrap();
            for k in 0..5 {
                let fd = derivative(
                    |h| {
                        let mut x = d.clone();
                        x[k] += h;
                        fusion_forward(&m, &x).unwrap()
                    },
                    1e-4,
                );
                assert!(rel_err(fd, g[k]) < 1e-4, "input {k}: fd {fd} analytic {}", g[k]);
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let m = random_model(5, &[4, 5, 3, 1]);
        let mut r = rng::seeded(6);
        let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| r.gen_range(-1.5..1.5)).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let targets = [1.0, 0.0, 1.0, 0.0];
        let (_, g) = fusion_loss_and_grad(&m, &refs, &targets).unwrap();
        for k in 0..g.len() {
            let fd = derivative(
                |h| {
                    let mut a = m.clone();
                    a.mlp.params[k] += h;
                    fusion_loss_and_grad(&a, &refs, &targets).unwrap().0
                },
                1e-4,
            );
            assert!(rel_err(fd, g[k]) < 1e-4, "param {k}: fd {fd} analytic {}", g[k]);
        }
    }

    #[test]
    fn separable_rows_are_learned() {
        let mut r = rng::seeded(8);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for k in 0..4000 {
            let pos = k % 2 == 0;
            let mut d: Vec<f64> = (0..6).map(|_| r.gen_range(-1.0..1.0)).collect();
            d[2] = if pos { r.gen_range(0.2..1.0) } else { r.gen_range(-1.0..-0.2) };
            rows.push(d);
            labels.push(Label::from_bool(pos));
        }
        let cfg = FusionConfig { hidden: vec![16, 8], ..Default::default() };
        let out = fit_fusion(&rows, &labels, &cfg, "fusion").unwrap();
        assert!((out.first_batch_loss.unwrap() - core::f64::consts::LN_2).abs() < 0.1);
        let scored: Vec<(f64, Label)> = rows.iter().zip(&labels).map(|(d, &l)| (fusion_forward(&out.model, d).unwrap(), l)).collect();
        let a = auc(&scored).unwrap();
        assert!(a > 0.99, "training AUC {a}");
    }
}
