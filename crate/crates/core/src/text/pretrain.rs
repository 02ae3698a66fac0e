//! Supervised pretraining of the content encoder as a standalone edge
//! classifier `σ(w·(m_i ⊕ m_j) + b)`.

use alloc::collections::btree_map::{BTreeMap, Entry};
use alloc::vec;
use alloc::vec::Vec;

use super::han::{ContentEncoder, TokenizedPost, UserTrace};
use crate::audit::{LabelAudit, Stage};
use crate::batch::{stratified_split, BalancedSampler};
use crate::error::{Error, Result};
use crate::eval::metrics::auc;
use crate::graph::{EvalItem, Label};
use crate::math::{bce_with_logit, sigmoid};
use crate::optim::{Adam, AdamConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PretrainConfig {
    pub epochs: usize,
    /// Pairs per batch, half of each class.
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Share of training pairs held out for model selection.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { epochs: 10, batch_size: 64, adam: AdamConfig::published(0.001), validation_fraction: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub encoder: ContentEncoder,
    /// Selection score per epoch: validation AUC, or negative validation loss
    /// when the held-out pairs have a single class.
    pub epoch_scores: Vec<f64>,
    /// `None` when no epoch ran or there was no validation split (last epoch kept).
    pub best_epoch: Option<usize>,
    pub first_batch_loss: Option<f64>,
}

fn user_posts(posts: &[Vec<TokenizedPost>], u: usize) -> Result<&[TokenizedPost]> {
    posts.get(u).map(Vec::as_slice).ok_or(Error::UnknownUser(u as u32))
}

/// Mean binary cross-entropy over `batch` and its gradient with respect to
/// the encoder parameters. Word-vector gradients go to `word_grads` if given.
pub fn pair_loss_and_grad(
    encoder: &ContentEncoder,
    posts: &[Vec<TokenizedPost>],
    batch: &[EvalItem],
    mut word_grads: Option<&mut [f64]>,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut slots: BTreeMap<u32, usize> = BTreeMap::new();
    let mut traces: Vec<UserTrace> = Vec::new();
    for it in batch {
        for u in [it.follower.0, it.followee.0] {
            if let Entry::Vacant(slot) = slots.entry(u) {
                slot.insert(traces.len());
                traces.push(encoder.trace_user(user_posts(posts, u as usize)?)?);
            }
        }
    }
    let md = encoder.output_dim();
    let layout = *encoder.layout();
    let mut grads = vec![0.0; layout.total];
    let mut dms = vec![vec![0.0; md]; traces.len()];
    let scale = 1.0 / batch.len() as f64;
    let head = encoder.params()[layout.head_w..layout.head_w + 2 * md].to_vec();
    let mut loss = 0.0;
    for it in batch {
        let (a, b) = (slots[&it.follower.0], slots[&it.followee.0]);
        let z = encoder.pair_logit(traces[a].m(), traces[b].m());
        let y = it.label.target();
        loss += bce_with_logit(z, y);
        let dz = (sigmoid(z) - y) * scale;
        for d in 0..md {
            grads[layout.head_w + d] += dz * traces[a].m()[d];
            grads[layout.head_w + md + d] += dz * traces[b].m()[d];
            dms[a][d] += dz * head[d];
            dms[b][d] += dz * head[md + d];
        }
        grads[layout.head_b] += dz;
    }
    for (trace, dm) in traces.iter().zip(&dms) {
        encoder.backward_user(trace, dm, &mut grads, word_grads.as_deref_mut());
    }
    Ok((loss * scale, grads))
}

/// Per-pair logits, encoding each distinct user once.
pub fn pair_logits(encoder: &ContentEncoder, posts: &[Vec<TokenizedPost>], items: &[EvalItem]) -> Result<Vec<f64>> {
    let mut cache: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut out = Vec::with_capacity(items.len());
    for it in items {
        for u in [it.follower.0, it.followee.0] {
            if let Entry::Vacant(slot) = cache.entry(u) {
                slot.insert(encoder.encode_user(user_posts(posts, u as usize)?)?.m);
            }
        }
        out.push(encoder.pair_logit(&cache[&it.follower.0], &cache[&it.followee.0]));
    }
    Ok(out)
}

fn selection_score(logits: &[f64], items: &[EvalItem]) -> f64 {
    let scored: Vec<(f64, Label)> = logits.iter().zip(items).map(|(&z, it)| (z, it.label)).collect();
    auc(&scored).unwrap_or_else(|_| {
        -logits.iter().zip(items).map(|(&z, it)| bce_with_logit(z, it.label.target())).sum::<f64>() / items.len() as f64
    })
}

/// Trains encoder and head with Adam on balanced batches; word vectors stay
/// frozen. Returns the parameters of the epoch with the best validation score.
pub fn pretrain_content_encoder<A: LabelAudit>(
    mut encoder: ContentEncoder,
    posts: &[Vec<TokenizedPost>],
    pairs: &[EvalItem],
    cfg: &PretrainConfig,
    audit: &mut A,
) -> Result<PretrainOutcome> {
    if cfg.batch_size < 2 {
        return Err(Error::invalid("batch size must be at least 2"));
    }
    let mut r = rng::stream(cfg.seed, "han-pretrain");
    let labels: Vec<Label> = pairs.iter().map(|p| p.label).collect();
    let (train_idx, val_idx) = stratified_split(&labels, cfg.validation_fraction, &mut r);
    let train: Vec<EvalItem> = train_idx.iter().map(|&k| pairs[k]).collect();
    let val: Vec<EvalItem> = val_idx.iter().map(|&k| pairs[k]).collect();
    let sampler = BalancedSampler::new(train.iter().map(|p| p.label))?;
    for it in pairs {
        audit.consume(Stage::ContentPretrain, it.follower.0, it.followee.0);
    }
    let mut adam = Adam::new(cfg.adam, encoder.params().len());
    let batches_per_epoch = train.len().div_ceil(cfg.batch_size);
    let mut picks = Vec::new();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut epoch_scores = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut first_batch_loss = None;
    for epoch in 0..cfg.epochs {
        for _ in 0..batches_per_epoch {
            sampler.sample(cfg.batch_size / 2, &mut r, &mut picks);
            batch.clear();
            batch.extend(picks.iter().map(|&k| train[k]));
            let (loss, grads) = pair_loss_and_grad(&encoder, posts, &batch, None)?;
            first_batch_loss.get_or_insert(loss);
            adam.step(encoder.params_mut(), &grads);
        }
        if !encoder.is_finite() {
            return Err(Error::invalid("content encoder diverged"));
        }
        if !val.is_empty() {
            let score = selection_score(&pair_logits(&encoder, posts, &val)?, &val);
            epoch_scores.push(score);
            if best.as_ref().is_none_or(|b| score > b.1) {
                best = Some((epoch, score, encoder.params().to_vec()));
            }
        }
    }
    let best_epoch = best.map(|(epoch, _, params)| {
        encoder.params_mut().copy_from_slice(&params);
        epoch
    });
    Ok(PretrainOutcome { encoder, epoch_scores, best_epoch, first_batch_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddingTable;
    use crate::graph::UserId;
    use crate::testutil::{derivative, rel_err};
    use crate::text::HanConfig;

    fn item(i: u32, j: u32, unfollow: bool) -> EvalItem {
        EvalItem { follower: UserId(i), followee: UserId(j), label: Label::from_bool(unfollow) }
    }

    fn tiny() -> (ContentEncoder, Vec<Vec<TokenizedPost>>) {
        let mut r = rng::seeded(11);
        let words = EmbeddingTable::uniform(3, 3, 0.8, &mut r);
        let cfg = HanConfig { word_hidden: 2, post_hidden: 2, word_att: 2, post_att: 2, init_scale: 0.5, ..Default::default() };
        let enc = ContentEncoder::new(words, cfg, &mut r);
        let p = |t: &[u32]| TokenizedPost { tokens: t.to_vec(), time: 0 };
        let posts = vec![vec![p(&[0, 1, 2]), p(&[2, 1])], vec![p(&[1]), p(&[0, 2, 0])], vec![p(&[2, 2, 1])]];
        (enc, posts)
    }

    #[test]
    fn pretraining_gradient_matches_finite_differences() {
        let (enc, posts) = tiny();
        let batch = [item(0, 1, true), item(1, 2, false), item(2, 0, true)];
        let mut wg = vec![0.0; 9];
        let (_, grads) = pair_loss_and_grad(&enc, &posts, &batch, Some(&mut wg)).unwrap();
        let loss = |e: &ContentEncoder| pair_loss_and_grad(e, &posts, &batch, None).unwrap().0;
        for k in 0..grads.len() {
            let fd = derivative(
                |h| {
                    let mut e = enc.clone();
                    e.params_mut()[k] += h;
                    loss(&e)
                },
                1e-4,
            );
            assert!(rel_err(fd, grads[k]) < 1e-4, "param {k}: fd {fd} analytic {}", grads[k]);
        }
        for k in 0..9 {
            let fd = derivative(
                |h| {
                    let mut e = enc.clone();
                    e.word_vectors_mut().get_mut(k / 3)[k % 3] += h;
                    loss(&e)
                },
                1e-4,
            );
            assert!(rel_err(fd, wg[k]) < 1e-4, "word {k}: fd {fd} analytic {}", wg[k]);
        }
    }

    #[test]
    fn single_class_training_set_is_rejected() {
        let (enc, posts) = tiny();
        let pairs = [item(0, 1, false), item(1, 2, false)];
        let cfg = PretrainConfig { validation_fraction: 0.0, ..Default::default() };
        assert!(pretrain_content_encoder(enc, &posts, &pairs, &cfg, &mut crate::audit::NoAudit).is_err());
    }
}
