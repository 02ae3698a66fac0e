//! Factorization of the (masked) unfollow history matrix.
//!
//! Minimizes `Σ (r_ij - p_i·q_j)² + λ(‖p_i‖² + ‖q_j‖²)` with per-entry SGD.
//! Up to [`MfConfig::full_sum_limit`] users every one of the `|V|²` entries is
//! visited each epoch; above it, positives plus a fresh uniform sample of zeros
//! are used instead.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::audit::{LabelAudit, Stage};
use crate::error::{Error, Result};
use crate::graph::UnfollowMatrix;
use crate::math::{self, dot};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MfConfig {
    pub k: usize,
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Zeros sampled per positive when the full sum is too large.
    pub zeros_per_positive: usize,
    pub full_sum_limit: usize,
    pub seed: u64,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig { k: 64, lambda: 0.01, lr: 0.01, epochs: 100, zeros_per_positive: 10, full_sum_limit: 5000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryMode {
    FullSum,
    SampledZeros,
}

/// Follower factors `P` and followee factors `Q`, both `|V| x k`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactorModel {
    pub num_users: usize,
    pub k: usize,
    pub lambda: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl FactorModel {
    /// Entries uniform in `[0, 1/√k)`.
    pub fn init<R: Rng>(num_users: usize, k: usize, lambda: f64, rng: &mut R) -> Self {
        let hi = 1.0 / math::sqrt(k as f64);
        let mut draw = |_| rng.gen_range(0.0..hi);
        let p = (0..num_users * k).map(&mut draw).collect();
        let q = (0..num_users * k).map(&mut draw).collect();
        FactorModel { num_users, k, lambda, p, q }
    }

    #[inline]
    pub fn follower(&self, i: usize) -> &[f64] {
        &self.p[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn followee(&self, j: usize) -> &[f64] {
        &self.q[j * self.k..(j + 1) * self.k]
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(&self.q).all(|x| x.is_finite())
    }

    /// One SGD step on entry `(i, j)` with target `r`.
    pub fn sgd_step(&mut self, i: usize, j: usize, r: f64, lr: f64) {
        let k = self.k;
        let (pi, qj) = (i * k, j * k);
        let e = r - dot(&self.p[pi..pi + k], &self.q[qj..qj + k]);
        for d in 0..k {
            let p = self.p[pi + d];
            let q = self.q[qj + d];
            self.p[pi + d] += lr * (e * q - self.lambda * p);
            self.q[qj + d] += lr * (e * p - self.lambda * q);
        }
    }

    /// Objective restricted to one entry: `(r - p·q)² + λ(‖p‖² + ‖q‖²)`.
    pub fn entry_loss(&self, i: usize, j: usize, r: f64) -> f64 {
        let (p, q) = (self.follower(i), self.followee(j));
        let e = r - dot(p, q);
        e * e + self.lambda * (dot(p, p) + dot(q, q))
    }

    /// Full-sum objective over all `|V|²` entries, computed in `O(|V| k²)`
    /// from the Gram matrices.
    pub fn full_loss(&self, r: &UnfollowMatrix) -> f64 {
        let (n, k) = (self.num_users, self.k);
        let gram = |m: &[f64]| {
            let mut g = vec![0.0; k * k];
            for row in m.chunks_exact(k) {
                for a in 0..k {
                    for b in 0..k {
                        g[a * k + b] += row[a] * row[b];
                    }
                }
            }
            g
        };
        let squares = dot(&gram(&self.p), &gram(&self.q));
        let cross: f64 = r.entries().map(|(i, j)| dot(self.follower(i), self.followee(j))).sum();
        let reg = self.lambda * n as f64 * (dot(&self.p, &self.p) + dot(&self.q, &self.q));
        squares - 2.0 * cross + r.len() as f64 + reg
    }
}

#[derive(Debug, Clone)]
pub struct MfOutcome {
    pub model: FactorModel,
    pub mode: EntryMode,
    /// Objective over the enumerated entry set after each epoch.
    pub epoch_losses: Vec<f64>,
}

struct BitMatrix {
    n: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    fn from(r: &UnfollowMatrix) -> Self {
        let n = r.num_users();
        let mut words = vec![0u64; (n * n).div_ceil(64)];
        for (i, j) in r.entries() {
            let idx = i * n + j;
            words[idx / 64] |= 1 << (idx % 64);
        }
        BitMatrix { n, words }
    }

    #[inline]
    fn get(&self, idx: usize) -> bool {
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }
}

/// Factorizes `r_train`. Every positive entry is reported to `audit` once.
pub fn factorize_history<A: LabelAudit>(r_train: &UnfollowMatrix, cfg: &MfConfig, audit: &mut A) -> Result<MfOutcome> {
    if cfg.k == 0 {
        return Err(Error::invalid("latent size must be positive"));
    }
    let n = r_train.num_users();
    let mut rng = rng::stream(cfg.seed, "mf");
    let mut model = FactorModel::init(n, cfg.k, cfg.lambda, &mut rng);
    for (i, j) in r_train.entries() {
        audit.consume(Stage::History, i as u32, j as u32);
    }
    let mode = if n <= cfg.full_sum_limit { EntryMode::FullSum } else { EntryMode::SampledZeros };
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    match mode {
        EntryMode::FullSum => {
            let bits = BitMatrix::from(r_train);
            let mut order: Vec<u32> = (0..(n * n) as u32).collect();
            for _ in 0..cfg.epochs {
                order.shuffle(&mut rng);
                for &idx in &order {
                    let idx = idx as usize;
                    let target = if bits.get(idx) { 1.0 } else { 0.0 };
                    model.sgd_step(idx / bits.n, idx % bits.n, target, cfg.lr);
                }
                epoch_losses.push(model.full_loss(r_train));
            }
        }
        EntryMode::SampledZeros => {
            let positives: Vec<(u32, u32)> = r_train.entries().map(|(i, j)| (i as u32, j as u32)).collect();
            let mut entries: Vec<(u32, u32, bool)> = Vec::new();
            for _ in 0..cfg.epochs {
                entries.clear();
                entries.extend(positives.iter().map(|&(i, j)| (i, j, true)));
                let wanted = positives.len() * cfg.zeros_per_positive;
                while entries.len() < positives.len() + wanted {
                    let i = rng.gen_range(0..n);
                    let j = rng.gen_range(0..n);
                    if !r_train.contains(i, j) {
                        entries.push((i as u32, j as u32, false));
                    }
                }
                entries.shuffle(&mut rng);
                for &(i, j, pos) in &entries {
                    model.sgd_step(i as usize, j as usize, if pos { 1.0 } else { 0.0 }, cfg.lr);
                }
                let loss = entries
                    .iter()
                    .map(|&(i, j, pos)| model.entry_loss(i as usize, j as usize, if pos { 1.0 } else { 0.0 }))
                    .sum();
                epoch_losses.push(loss);
            }
        }
    }
    Ok(MfOutcome { model, mode, epoch_losses })
}

/// `p_i · q_j`.
pub fn mf_score(model: &FactorModel, i: usize, j: usize) -> Result<f64> {
    for id in [i, j] {
        if id >= model.num_users {
            return Err(Error::UnknownUser(id as u32));
        }
    }
    Ok(dot(model.follower(i), model.followee(j)))
}
