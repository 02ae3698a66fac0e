use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::alias::AliasTable;
use super::sgns::sgns_step;
use super::table::EmbeddingTable;
use crate::error::{Error, Result};
use crate::math;

/// Skip-gram with negative sampling over integer sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr0: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig { dim: 100, window: 5, negatives: 5, epochs: 5, lr0: 0.025 }
    }
}

/// Returns input ("center") vectors for ids `0..vocab`. Ids that never occur
/// keep their random initialization.
pub fn train_skipgram<R: Rng>(
    sequences: &[Vec<u32>],
    vocab: usize,
    cfg: &SkipGramConfig,
    rng: &mut R,
) -> Result<EmbeddingTable> {
    if vocab == 0 {
        return Err(Error::invalid("skip-gram needs a non-empty vocabulary"));
    }
    let mut input = EmbeddingTable::uniform(vocab, cfg.dim, 0.5 / cfg.dim as f64, rng);
    let mut output = EmbeddingTable::zeros(vocab, cfg.dim);
    let mut freq = vec![0.0f64; vocab];
    for seq in sequences {
        for &t in seq {
            freq[t as usize] += 1.0;
        }
    }
    let total_tokens: f64 = freq.iter().sum();
    if total_tokens == 0.0 {
        return Err(Error::invalid("skip-gram corpus is empty"));
    }
    let noise = AliasTable::new(&freq.iter().map(|&f| math::powf(f, 0.75)).collect::<Vec<_>>())?;
    let planned = cfg.epochs as f64 * total_tokens;
    let mut processed = 0.0;
    let mut center = vec![0.0; cfg.dim];
    let mut err = vec![0.0; cfg.dim];
    let mut targets: Vec<(usize, f64)> = Vec::with_capacity(cfg.negatives + 1);
    for _ in 0..cfg.epochs {
        for seq in sequences {
            for (pos, &w) in seq.iter().enumerate() {
                let lr = cfg.lr0 * (1.0 - 0.9 * processed / planned);
                processed += 1.0;
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(seq.len());
                for (cpos, &ctx) in seq.iter().enumerate().take(hi).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    targets.clear();
                    targets.push((ctx as usize, 1.0));
                    for _ in 0..cfg.negatives {
                        let neg = noise.sample(rng);
                        if neg != ctx as usize {
                            targets.push((neg, 0.0));
                        }
                    }
                    center.copy_from_slice(input.get(w as usize));
                    err.iter_mut().for_each(|e| *e = 0.0);
                    sgns_step(&center, output.as_mut_slice(), targets.iter().copied(), lr, &mut err);
                    math::axpy(1.0, &err, input.get_mut(w as usize));
                }
            }
        }
    }
    Ok(input)
}
