//! Class-balanced mini-batches and stratified validation splits.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Label;
use crate::math;

/// Index pools per class; batches draw each half with replacement.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    positives: Vec<usize>,
    negatives: Vec<usize>,
}

impl BalancedSampler {
    pub fn new(labels: impl IntoIterator<Item = Label>) -> Result<Self> {
        let (mut positives, mut negatives) = (Vec::new(), Vec::new());
        for (k, l) in labels.into_iter().enumerate() {
            if l.is_unfollow() {
                positives.push(k);
            } else {
                negatives.push(k);
            }
        }
        if positives.is_empty() {
            return Err(Error::invalid("no positive (unfollow) training pairs"));
        }
        if negatives.is_empty() {
            return Err(Error::invalid("no negative (hold) training pairs"));
        }
        Ok(BalancedSampler { positives, negatives })
    }

    /// `half` positives followed by `half` negatives.
    pub fn sample<R: Rng>(&self, half: usize, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        for _ in 0..half {
            out.push(self.positives[rng.gen_range(0..self.positives.len())]);
        }
        for _ in 0..half {
            out.push(self.negatives[rng.gen_range(0..self.negatives.len())]);
        }
    }
}

/// Splits indices `0..labels.len()` into (train, validation), holding out
/// `fraction` of each class. Both outputs are sorted.
pub fn stratified_split<R: Rng>(labels: &[Label], fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in [Label::Unfollow, Label::Hold] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == class).collect();
        idx.shuffle(rng);
        let take = (math::round(fraction * idx.len() as f64) as usize).min(idx.len());
        val.extend_from_slice(&idx[..take]);
        train.extend_from_slice(&idx[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use alloc::vec;

    #[test]
    fn batches_are_exactly_balanced() {
        let labels = [Label::Hold, Label::Unfollow, Label::Hold, Label::Hold];
        let s = BalancedSampler::new(labels).unwrap();
        let mut out = Vec::new();
        s.sample(32, &mut rng::seeded(1), &mut out);
        assert_eq!(out.len(), 64);
        assert!(out[..32].iter().all(|&k| labels[k] == Label::Unfollow));
        assert!(out[32..].iter().all(|&k| labels[k] == Label::Hold));
    }

    #[test]
    fn empty_pool_is_an_error() {
        assert!(BalancedSampler::new([Label::Hold, Label::Hold]).is_err());
        assert!(BalancedSampler::new([Label::Unfollow]).is_err());
    }

    #[test]
    fn split_partitions_per_class() {
        let labels: Vec<Label> = (0..50).map(|k| Label::from_bool(k % 5 == 0)).collect();
        let (train, val) = stratified_split(&labels, 0.1, &mut rng::seeded(2));
        assert_eq!(train.len() + val.len(), 50);
        assert_eq!(val.iter().filter(|&&k| labels[k].is_unfollow()).count(), 1);
        assert_eq!(val.len(), 5);
        let mut all = [train, val].concat();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(stratified_split(&labels, 0.0, &mut rng::seeded(2)).1, vec![]);
    }
}
