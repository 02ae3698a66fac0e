use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::math;

/// Smoothed inverse document frequencies, `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Idf {
    weights: Vec<f64>,
    num_docs: usize,
}

impl Idf {
    /// Fits over token-id documents; ids must be below `vocab_size`.
    pub fn fit(docs: &[Vec<u32>], vocab_size: usize) -> Self {
        let mut df = alloc::vec![0usize; vocab_size];
        let mut seen: Vec<u32> = Vec::new();
        for doc in docs {
            seen.clear();
            seen.extend_from_slice(doc);
            seen.sort_unstable();
            seen.dedup();
            for &t in &seen {
                df[t as usize] += 1;
            }
        }
        let n = docs.len() as f64;
        let weights = df.iter().map(|&d| math::ln((1.0 + n) / (1.0 + d as f64)) + 1.0).collect();
        Idf { weights, num_docs: docs.len() }
    }

    pub fn weight(&self, term: u32) -> f64 {
        self.weights.get(term as usize).copied().unwrap_or(0.0)
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.len()
    }

    /// L2-normalized tf-idf vector of a document (raw term counts as tf).
    pub fn vectorize(&self, doc: &[u32]) -> SparseVector {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for &t in doc {
            *counts.entry(t).or_insert(0.0) += 1.0;
        }
        let mut entries: Vec<(u32, f64)> =
            counts.into_iter().map(|(t, c)| (t, c * self.weight(t))).filter(|&(_, w)| w != 0.0).collect();
        let norm = math::sqrt(entries.iter().map(|(_, w)| w * w).sum());
        if norm > 0.0 {
            for e in entries.iter_mut() {
                e.1 /= norm;
            }
        }
        SparseVector { entries }
    }
}

/// Sparse vector with entries sorted by term id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Dot product of two sparse vectors, clamped to `[0, 1]` (inputs are
/// non-negative and unit-norm).
pub fn sparse_cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.entries.len() && j < b.entries.len() {
        let (ta, wa) = a.entries[i];
        let (tb, wb) = b.entries[j];
        match ta.cmp(&tb) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                acc += wa * wb;
                i += 1;
                j += 1;
            }
        }
    }
    acc.clamp(0.0, 1.0)
}

/// tf-idf cosine between two concatenated post documents; zero if either is empty.
pub fn content_similarity(doc_i: &[u32], doc_j: &[u32], idf: &Idf) -> f64 {
    if doc_i.is_empty() || doc_j.is_empty() {
        return 0.0;
    }
    sparse_cosine(&idf.vectorize(doc_i), &idf.vectorize(doc_j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identical_and_disjoint() {
        let docs = vec![vec![0, 1, 1], vec![2, 3], vec![0, 2]];
        let idf = Idf::fit(&docs, 4);
        assert!((content_similarity(&docs[0], &docs[0], &idf) - 1.0).abs() < 1e-12);
        assert_eq!(content_similarity(&docs[0], &docs[1], &idf), 0.0);
        assert_eq!(content_similarity(&docs[0], &[], &idf), 0.0);
    }

    #[test]
    fn two_document_hand_oracle() {
        // "a b" vs "a c": idf(a) = ln(3/3) + 1 = 1, idf(b) = idf(c) = ln(3/2) + 1.
        let docs = vec![vec![0, 1], vec![0, 2]];
        let idf = Idf::fit(&docs, 3);
        let x = (1.5f64).ln() + 1.0;
        let expected = 1.0 / (1.0 + x * x);
        assert!((content_similarity(&docs[0], &docs[1], &idf) - expected).abs() < 1e-12);
    }
}
