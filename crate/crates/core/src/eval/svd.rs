//! Truncated SVD of sparse tf-idf document rows, used as the dense document
//! representation of the content-action baseline.
//!
//! Small problems go through the eigen-decomposition of the smaller Gram
//! matrix. Larger ones use a randomized range finder with power iterations.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{self, dot};
use crate::netstats::SparseVector;
use crate::rng;

/// Below this many rows or columns the decomposition is exact.
pub const EXACT_LIMIT: usize = 200;
const OVERSAMPLE: usize = 10;
const POWER_ITERATIONS: usize = 4;
/// Gram eigenvalues below this fraction of the largest count as zero.
const NULL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruncatedSvd {
    pub rank: usize,
    pub vocab: usize,
    /// Right singular vectors, `rank x vocab` row-major; missing ones are zero.
    pub components: Vec<f64>,
    pub singular_values: Vec<f64>,
}

impl TruncatedSvd {
    /// Coordinates of `x` on the right singular vectors.
    pub fn transform(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.rank)
            .map(|k| {
                let row = &self.components[k * self.vocab..(k + 1) * self.vocab];
                x.entries.iter().filter(|(t, _)| (*t as usize) < self.vocab).map(|&(t, w)| w * row[t as usize]).sum()
            })
            .collect()
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k * self.vocab..(k + 1) * self.vocab]
    }
}

/// Eigen-decomposition of a symmetric `m x m` matrix by cyclic Jacobi
/// rotations. Returns eigenvalues in descending order and the matching
/// eigenvectors as rows.
pub fn symmetric_eigen(a: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * m + j] * a[i * m + j]).sum();
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..m {
                    let (akp, akq) = (a[k * m + p], a[k * m + q]);
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let (apk, aqk) = (a[p * m + k], a[q * m + k]);
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let (vkp, vkq) = (v[k * m + p], v[k * m + q]);
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| a[y * m + y].total_cmp(&a[x * m + x]));
    let values = order.iter().map(|&k| a[k * m + k]).collect();
    let mut vectors = vec![0.0; m * m];
    for (r, &k) in order.iter().enumerate() {
        for i in 0..m {
            vectors[r * m + i] = v[i * m + k];
        }
    }
    (values, vectors)
}

fn orthonormalize(cols: &mut [Vec<f64>]) {
    for k in 0..cols.len() {
        for _ in 0..2 {
            for j in 0..k {
                let (done, rest) = cols.split_at_mut(k);
                let proj = dot(&done[j], &rest[0]);
                math::axpy(-proj, &done[j], &mut rest[0]);
            }
        }
        let n = math::norm(&cols[k]);
        if n > 1e-12 {
            cols[k].iter_mut().for_each(|x| *x /= n);
        } else {
            cols[k].iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// `A x` for sparse rows and a dense vocab-length `x`.
fn a_times(rows: &[SparseVector], x: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| r.entries.iter().map(|&(t, w)| w * x[t as usize]).sum()).collect()
}

/// `Aᵀ y` for a row-length `y`.
fn at_times(rows: &[SparseVector], y: &[f64], vocab: usize) -> Vec<f64> {
    let mut out = vec![0.0; vocab];
    for (r, &yr) in rows.iter().zip(y) {
        for &(t, w) in &r.entries {
            out[t as usize] += w * yr;
        }
    }
    out
}

/// Builds the result from an orthonormal basis `basis` (row space side) of
/// dimension `l`: `B = basisᵀ A`, then right singular vectors of `B`.
fn from_row_basis(rows: &[SparseVector], basis: &[Vec<f64>], vocab: usize, rank: usize) -> TruncatedSvd {
    let b: Vec<Vec<f64>> = basis.iter().map(|q| at_times(rows, q, vocab)).collect();
    let l = b.len();
    let mut gram = vec![0.0; l * l];
    for i in 0..l {
        for j in 0..=i {
            let g = dot(&b[i], &b[j]);
            gram[i * l + j] = g;
            gram[j * l + i] = g;
        }
    }
    let (values, vectors) = symmetric_eigen(&gram, l);
    let mut components = vec![0.0; rank * vocab];
    let mut singular_values = vec![0.0; rank];
    let floor = NULL_TOLERANCE * values.first().copied().unwrap_or(0.0).max(0.0);
    for k in 0..rank.min(l) {
        if values[k] <= floor {
            continue;
        }
        let sigma = math::sqrt(values[k]);
        singular_values[k] = sigma;
        let row = &mut components[k * vocab..(k + 1) * vocab];
        for (i, bi) in b.iter().enumerate() {
            math::axpy(vectors[k * l + i] / sigma, bi, row);
        }
    }
    TruncatedSvd { rank, vocab, components, singular_values }
}

pub fn fit_truncated_svd(rows: &[SparseVector], vocab: usize, rank: usize, seed: u64) -> Result<TruncatedSvd> {
    if rows.is_empty() || vocab == 0 {
        return Err(Error::invalid("SVD needs at least one document and term"));
    }
    if rows.iter().flat_map(|r| &r.entries).any(|&(t, _)| t as usize >= vocab) {
        return Err(Error::invalid("term id outside vocabulary"));
    }
    let n = rows.len();
    if n <= EXACT_LIMIT {
        // Identity basis of the row space: B = A.
        let basis: Vec<Vec<f64>> = (0..n).map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        }).collect();
        return Ok(from_row_basis(rows, &basis, vocab, rank));
    }
    if vocab <= EXACT_LIMIT {
        // Eigenvectors of AᵀA are the right singular vectors directly.
        let mut gram = vec![0.0; vocab * vocab];
        for r in rows {
            for &(a, wa) in &r.entries {
                for &(b, wb) in &r.entries {
                    gram[a as usize * vocab + b as usize] += wa * wb;
                }
            }
        }
        let (values, vectors) = symmetric_eigen(&gram, vocab);
        let mut components = vec![0.0; rank * vocab];
        let mut singular_values = vec![0.0; rank];
        let floor = NULL_TOLERANCE * values.first().copied().unwrap_or(0.0).max(0.0);
        for k in 0..rank.min(vocab) {
            if values[k] > floor {
                singular_values[k] = math::sqrt(values[k]);
                components[k * vocab..(k + 1) * vocab].copy_from_slice(&vectors[k * vocab..(k + 1) * vocab]);
            }
        }
        return Ok(TruncatedSvd { rank, vocab, components, singular_values });
    }
    let l = (rank + OVERSAMPLE).min(n).min(vocab);
    let mut r = rng::stream(seed, "svd");
    let mut y: Vec<Vec<f64>> = (0..l)
        .map(|_| {
            let omega: Vec<f64> = (0..vocab).map(|_| r.gen_range(-1.0..1.0)).collect();
            a_times(rows, &omega)
        })
        .collect();
    orthonormalize(&mut y);
    for _ in 0..POWER_ITERATIONS {
        let mut z: Vec<Vec<f64>> = y.iter().map(|q| at_times(rows, q, vocab)).collect();
        orthonormalize(&mut z);
        y = z.iter().map(|q| a_times(rows, q)).collect();
        orthonormalize(&mut y);
    }
    Ok(from_row_basis(rows, &y, vocab, rank))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_on_known_matrix() {
        let (vals, vecs) = symmetric_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        assert!((vecs[0].abs() - vecs[1].abs()).abs() < 1e-12);
    }

    #[test]
    fn rank_one_matrix() {
        let rows: Vec<SparseVector> = (1..=3)
            .map(|k| SparseVector { entries: vec![(0, k as f64), (2, 2.0 * k as f64)] })
            .collect();
        let svd = fit_truncated_svd(&rows, 3, 2, 0).unwrap();
        let expected = math::sqrt(14.0 * 5.0);
        assert!((svd.singular_values[0] - expected).abs() < 1e-10);
        assert_eq!(svd.singular_values[1], 0.0);
        let z = svd.transform(&rows[0]);
        assert!((z[0].abs() - math::sqrt(5.0)).abs() < 1e-10);
    }
}
