//! Core algorithms for predicting relationship dissolution ("unfollow") in
//! directed social networks.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, configuration files or the command line lives in the `umhi`
//! companion crate.
//!
//! The pipeline is organized as:
//!
//! - [`graph`]: follow graph, unfollow matrix, leakage-safe masking, balanced
//!   evaluation sets and fold splits.
//! - [`netstats`]: PageRank, Burt's constraint, social roles, tf-idf
//!   similarity, exposure and unfollow-ratio curves.
//! - [`embed`]: LINE (first and second order proximity) and random-walk
//!   skip-gram node embeddings.
//! - [`text`]: tokenization, word vectors and the two-level attention LSTM
//!   content encoder.
//! - [`mf`]: factorization of the unfollow history matrix.
//! - [`fusion`]: feature assembly and the MLP fusion head.
//! - [`eval`]: metrics, baselines, cross-validation, robustness sweeps and the
//!   synthetic benchmark generator.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod audit;
pub mod batch;
pub mod embed;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod graph;
pub mod math;
pub mod mf;
pub mod netstats;
pub mod optim;
pub mod rng;
pub mod text;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil {
    /// Fourth-order central difference of `f` at 0 with step `h`.
    pub fn derivative(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
        (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
    }

    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }
}
