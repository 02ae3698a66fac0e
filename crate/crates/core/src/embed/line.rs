use alloc::vec;
use alloc::vec::Vec;

use super::alias::AliasTable;
use super::sgns::sgns_step;
use super::table::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::TemporalGraph;
use crate::math::{self, dot, log_sigmoid};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Proximity {
    /// Linked vertices close: one table, edges treated as undirected.
    First,
    /// Vertices with similar out-neighborhoods close: vertex and context tables.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LineConfig {
    pub order: Proximity,
    pub dim: usize,
    /// One epoch is `|E|` edge samples.
    pub epochs: usize,
    pub negatives: usize,
    /// Initial learning rate; decays linearly to `lr0 / 10`.
    pub lr0: f64,
    pub seed: u64,
}

impl LineConfig {
    pub fn new(order: Proximity) -> Self {
        LineConfig { order, dim: 100, epochs: 100, negatives: 5, lr0: 0.025, seed: 0 }
    }
}

/// Negative-sampling loss of one sampled edge:
/// `-ln σ(u·v) - Σ_n ln σ(-u·v_n)`.
pub fn edge_loss(source: &[f64], target: &[f64], noise: &[&[f64]]) -> f64 {
    -log_sigmoid(dot(source, target)) - noise.iter().map(|v| log_sigmoid(-dot(source, v))).sum::<f64>()
}

const NOISE_POWER: f64 = 0.75;
const MAX_NOISE_RETRIES: usize = 16;

/// Trains LINE vertex embeddings; returns vertex vectors only.
pub fn train_line(graph: &TemporalGraph, cfg: &LineConfig) -> Result<EmbeddingTable> {
    let n = graph.num_users();
    if graph.num_edges() == 0 {
        return Err(Error::invalid("LINE needs a graph with at least one edge"));
    }
    if cfg.dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    let mut rng = rng::stream(cfg.seed, "line");
    let mut vertex = EmbeddingTable::uniform(n, cfg.dim, 0.5 / cfg.dim as f64, &mut rng);
    let num_samples = (cfg.epochs as u64) * graph.num_edges() as u64;
    if num_samples == 0 {
        return Ok(vertex);
    }

    let (arcs, noise_weights): (Vec<(u32, u32)>, Vec<f64>) = match cfg.order {
        Proximity::First => {
            let sym = graph.symmetrized();
            let arcs = sym
                .iter()
                .enumerate()
                .flat_map(|(i, list)| list.iter().map(move |&j| (i as u32, j)))
                .collect();
            let w = sym.iter().map(|l| math::powf(l.len() as f64, NOISE_POWER)).collect();
            (arcs, w)
        }
        Proximity::Second => {
            let arcs = graph.edges().map(|(i, j)| (i as u32, j as u32)).collect();
            let w = (0..n).map(|u| math::powf(graph.in_neighbors(u).len() as f64, NOISE_POWER)).collect();
            (arcs, w)
        }
    };
    let edge_sampler = AliasTable::new(&vec![1.0; arcs.len()])?;
    let noise = AliasTable::new(&noise_weights)?;
    let mut context = match cfg.order {
        Proximity::First => None,
        Proximity::Second => Some(EmbeddingTable::zeros(n, cfg.dim)),
    };

    let mut input = vec![0.0; cfg.dim];
    let mut err = vec![0.0; cfg.dim];
    let mut targets: Vec<(usize, f64)> = Vec::with_capacity(cfg.negatives + 1);
    for t in 0..num_samples {
        let lr = cfg.lr0 * (1.0 - 0.9 * t as f64 / num_samples as f64);
        let (src, dst) = arcs[edge_sampler.sample(&mut rng)];
        let (src, dst) = (src as usize, dst as usize);
        targets.clear();
        targets.push((dst, 1.0));
        for _ in 0..cfg.negatives {
            let mut neg = noise.sample(&mut rng);
            let mut tries = 0;
            while neg == dst && tries < MAX_NOISE_RETRIES {
                neg = noise.sample(&mut rng);
                tries += 1;
            }
            if neg != dst {
                targets.push((neg, 0.0));
            }
        }
        input.copy_from_slice(vertex.get(src));
        err.iter_mut().for_each(|e| *e = 0.0);
        let outputs = match context.as_mut() {
            Some(ctx) => ctx.as_mut_slice(),
            None => vertex.as_mut_slice(),
        };
        sgns_step(&input, outputs, targets.iter().copied(), lr, &mut err);
        math::axpy(1.0, &err, vertex.get_mut(src));
    }
    Ok(vertex)
}
