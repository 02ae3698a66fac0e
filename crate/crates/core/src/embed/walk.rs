use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::skipgram::{train_skipgram, SkipGramConfig};
use super::table::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::TemporalGraph;
use crate::rng;

/// Random-walk embedding settings. `p = q = 1` gives uniform (Deepwalk) walks.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WalkConfig {
    pub dim: usize,
    pub walks_per_node: usize,
    pub walk_len: usize,
    pub window: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            dim: 100,
            walks_per_node: 10,
            walk_len: 40,
            window: 5,
            p: 1.0,
            q: 1.0,
            negatives: 5,
            epochs: 1,
            lr0: 0.025,
            seed: 0,
        }
    }
}

fn biased_step<R: Rng>(nbrs: &[Vec<u32>], prev: u32, cur: u32, p: f64, q: f64, rng: &mut R) -> u32 {
    let options = &nbrs[cur as usize];
    if p == 1.0 && q == 1.0 {
        return options[rng.gen_range(0..options.len())];
    }
    let prev_nbrs = &nbrs[prev as usize];
    let weight = |x: u32| {
        if x == prev {
            1.0 / p
        } else if prev_nbrs.binary_search(&x).is_ok() {
            1.0
        } else {
            1.0 / q
        }
    };
    let total: f64 = options.iter().map(|&x| weight(x)).sum();
    let mut u = rng.gen::<f64>() * total;
    for &x in options {
        u -= weight(x);
        if u < 0.0 {
            return x;
        }
    }
    *options.last().expect("non-empty neighbor list")
}

/// Second-order biased walks on the symmetrized graph. Every node starts
/// `walks_per_node` walks; isolated nodes yield single-node walks.
pub fn generate_walks<R: Rng>(graph: &TemporalGraph, cfg: &WalkConfig, rng: &mut R) -> Vec<Vec<u32>> {
    let nbrs = graph.symmetrized();
    let mut starts: Vec<u32> = (0..graph.num_users() as u32).collect();
    let mut walks = Vec::with_capacity(starts.len() * cfg.walks_per_node);
    for _ in 0..cfg.walks_per_node {
        starts.shuffle(rng);
        for &s in &starts {
            let mut walk = Vec::with_capacity(cfg.walk_len);
            walk.push(s);
            while walk.len() < cfg.walk_len {
                let cur = *walk.last().expect("walk starts non-empty");
                if nbrs[cur as usize].is_empty() {
                    break;
                }
                let next = if walk.len() == 1 {
                    let opts = &nbrs[cur as usize];
                    opts[rng.gen_range(0..opts.len())]
                } else {
                    biased_step(&nbrs, walk[walk.len() - 2], cur, cfg.p, cfg.q, rng)
                };
                walk.push(next);
            }
            walks.push(walk);
        }
    }
    walks
}

/// Deepwalk / node2vec embedding: biased walks followed by skip-gram.
pub fn train_walk_embedding(graph: &TemporalGraph, cfg: &WalkConfig) -> Result<EmbeddingTable> {
    if graph.num_users() == 0 {
        return Err(Error::invalid("random-walk embedding needs a non-empty graph"));
    }
    if !(cfg.p > 0.0 && cfg.q > 0.0) {
        return Err(Error::invalid("walk parameters p and q must be positive"));
    }
    let mut rng = rng::stream(cfg.seed, "walks");
    let walks = generate_walks(graph, cfg, &mut rng);
    let sg = SkipGramConfig {
        dim: cfg.dim,
        window: cfg.window,
        negatives: cfg.negatives,
        epochs: cfg.epochs,
        lr0: cfg.lr0,
    };
    let mut sg_rng = rng::stream(cfg.seed, "walk-skipgram");
    train_skipgram(&walks, graph.num_users(), &sg, &mut sg_rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{UserId, Window};
    use alloc::vec;

    fn graph(n: usize, edges: &[(u32, u32)]) -> TemporalGraph {
        TemporalGraph::new(n, edges.iter().map(|&(a, b)| (UserId(a), UserId(b))), vec![], Window::unbounded())
            .unwrap()
    }

    #[test]
    fn isolated_node_keeps_initialization() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 0)]);
        let cfg = WalkConfig { dim: 8, walks_per_node: 3, walk_len: 6, ..Default::default() };
        let e = train_walk_embedding(&g, &cfg).unwrap();
        let init = EmbeddingTable::uniform(4, 8, 0.5 / 8.0, &mut rng::stream(cfg.seed, "walk-skipgram"));
        assert_eq!(e.get(3), init.get(3));
        assert_ne!(e.get(0), init.get(0));
    }

    #[test]
    fn deterministic_given_seed() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        let cfg = WalkConfig { dim: 8, walks_per_node: 2, walk_len: 10, p: 0.5, q: 2.0, seed: 4, ..Default::default() };
        assert_eq!(train_walk_embedding(&g, &cfg).unwrap(), train_walk_embedding(&g, &cfg).unwrap());
    }

    #[test]
    fn walks_follow_edges() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let cfg = WalkConfig { walks_per_node: 2, walk_len: 8, p: 4.0, q: 0.25, ..Default::default() };
        let walks = generate_walks(&g, &cfg, &mut rng::seeded(1));
        let sym = g.symmetrized();
        for w in walks {
            assert_eq!(w.len(), 8);
            for pair in w.windows(2) {
                assert!(sym[pair[0] as usize].contains(&pair[1]));
            }
        }
    }
}
