use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::TemporalGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PageRankConfig {
    pub damping: f64,
    /// Convergence threshold on the L1 change between iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig { damping: 0.85, tol: 1e-10, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRank {
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iter` ran out; `scores` is then the last iterate.
    pub converged: bool,
}

/// Power iteration with uniform teleportation; dangling mass is spread
/// uniformly over all users.
pub fn pagerank(graph: &TemporalGraph, cfg: &PageRankConfig) -> Result<PageRank> {
    let n = graph.num_users();
    if n == 0 {
        return Err(Error::invalid("pagerank needs at least one user"));
    }
    let nf = n as f64;
    let inv_out: Vec<f64> = (0..n)
        .map(|u| {
            let d = graph.out_neighbors(u).len();
            if d == 0 {
                0.0
            } else {
                1.0 / d as f64
            }
        })
        .collect();
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&u| inv_out[u] == 0.0).map(|u| x[u]).sum();
        let base = (1.0 - cfg.damping) / nf + cfg.damping * dangling / nf;
        for (v, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = graph
                .in_neighbors(v)
                .iter()
                .map(|&u| x[u as usize] * inv_out[u as usize])
                .sum();
            *slot = base + cfg.damping * inflow;
        }
        let total: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= total;
        }
        let delta: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        core::mem::swap(&mut x, &mut next);
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(PageRank { scores: x, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{UserId, Window};

    fn graph(n: usize, edges: &[(u32, u32)]) -> TemporalGraph {
        TemporalGraph::new(n, edges.iter().map(|&(a, b)| (UserId(a), UserId(b))), vec![], Window::unbounded())
            .unwrap()
    }

    #[test]
    fn cycle_and_dyad_are_uniform() {
        let pr = pagerank(&graph(3, &[(0, 1), (1, 2), (2, 0)]), &PageRankConfig::default()).unwrap();
        assert!(pr.converged);
        for s in &pr.scores {
            assert!((s - 1.0 / 3.0).abs() < 1e-12);
        }
        let pr = pagerank(&graph(2, &[(0, 1), (1, 0)]), &PageRankConfig::default()).unwrap();
        assert!((pr.scores[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let cfg = PageRankConfig { max_iter: 1, tol: 0.0, ..Default::default() };
        let pr = pagerank(&graph(5, &[(1, 0), (2, 0), (3, 0), (4, 0)]), &cfg).unwrap();
        assert!(!pr.converged);
        assert_eq!(pr.iterations, 1);
        assert!((pr.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_graph_is_rejected() {
        assert!(pagerank(&graph(0, &[]), &PageRankConfig::default()).is_err());
    }
}
