use alloc::vec;
use alloc::vec::Vec;

use crate::graph::TemporalGraph;

/// Burt's constraint on the symmetrized graph with unit tie weights:
///
/// `C_i = Σ_{j∈N(i)} (p_ij + Σ_{q∈N(i), q≠j} p_iq p_qj)²`, `p_ij = a_ij / Σ_k a_ik`.
///
/// Isolated users get `f64::INFINITY`.
pub fn burt_constraint(graph: &TemporalGraph) -> Vec<f64> {
    let nbrs = graph.symmetrized();
    let n = nbrs.len();
    let mut indirect = vec![0.0f64; n];
    let mut member = vec![false; n];
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let ni = &nbrs[i];
        if ni.is_empty() {
            scores.push(f64::INFINITY);
            continue;
        }
        let p_i = 1.0 / ni.len() as f64;
        for &j in ni {
            member[j as usize] = true;
        }
        // Ascending q keeps the per-j accumulation order of the textbook loop.
        for &q in ni {
            let nq = &nbrs[q as usize];
            let p_q = 1.0 / nq.len() as f64;
            for &j in nq {
                if j != q && member[j as usize] {
                    indirect[j as usize] += p_i * p_q;
                }
            }
        }
        let mut c = 0.0;
        for &j in ni {
            let t = p_i + indirect[j as usize];
            c += t * t;
            indirect[j as usize] = 0.0;
            member[j as usize] = false;
        }
        scores.push(c);
    }
    scores
}
