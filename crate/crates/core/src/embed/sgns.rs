use crate::math::{axpy, dot, sigmoid};

/// One negative-sampling update for a single input vector.
///
/// `input` is a snapshot of the input vector. Each `(id, label)` target moves
/// its row of `outputs` by `lr (label - σ(x·v)) x`, and the matching input
/// step accumulates into `err`, which the caller adds to the input row. The
/// combined move is `-lr` times the gradient of
/// `-Σ [label ln σ(x·v) + (1 - label) ln σ(-x·v)]` at the snapshot.
pub fn sgns_step(
    input: &[f64],
    outputs: &mut [f64],
    targets: impl IntoIterator<Item = (usize, f64)>,
    lr: f64,
    err: &mut [f64],
) {
    let dim = input.len();
    for (id, label) in targets {
        let v = &mut outputs[id * dim..(id + 1) * dim];
        let g = (label - sigmoid(dot(input, v))) * lr;
        axpy(g, v, err);
        axpy(g, input, v);
    }
}
