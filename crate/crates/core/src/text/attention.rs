//! Additive attention pooling: `α ∝ exp(c · tanh(W h_t + b))`, output `Σ α_t h_t`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{self, axpy, dot, matvec_add, matvec_t_add, outer_add};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttentionParams {
    pub input: usize,
    pub att: usize,
    pub w: usize,
    pub b: usize,
    pub context: usize,
}

impl AttentionParams {
    pub fn allocate(input: usize, att: usize, cursor: &mut usize) -> Self {
        let w = *cursor;
        let b = w + att * input;
        let context = b + att;
        *cursor = context + att;
        AttentionParams { input, att, w, b, context }
    }
}

#[derive(Debug, Clone)]
pub struct AttentionTrace {
    projected: Vec<f64>,
    pub alpha: Vec<f64>,
}

pub fn attention_forward(params: &[f64], ap: &AttentionParams, hs: &[f64], len: usize) -> (Vec<f64>, AttentionTrace) {
    let (e, a) = (ap.input, ap.att);
    let w = &params[ap.w..ap.w + a * e];
    let b = &params[ap.b..ap.b + a];
    let ctx = &params[ap.context..ap.context + a];
    let mut projected = vec![0.0; len * a];
    let mut alpha = vec![0.0; len];
    for t in 0..len {
        let u = &mut projected[t * a..(t + 1) * a];
        u.copy_from_slice(b);
        matvec_add(w, a, e, &hs[t * e..(t + 1) * e], u);
        for v in u.iter_mut() {
            *v = math::tanh(*v);
        }
        alpha[t] = dot(u, ctx);
    }
    math::softmax_in_place(&mut alpha);
    let mut out = vec![0.0; e];
    for t in 0..len {
        axpy(alpha[t], &hs[t * e..(t + 1) * e], &mut out);
    }
    (out, AttentionTrace { projected, alpha })
}

pub fn attention_backward(
    params: &[f64],
    ap: &AttentionParams,
    hs: &[f64],
    trace: &AttentionTrace,
    dout: &[f64],
    grads: &mut [f64],
    dhs: &mut [f64],
) {
    let (e, a) = (ap.input, ap.att);
    let len = trace.alpha.len();
    let ctx = &params[ap.context..ap.context + a];
    let w = &params[ap.w..ap.w + a * e];
    let dalpha: Vec<f64> = (0..len).map(|t| dot(&hs[t * e..(t + 1) * e], dout)).collect();
    let weighted: f64 = trace.alpha.iter().zip(&dalpha).map(|(al, da)| al * da).sum();
    let mut dpre = vec![0.0; a];
    for t in 0..len {
        let dh = &mut dhs[t * e..(t + 1) * e];
        axpy(trace.alpha[t], dout, dh);
        let dscore = trace.alpha[t] * (dalpha[t] - weighted);
        let u = &trace.projected[t * a..(t + 1) * a];
        axpy(dscore, u, &mut grads[ap.context..ap.context + a]);
        for k in 0..a {
            dpre[k] = dscore * ctx[k] * (1.0 - u[k] * u[k]);
        }
        outer_add(&mut grads[ap.w..ap.w + a * e], &dpre, &hs[t * e..(t + 1) * e]);
        axpy(1.0, &dpre, &mut grads[ap.b..ap.b + a]);
        matvec_t_add(w, a, e, &dpre, dh);
    }
}
