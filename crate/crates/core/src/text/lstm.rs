//! Single-direction LSTM layer over a flat parameter buffer.
//!
//! Gate order in the stacked `4H` pre-activation is input, forget, output,
//! candidate.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{self, matvec_add, matvec_t_add, outer_add, sigmoid};

/// Offsets of `W (4H x D)`, `U (4H x H)` and `b (4H)` inside the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    pub w: usize,
    pub u: usize,
    pub b: usize,
}

impl LstmParams {
    pub fn allocate(input: usize, hidden: usize, cursor: &mut usize) -> Self {
        let w = *cursor;
        let u = w + 4 * hidden * input;
        let b = u + 4 * hidden * hidden;
        *cursor = b + 4 * hidden;
        LstmParams { input, hidden, w, u, b }
    }

    fn w<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + 4 * self.hidden * self.input]
    }

    fn u<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.u..self.u + 4 * self.hidden * self.hidden]
    }

    fn b<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + 4 * self.hidden]
    }
}

/// Activations kept for the backward pass, indexed by sequence position.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub len: usize,
    pub reverse: bool,
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmTrace {
    #[inline]
    pub fn hidden_at(&self, pos: usize, hidden: usize) -> &[f64] {
        &self.h[pos * hidden..(pos + 1) * hidden]
    }
}

fn order(len: usize, reverse: bool) -> impl DoubleEndedIterator<Item = usize> {
    (0..len).map(move |t| if reverse { len - 1 - t } else { t })
}

/// Runs the layer over `xs` (`len x input`, row-major).
pub fn lstm_forward(params: &[f64], lp: &LstmParams, xs: &[f64], len: usize, reverse: bool) -> LstmTrace {
    let (d, h) = (lp.input, lp.hidden);
    let mut gates = vec![0.0; len * 4 * h];
    let mut c = vec![0.0; len * h];
    let mut tanh_c = vec![0.0; len * h];
    let mut hs = vec![0.0; len * h];
    let (w, u, b) = (lp.w(params), lp.u(params), lp.b(params));
    let mut prev: Option<usize> = None;
    let mut z = vec![0.0; 4 * h];
    for pos in order(len, reverse) {
        z.copy_from_slice(b);
        matvec_add(w, 4 * h, d, &xs[pos * d..(pos + 1) * d], &mut z);
        if let Some(pp) = prev {
            matvec_add(u, 4 * h, h, &hs[pp * h..(pp + 1) * h], &mut z);
        }
        let g = &mut gates[pos * 4 * h..(pos + 1) * 4 * h];
        for k in 0..3 * h {
            g[k] = sigmoid(z[k]);
        }
        for k in 3 * h..4 * h {
            g[k] = math::tanh(z[k]);
        }
        for k in 0..h {
            let c_prev = prev.map_or(0.0, |pp| c[pp * h + k]);
            let ck = g[h + k] * c_prev + g[k] * g[3 * h + k];
            c[pos * h + k] = ck;
            let tc = math::tanh(ck);
            tanh_c[pos * h + k] = tc;
            hs[pos * h + k] = g[2 * h + k] * tc;
        }
        prev = Some(pos);
    }
    LstmTrace { len, reverse, gates, c, tanh_c, h: hs }
}

/// Backpropagates `dh` (`len x hidden`) through the layer. Parameter
/// gradients accumulate into `grads` (same layout as `params`) and input
/// gradients into `dxs` (`len x input`).
pub fn lstm_backward(
    params: &[f64],
    lp: &LstmParams,
    xs: &[f64],
    trace: &LstmTrace,
    dh: &[f64],
    grads: &mut [f64],
    dxs: &mut [f64],
) {
    let (d, h) = (lp.input, lp.hidden);
    let len = trace.len;
    let steps: Vec<usize> = order(len, trace.reverse).collect();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let mut dh_prev = vec![0.0; h];
    for (step, &pos) in steps.iter().enumerate().rev() {
        let prev = if step == 0 { None } else { Some(steps[step - 1]) };
        let g = &trace.gates[pos * 4 * h..(pos + 1) * 4 * h];
        for k in 0..h {
            let dhk = dh[pos * h + k] + dh_next[k];
            let (i, f, o, cand) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let tc = trace.tanh_c[pos * h + k];
            let dc = dc_next[k] + dhk * o * (1.0 - tc * tc);
            let c_prev = prev.map_or(0.0, |pp| trace.c[pp * h + k]);
            dz[k] = dc * cand * i * (1.0 - i);
            dz[h + k] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + k] = dhk * tc * o * (1.0 - o);
            dz[3 * h + k] = dc * i * (1.0 - cand * cand);
            dc_next[k] = dc * f;
        }
        outer_add(&mut grads[lp.w..lp.w + 4 * h * d], &dz, &xs[pos * d..(pos + 1) * d]);
        for (gb, &v) in grads[lp.b..lp.b + 4 * h].iter_mut().zip(&dz) {
            *gb += v;
        }
        matvec_t_add(lp.w(params), 4 * h, d, &dz, &mut dxs[pos * d..(pos + 1) * d]);
        dh_prev.iter_mut().for_each(|v| *v = 0.0);
        if let Some(pp) = prev {
            outer_add(&mut grads[lp.u..lp.u + 4 * h * h], &dz, &trace.h[pp * h..(pp + 1) * h]);
            matvec_t_add(lp.u(params), 4 * h, h, &dz, &mut dh_prev);
        }
        core::mem::swap(&mut dh_next, &mut dh_prev);
    }
}
