//! L2-regularized logistic regression on standardized features.
//!
//! Minimizes `Σ_n bce(w·x̃_n + b, y_n) + (l2/2)‖w‖²` (intercept unpenalized)
//! with Nesterov-accelerated gradient descent and adaptive restart.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fusion::Standardizer;
use crate::graph::Label;
use crate::math::{self, bce_with_logit, dot, sigmoid};

pub const MAX_ITERATIONS: usize = 500;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogisticModel {
    pub standardizer: Standardizer,
    /// Coefficients on the standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl LogisticModel {
    pub fn zero(width: usize) -> Self {
        LogisticModel {
            standardizer: Standardizer::identity(width),
            weights: vec![0.0; width],
            bias: 0.0,
            iterations: 0,
            gradient_norm: 0.0,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut z = Vec::with_capacity(x.len());
        self.standardizer.apply(x, &mut z);
        sigmoid(dot(&self.weights, &z) + self.bias)
    }
}

/// Objective and gradient (weights then bias) on standardized rows.
pub fn objective(rows: &[Vec<f64>], targets: &[f64], l2: f64, w: &[f64], b: f64, grad: &mut [f64]) -> f64 {
    let d = w.len();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.5 * l2 * dot(w, w);
    for (x, &t) in rows.iter().zip(targets) {
        let z = dot(w, x) + b;
        loss += bce_with_logit(z, t);
        let e = sigmoid(z) - t;
        math::axpy(e, x, &mut grad[..d]);
        grad[d] += e;
    }
    math::axpy(l2, w, &mut grad[..d]);
    loss
}

pub fn train_logistic(features: &[Vec<f64>], labels: &[Label], l2: f64) -> Result<LogisticModel> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: features.len(), found: labels.len() });
    }
    let n_pos = labels.iter().filter(|l| l.is_unfollow()).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::invalid("logistic regression needs both classes"));
    }
    let standardizer = Standardizer::fit(features);
    let mut rows = Vec::with_capacity(features.len());
    for f in features {
        let mut z = Vec::new();
        standardizer.apply(f, &mut z);
        rows.push(z);
    }
    let targets: Vec<f64> = labels.iter().map(|l| l.target()).collect();
    let d = rows[0].len();
    // Lipschitz bound of the gradient: ‖[X 1]‖_F² / 4 + l2.
    let frob: f64 = rows.iter().map(|x| dot(x, x) + 1.0).sum();
    let step = 1.0 / (0.25 * frob + l2);

    let mut theta = vec![0.0; d + 1];
    let mut prev = theta.clone();
    let mut look = theta.clone();
    let mut grad = vec![0.0; d + 1];
    let mut momentum = 1.0f64;
    let mut last_loss = objective(&rows, &targets, l2, &theta[..d], theta[d], &mut grad);
    let mut gradient_norm = math::norm(&grad);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && gradient_norm >= GRADIENT_TOLERANCE {
        iterations += 1;
        objective(&rows, &targets, l2, &look[..d], look[d], &mut grad);
        prev.copy_from_slice(&theta);
        for ((t, &y), &g) in theta.iter_mut().zip(&look).zip(&grad) {
            *t = y - step * g;
        }
        let loss = objective(&rows, &targets, l2, &theta[..d], theta[d], &mut grad);
        gradient_norm = math::norm(&grad);
        if loss > last_loss {
            // Restart momentum when the objective goes up.
            momentum = 1.0;
            look.copy_from_slice(&theta);
        } else {
            let next = 0.5 * (1.0 + math::sqrt(1.0 + 4.0 * momentum * momentum));
            let beta = (momentum - 1.0) / next;
            for ((y, &t), &p) in look.iter_mut().zip(&theta).zip(&prev) {
                *y = t + beta * (t - p);
            }
            momentum = next;
        }
        last_loss = loss;
    }
    let bias = theta[d];
    theta.truncate(d);
    Ok(LogisticModel { standardizer, weights: theta, bias, iterations, gradient_norm })
}
