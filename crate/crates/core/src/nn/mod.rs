//! Multilayer perceptrons with reverse-mode gradients, first-order
//! optimizers, and parameter persistence.
//!
//! Everything that trains in this crate (MI critics, encoders, fusion heads)
//! goes through [`forward`] / [`backward`] and an [`OptimizerState`].
//! Gradients are returned as values rather than applied in place so callers
//! can combine several losses before stepping.

pub mod gradcheck;
mod mlp;
mod optim;
pub mod persist;

pub use mlp::{
    backward, backward_params, elu, elu_derivative, forward, init_params, predict, Activation,
    ForwardCache, MlpParams, MlpSpec,
};
pub use optim::{Algorithm, LrSchedule, LrStep, OptimizerConfig, OptimizerState};

use crate::linalg::Matrix;

/// Softmax cross-entropy averaged over the batch, with its gradient
/// with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, targets: &[usize]) -> (f64, Matrix) {
    let (rows, cols) = logits.shape();
    assert_eq!(rows, targets.len(), "one target per row");
    let mut grad = Matrix::zeros(rows, cols);
    let mut loss = 0.0;
    if rows == 0 {
        return (0.0, grad);
    }
    let scale = 1.0 / rows as f64;
    for i in 0..rows {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[targets[i]];
        let g = grad.row_mut(i);
        for (j, v) in row.iter().enumerate() {
            g[j] = (v - log_z).exp() * scale;
        }
        g[targets[i]] -= scale;
    }
    (loss * scale, grad)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = Matrix::from_vec(2, 3, vec![0.2, -1.0, 0.7, 1.5, 0.0, -0.3]);
        let targets = [2, 0];
        let (_, grad) = softmax_cross_entropy(&logits, &targets);
        let h = 1e-6;
        for k in 0..6 {
            let mut plus = logits.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = logits.clone();
            minus.as_mut_slice()[k] -= h;
            let fd = (softmax_cross_entropy(&plus, &targets).0
                - softmax_cross_entropy(&minus, &targets).0)
                / (2.0 * h);
            assert!((fd - grad.as_slice()[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
