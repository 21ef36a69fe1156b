//! Central finite-difference checks of [`backward`].

use crate::error::Result;
use crate::linalg::Matrix;
use crate::rng::Stream;

use super::{backward, forward, init_params, Activation, MlpParams, MlpSpec};

/// Worst disagreement between analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Over parameters and inputs, `|a - n| / max(|a|, |n|, floor)`.
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Denominator floor so that near-zero gradients are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compares gradients of the scalar loss `Σ_ij w_ij f(x)_ij` with central
/// differences of step `h`, for every parameter and input entry.
pub fn gradient_check(
    spec: &MlpSpec,
    params: &MlpParams,
    input: &Matrix,
    label: Option<&Matrix>,
    weights: &Matrix,
    h: f64,
) -> Result<GradCheck> {
    let loss = |p: &MlpParams, x: &Matrix| -> Result<f64> {
        let (out, _) = forward(spec, p, x, label)?;
        Ok(out
            .as_slice()
            .iter()
            .zip(weights.as_slice())
            .map(|(o, w)| o * w)
            .sum())
    };
    let (_, cache) = forward(spec, params, input, label)?;
    let (g, dx) = backward(spec, params, &cache, weights)?;
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for i in 0..p.len() {
        let v = p.as_slice()[i];
        p.as_mut_slice()[i] = v + h;
        let up = loss(&p, input)?;
        p.as_mut_slice()[i] = v - h;
        let down = loss(&p, input)?;
        p.as_mut_slice()[i] = v;
        worst = worst.max(rel(g.as_slice()[i], (up - down) / (2.0 * h)));
    }
    let mut x = input.clone();
    for i in 0..x.as_slice().len() {
        let v = x.as_slice()[i];
        x.as_mut_slice()[i] = v + h;
        let up = loss(params, &x)?;
        x.as_mut_slice()[i] = v - h;
        let down = loss(params, &x)?;
        x.as_mut_slice()[i] = v;
        worst = worst.max(rel(dx.as_slice()[i], (up - down) / (2.0 * h)));
    }
    Ok(GradCheck {
        max_rel_error: worst,
        checked: params.len() + input.as_slice().len(),
    })
}

/// A random network of up to three hidden layers (widths ≤ 20 in, ≤ 16
/// hidden), optionally with a label slot, checked on a random batch.
pub fn random_gradient_check(rng: &mut Stream, h: f64) -> Result<GradCheck> {
    let depth = 1 + rng.below(3);
    let mut dims = vec![1 + rng.below(20)];
    for _ in 0..depth {
        dims.push(1 + rng.below(16));
    }
    dims.push(1 + rng.below(4));
    let mut spec = MlpSpec::elu(&dims);
    for a in spec.activations.iter_mut() {
        if rng.bernoulli(0.2) {
            *a = Activation::Identity;
        }
    }
    let label_dim = 2 + rng.below(3);
    let labeled = rng.bernoulli(0.5);
    if labeled {
        spec = spec.with_label(1 + rng.below(depth), label_dim);
    }
    let params = init_params(&spec, rng.below(1 << 30) as u64)?;
    let batch = 1 + rng.below(4);
    let input = Matrix::from_vec(batch, dims[0], rng.normal_vec(batch * dims[0]));
    let label = labeled.then(|| {
        let mut l = Matrix::zeros(batch, label_dim);
        for r in 0..batch {
            l.as_mut_slice()[r * label_dim + rng.below(label_dim)] = 1.0;
        }
        l
    });
    let out = spec.output_dim();
    let weights = Matrix::from_vec(batch, out, rng.normal_vec(batch * out));
    gradient_check(&spec, &params, &input, label.as_ref(), &weights, h)
}
