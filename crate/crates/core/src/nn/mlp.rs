use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm_raw, Matrix, Op};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => elu(z),
            Activation::Identity => z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Elu => elu_derivative(z),
            Activation::Identity => 1.0,
        }
    }
}

/// ELU with unit scale: `x` for positive inputs, `e^x - 1` otherwise.
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Layer-by-layer description of a feed-forward network.
///
/// `layer_dims[0]` is the input width and the last entry the output width.
/// `activations[h - 1]` is applied to hidden layer `h` (1-based over the
/// interior of `layer_dims`); the output layer is always linear. When
/// `label_concat_at = Some(h)`, a `label_dim`-wide one-hot vector is appended
/// to the activation of hidden layer `h` before the next linear layer, so that
/// layer reads `layer_dims[h] + label_dim` inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    #[serde(default)]
    pub label_concat_at: Option<usize>,
    #[serde(default)]
    pub label_dim: usize,
}

impl MlpSpec {
    /// ELU on every hidden layer, no label input.
    pub fn elu(layer_dims: &[usize]) -> Self {
        let hidden = layer_dims.len().saturating_sub(2);
        MlpSpec {
            layer_dims: layer_dims.to_vec(),
            activations: vec![Activation::Elu; hidden],
            label_concat_at: None,
            label_dim: 0,
        }
    }

    pub fn with_label(mut self, at: usize, label_dim: usize) -> Self {
        self.label_concat_at = Some(at);
        self.label_dim = label_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.layer_dims.len();
        if n < 2 {
            return Err(Error::structural(format!(
                "layer_dims needs at least 2 entries, got {n}"
            )));
        }
        if let Some(i) = self.layer_dims.iter().position(|&d| d == 0) {
            return Err(Error::structural(format!("layer_dims[{i}] is zero")));
        }
        if self.activations.len() != n - 2 {
            return Err(Error::structural(format!(
                "{} hidden layers but {} activations",
                n - 2,
                self.activations.len()
            )));
        }
        match self.label_concat_at {
            Some(h) => {
                if h == 0 || h > n - 2 {
                    return Err(Error::structural(format!(
                        "label_concat_at {h} is not a hidden layer (valid: 1..={})",
                        n - 2
                    )));
                }
                if self.label_dim == 0 {
                    return Err(Error::structural("label_concat_at set with label_dim 0"));
                }
            }
            None => {
                if self.label_dim != 0 {
                    return Err(Error::structural("label_dim > 0 without label_concat_at"));
                }
            }
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated spec")
    }

    /// `(out, in)` for every linear layer, label slots included.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.num_layers())
            .map(|k| {
                let extra = if self.label_concat_at == Some(k) {
                    self.label_dim
                } else {
                    0
                };
                (self.layer_dims[k + 1], self.layer_dims[k] + extra)
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }

    fn activation_after(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            Activation::Identity
        } else {
            self.activations[layer]
        }
    }
}

/// Trainable parameters stored as one flat buffer: per layer the weight
/// matrix (`out × in`, row-major) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self::zeros_with_shapes(spec.layer_shapes())
    }

    fn zeros_with_shapes(shapes: Vec<(usize, usize)>) -> Self {
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut total = 0;
        for (o, i) in &shapes {
            offsets.push(total);
            total += o * i + o;
        }
        MlpParams {
            shapes,
            offsets,
            data: vec![0.0; total],
        }
    }

    /// Rebuilds parameters from a flat buffer in the persisted layout.
    pub fn from_flat(spec: &MlpSpec, data: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let mut p = Self::zeros(spec);
        if data.len() != p.data.len() {
            return Err(Error::structural(format!(
                "expected {} parameters, got {}",
                p.data.len(),
                data.len()
            )));
        }
        p.data = data;
        Ok(p)
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        let (o, i) = self.shapes[layer];
        let off = self.offsets[layer];
        &self.data[off..off + o * i]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let (o, i) = self.shapes[layer];
        let off = self.offsets[layer];
        &mut self.data[off..off + o * i]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (o, i) = self.shapes[layer];
        let off = self.offsets[layer] + o * i;
        &self.data[off..off + o]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let (o, i) = self.shapes[layer];
        let off = self.offsets[layer] + o * i;
        &mut self.data[off..off + o]
    }

    /// Flat range `[start, end)` holding layer `layer` (weights then bias).
    pub fn layer_range(&self, layer: usize) -> std::ops::Range<usize> {
        let (o, i) = self.shapes[layer];
        let off = self.offsets[layer];
        off..off + o * i + o
    }

    pub fn matches(&self, spec: &MlpSpec) -> bool {
        self.shapes == spec.layer_shapes()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += other`, for accumulating gradients.
    pub fn add_assign(&mut self, other: &MlpParams) {
        assert_eq!(self.shapes, other.shapes, "gradient shapes");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Weights uniform on `±sqrt(1 / fan_in)` (fan-in counts label slots),
/// biases zero.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Result<MlpParams> {
    spec.validate()?;
    let mut params = MlpParams::zeros(spec);
    let mut rng = Stream::new(seed, 0x1417);
    for layer in 0..spec.num_layers() {
        let fan_in = params.shapes[layer].1;
        let bound = (1.0 / fan_in as f64).sqrt();
        for w in params.weight_mut(layer) {
            *w = rng.uniform_range(-bound, bound);
        }
    }
    Ok(params)
}

/// Activations recorded by [`forward`] for a later [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    shapes: Vec<(usize, usize)>,
    batch: usize,
    /// Input to each linear layer, after activation and label concatenation.
    inputs: Vec<Matrix>,
    /// Pre-activation output of each linear layer.
    pre: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

fn check_inputs(
    spec: &MlpSpec,
    params: &MlpParams,
    input: &Matrix,
    label: Option<&Matrix>,
) -> Result<()> {
    spec.validate()?;
    if !params.matches(spec) {
        return Err(Error::structural("parameter shapes do not match spec"));
    }
    if input.cols() != spec.input_dim() {
        return Err(Error::structural(format!(
            "input has {} columns, network expects {}",
            input.cols(),
            spec.input_dim()
        )));
    }
    match (spec.label_concat_at, label) {
        (Some(_), Some(l)) => {
            if l.cols() != spec.label_dim || l.rows() != input.rows() {
                return Err(Error::structural(format!(
                    "label block is {}x{}, expected {}x{}",
                    l.rows(),
                    l.cols(),
                    input.rows(),
                    spec.label_dim
                )));
            }
        }
        (Some(_), None) => return Err(Error::structural("network expects a label input")),
        (None, Some(_)) => return Err(Error::structural("network takes no label input")),
        (None, None) => {}
    }
    Ok(())
}

fn linear(params: &MlpParams, layer: usize, x: &Matrix) -> Matrix {
    let (out, inp) = params.shapes[layer];
    let mut z = Matrix::zeros(x.rows(), out);
    gemm_raw(
        Op::N,
        Op::T,
        1.0,
        x.as_slice(),
        x.rows(),
        x.cols(),
        params.weight(layer),
        out,
        inp,
        0.0,
        z.as_mut_slice(),
    );
    let b = params.bias(layer);
    for i in 0..z.rows() {
        for (v, bj) in z.row_mut(i).iter_mut().zip(b) {
            *v += bj;
        }
    }
    z
}

fn run(
    spec: &MlpSpec,
    params: &MlpParams,
    input: &Matrix,
    label: Option<&Matrix>,
    keep: bool,
) -> Result<(Matrix, Option<ForwardCache>)> {
    check_inputs(spec, params, input, label)?;
    let layers = spec.num_layers();
    let mut inputs = Vec::with_capacity(if keep { layers } else { 0 });
    let mut pre = Vec::with_capacity(if keep { layers } else { 0 });
    let mut x = input.clone();
    for k in 0..layers {
        if spec.label_concat_at == Some(k) {
            let l = label.expect("checked above");
            x = Matrix::hcat(&[&x, l]);
        }
        let z = linear(params, k, &x);
        let act = spec.activation_after(k);
        let mut a = z.clone();
        if act != Activation::Identity {
            a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        }
        if keep {
            inputs.push(x);
            pre.push(z);
        }
        x = a;
    }
    let cache = keep.then(|| ForwardCache {
        shapes: spec.layer_shapes(),
        batch: input.rows(),
        inputs,
        pre,
    });
    Ok((x, cache))
}

/// Batched forward pass (one example per row), keeping the activations
/// needed for [`backward`].
pub fn forward(
    spec: &MlpSpec,
    params: &MlpParams,
    input: &Matrix,
    label: Option<&Matrix>,
) -> Result<(Matrix, ForwardCache)> {
    let (out, cache) = run(spec, params, input, label, true)?;
    Ok((out, cache.expect("requested")))
}

/// Forward pass without caching.
pub fn predict(
    spec: &MlpSpec,
    params: &MlpParams,
    input: &Matrix,
    label: Option<&Matrix>,
) -> Result<Matrix> {
    Ok(run(spec, params, input, label, false)?.0)
}

/// Gradients of `sum_i <grad_out_i, f(x_i)>` with respect to the parameters
/// and to the (non-label) input. The label slot's gradient is discarded.
pub fn backward(
    spec: &MlpSpec,
    params: &MlpParams,
    cache: &ForwardCache,
    grad_out: &Matrix,
) -> Result<(MlpParams, Matrix)> {
    let (g, dx) = backward_inner(spec, params, cache, grad_out, true)?;
    Ok((g, dx.expect("requested")))
}

/// [`backward`] without the input gradient, which saves one product on the
/// first layer.
pub fn backward_params(
    spec: &MlpSpec,
    params: &MlpParams,
    cache: &ForwardCache,
    grad_out: &Matrix,
) -> Result<MlpParams> {
    Ok(backward_inner(spec, params, cache, grad_out, false)?.0)
}

fn backward_inner(
    spec: &MlpSpec,
    params: &MlpParams,
    cache: &ForwardCache,
    grad_out: &Matrix,
    want_input: bool,
) -> Result<(MlpParams, Option<Matrix>)> {
    spec.validate()?;
    let shapes = spec.layer_shapes();
    if cache.shapes != shapes || params.shapes != shapes {
        return Err(Error::structural(
            "forward cache or parameters do not belong to this network",
        ));
    }
    if grad_out.shape() != (cache.batch, spec.output_dim()) {
        return Err(Error::structural(format!(
            "output gradient is {}x{}, cache holds {}x{}",
            grad_out.rows(),
            grad_out.cols(),
            cache.batch,
            spec.output_dim()
        )));
    }
    let layers = spec.num_layers();
    let mut grads = MlpParams::zeros_with_shapes(shapes.clone());
    let mut d_act = grad_out.clone();
    let mut input_grad = None;
    for k in (0..layers).rev() {
        let (out, inp) = shapes[k];
        let act = spec.activation_after(k);
        let mut dz = d_act;
        if act != Activation::Identity {
            for (g, z) in dz.as_mut_slice().iter_mut().zip(cache.pre[k].as_slice()) {
                *g *= act.derivative(*z);
            }
        }
        let x = &cache.inputs[k];
        gemm_raw(
            Op::T,
            Op::N,
            1.0,
            dz.as_slice(),
            dz.rows(),
            out,
            x.as_slice(),
            x.rows(),
            inp,
            0.0,
            grads.weight_mut(k),
        );
        grads.bias_mut(k).copy_from_slice(&dz.column_sums());
        if k == 0 && !want_input {
            break;
        }
        let mut dx = Matrix::zeros(dz.rows(), inp);
        gemm_raw(
            Op::N,
            Op::N,
            1.0,
            dz.as_slice(),
            dz.rows(),
            out,
            params.weight(k),
            out,
            inp,
            0.0,
            dx.as_mut_slice(),
        );
        if spec.label_concat_at == Some(k) {
            dx = dx.columns(0, inp - spec.label_dim);
        }
        if k == 0 {
            input_grad = Some(dx);
            break;
        }
        d_act = dx;
    }
    Ok((grads, input_grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::elu(&[3]).validate().is_err());
        assert!(MlpSpec::elu(&[3, 0, 1]).validate().is_err());
        assert!(MlpSpec::elu(&[3, 4, 1])
            .with_label(2, 2)
            .validate()
            .is_err());
        assert!(MlpSpec::elu(&[3, 4, 1])
            .with_label(0, 2)
            .validate()
            .is_err());
        assert!(MlpSpec::elu(&[3, 4, 1])
            .with_label(1, 0)
            .validate()
            .is_err());
        assert!(MlpSpec::elu(&[3, 4, 1]).with_label(1, 2).validate().is_ok());
        let mut bad = MlpSpec::elu(&[3, 4, 1]);
        bad.label_dim = 2;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn label_slot_widens_next_layer() {
        // linear4 reads the 10-wide output of linear3 plus a 2-wide one-hot.
        let spec = MlpSpec::elu(&[300, 1000, 200, 10, 12, 1]).with_label(3, 2);
        assert_eq!(
            spec.layer_shapes(),
            vec![(1000, 300), (200, 1000), (10, 200), (12, 12), (1, 12)]
        );
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let spec = MlpSpec::elu(&[2, 3]);
        let a = init_params(&spec, 7).unwrap();
        let b = init_params(&spec, 7).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert!(a.bias(0).iter().all(|&v| v == 0.0));
        let bound = (0.5f64).sqrt();
        assert!(a.weight(0).iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_weight_mean_within_three_standard_errors() {
        let spec = MlpSpec::elu(&[50, 10]);
        let p = init_params(&spec, 1).unwrap();
        let w = p.weight(0);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * (var / n).sqrt());
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = MlpSpec::elu(&[3, 3]);
        let mut p = MlpParams::zeros(&spec);
        for i in 0..3 {
            p.weight_mut(0)[i * 3 + i] = 1.0;
        }
        let x = Matrix::from_vec(1, 3, vec![0.5, -2.0, 7.0]);
        let y = predict(&spec, &p, &x, None).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn elu_fixed_points() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(1.0), 1.0);
        assert!((elu(-1.0) - (-0.632_120_558_828_557_7)).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatches_are_structural_errors() {
        let spec = MlpSpec::elu(&[3, 4, 1]).with_label(1, 2);
        let p = init_params(&spec, 0).unwrap();
        let x = Matrix::zeros(2, 3);
        let l = Matrix::zeros(2, 2);
        assert!(forward(&spec, &p, &Matrix::zeros(2, 4), Some(&l)).is_err());
        assert!(forward(&spec, &p, &x, None).is_err());
        assert!(forward(&spec, &p, &x, Some(&Matrix::zeros(2, 3))).is_err());
        let (_, cache) = forward(&spec, &p, &x, Some(&l)).unwrap();
        assert!(backward(&spec, &p, &cache, &Matrix::zeros(3, 1)).is_err());
        let other = MlpSpec::elu(&[3, 5, 1]).with_label(1, 2);
        let q = init_params(&other, 0).unwrap();
        assert!(backward(&other, &q, &cache, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let spec = MlpSpec::elu(&[4, 6, 3]);
        let p = init_params(&spec, 2).unwrap();
        let x = Matrix::from_vec(2, 4, (0..8).map(|v| v as f64 - 3.0).collect());
        let (_, cache) = forward(&spec, &p, &x, None).unwrap();
        let (g, dx) = backward(&spec, &p, &cache, &Matrix::zeros(2, 3)).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn params_only_backward_agrees() {
        let spec = MlpSpec::elu(&[4, 6, 2]).with_label(1, 3);
        let p = init_params(&spec, 4).unwrap();
        let x = Matrix::from_vec(2, 4, (0..8).map(|v| (v as f64).cos()).collect());
        let l = Matrix::from_vec(2, 3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let (_, cache) = forward(&spec, &p, &x, Some(&l)).unwrap();
        let go = Matrix::from_vec(2, 2, vec![1.0, -0.5, 0.25, 2.0]);
        let (g1, dx) = backward(&spec, &p, &cache, &go).unwrap();
        let g2 = backward_params(&spec, &p, &cache, &go).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(dx.shape(), (2, 4));
    }
}
