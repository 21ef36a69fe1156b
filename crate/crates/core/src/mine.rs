//! Donsker–Varadhan neural estimation of mutual information.
//!
//! A critic `T(a, b)` is trained to maximise
//! `mean T(joint) − ln mean exp T(marginal)`, where marginal pairs are formed
//! by cyclically permuting the `b` rows (and the label, when present) within
//! each minibatch. The reported value is the median validation-split
//! objective over the final window of epochs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{backward_params, forward, init_params, predict, MlpParams, MlpSpec};
use crate::nn::{OptimizerConfig, OptimizerState};
use crate::rng::{derive_seed, Stream};
use crate::stats::{mean, median, std_dev};

const TAG_INIT: u64 = 1;
const TAG_BATCHES: u64 = 2;
const TAG_EVAL: u64 = 3;

/// `mean(joint) − ln mean(exp(marginal))`, with the log-mean-exp shifted by
/// its maximum.
pub fn dv_objective(joint: &[f64], marginal: &[f64]) -> Result<f64> {
    if joint.is_empty() || marginal.is_empty() {
        return Err(Error::structural(
            "DV objective needs nonempty score vectors",
        ));
    }
    if joint.iter().chain(marginal).any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite critic score"));
    }
    Ok(mean(joint) - log_mean_exp(marginal))
}

fn log_mean_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = xs.iter().map(|v| (v - max).exp()).sum();
    max + (s / xs.len() as f64).ln()
}

/// Product-of-marginals pairing: `b` rows are moved by a seeded cyclic
/// permutation (no row keeps its partner), `a` stays in place.
pub fn marginal_resample(a: &Matrix, b: &Matrix, seed: u64) -> Result<(Matrix, Matrix)> {
    if a.rows() != b.rows() {
        return Err(Error::structural(format!(
            "blocks have {} and {} rows",
            a.rows(),
            b.rows()
        )));
    }
    if a.rows() < 2 {
        return Err(Error::structural(
            "marginal resampling needs at least 2 rows",
        ));
    }
    let perm = Stream::new(seed, TAG_EVAL).cyclic_permutation(b.rows());
    Ok((a.clone(), b.select_rows(&perm)))
}

/// A scalar-output critic over `concat(a, b)`, optionally reading a one-hot
/// label part way through the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticSpec {
    pub mlp: MlpSpec,
    /// When set to `c`, scores are squashed to `c·tanh(t/c)`, which caps
    /// the objective at `2c` nats.
    #[serde(default)]
    pub output_bound: Option<f64>,
}

impl CriticSpec {
    pub fn new(mlp: MlpSpec) -> Result<Self> {
        mlp.validate()?;
        if mlp.output_dim() != 1 {
            return Err(Error::structural(format!(
                "critic output dim is {}, must be 1",
                mlp.output_dim()
            )));
        }
        Ok(CriticSpec {
            mlp,
            output_bound: None,
        })
    }

    pub fn with_output_bound(mut self, bound: Option<f64>) -> Result<Self> {
        if let Some(c) = bound {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::structural(format!(
                    "output bound {c} must be positive and finite"
                )));
            }
        }
        self.output_bound = bound;
        Ok(self)
    }

    /// Applies the output bound in place; returns `d bounded / d raw` per
    /// score.
    fn squash(&self, t: &mut Matrix) -> Option<Vec<f64>> {
        let c = self.output_bound?;
        Some(
            t.as_mut_slice()
                .iter_mut()
                .map(|v| {
                    let th = (*v / c).tanh();
                    *v = c * th;
                    1.0 - th * th
                })
                .collect(),
        )
    }

    /// Critic scores for rows of `concat(a, b)`.
    pub fn scores(&self, params: &MlpParams, x: &Matrix, label: Option<&Matrix>) -> Result<Matrix> {
        let mut t = predict(&self.mlp, params, x, label)?;
        self.squash(&mut t);
        Ok(t)
    }

    /// ELU critic `input_dim → hidden… → 1`.
    pub fn plain(input_dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Self::new(MlpSpec::elu(&dims))
    }

    /// As [`CriticSpec::plain`], with a `num_classes`-wide one-hot label
    /// appended to the output of hidden layer `concat_at` (1-based).
    pub fn labeled(
        input_dim: usize,
        hidden: &[usize],
        concat_at: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Self::new(MlpSpec::elu(&dims).with_label(concat_at, num_classes))
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn takes_label(&self) -> bool {
        self.mlp.label_concat_at.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Fraction of final epochs whose validation objective is aggregated.
    #[serde(default = "default_window")]
    pub eval_window_frac: f64,
    #[serde(default)]
    pub clamp_nonnegative: bool,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Moving-average rate for the gradient's log-denominator; `None` uses
    /// the plain minibatch gradient.
    #[serde(default)]
    pub ema_rate: Option<f64>,
    /// Z-score every feature column of both blocks with training-split
    /// statistics before training. Per-column affine maps leave the mutual
    /// information unchanged; they only fix the critic's input scale.
    #[serde(default)]
    pub standardize: bool,
}

fn default_window() -> f64 {
    0.1
}

fn default_replicates() -> usize {
    3
}

impl Default for MineTrainConfig {
    fn default() -> Self {
        MineTrainConfig {
            epochs: 500,
            batch_size: 100,
            optimizer: OptimizerConfig::adam(1e-3, 2e-4),
            eval_window_frac: default_window(),
            clamp_nonnegative: false,
            replicates: default_replicates(),
            seed: 0,
            ema_rate: None,
            standardize: false,
        }
    }
}

impl MineTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size < 2 || self.replicates == 0 {
            return Err(Error::structural(
                "epochs and replicates must be positive, batch_size at least 2",
            ));
        }
        if !(self.eval_window_frac > 0.0 && self.eval_window_frac <= 1.0) {
            return Err(Error::structural(format!(
                "eval_window_frac = {} outside (0, 1]",
                self.eval_window_frac
            )));
        }
        if let Some(r) = self.ema_rate {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::structural(format!("ema_rate = {r} outside [0, 1)")));
            }
        }
        self.optimizer.validate()
    }

    /// Number of final epochs aggregated into the estimate.
    pub fn window(&self) -> usize {
        ((self.epochs as f64 * self.eval_window_frac).ceil() as usize).clamp(1, self.epochs)
    }
}

/// The two argument blocks of `I(A; B)` (or `I(A; B, Y)` with `label`),
/// row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct MiSamples {
    pub a: Matrix,
    pub b: Matrix,
    /// One-hot label rows, riding with `b`.
    pub label: Option<Matrix>,
}

impl MiSamples {
    pub fn new(a: Matrix, b: Matrix, label: Option<Matrix>) -> Result<Self> {
        let s = MiSamples { a, b, label };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.a.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.rows() == 0
    }

    fn validate(&self) -> Result<()> {
        let n = self.a.rows();
        if self.b.rows() != n || self.label.as_ref().is_some_and(|l| l.rows() != n) {
            return Err(Error::structural(
                "argument blocks must have equal row counts",
            ));
        }
        Ok(())
    }

    fn check_critic(&self, critic: &CriticSpec) -> Result<()> {
        let width = self.a.cols() + self.b.cols();
        if critic.input_dim() != width {
            return Err(Error::structural(format!(
                "critic input dim {} does not match concatenated block dims {} + {}",
                critic.input_dim(),
                self.a.cols(),
                self.b.cols()
            )));
        }
        match (&self.label, critic.takes_label()) {
            (Some(l), true) if l.cols() != critic.mlp.label_dim => Err(Error::structural(format!(
                "label width {} but critic expects {}",
                l.cols(),
                critic.mlp.label_dim
            ))),
            (Some(_), false) => Err(Error::structural(
                "labels given to a critic without a label input",
            )),
            (None, true) => Err(Error::structural(
                "critic expects labels but none were given",
            )),
            _ => Ok(()),
        }
    }

    /// Critic inputs for `a` rows `ia` paired with `b`/label rows `ib`.
    fn gather(&self, ia: &[usize], ib: &[usize]) -> (Matrix, Option<Matrix>) {
        let (wa, wb) = (self.a.cols(), self.b.cols());
        let mut data = Vec::with_capacity(ia.len() * (wa + wb));
        for (&i, &j) in ia.iter().zip(ib) {
            data.extend_from_slice(self.a.row(i));
            data.extend_from_slice(self.b.row(j));
        }
        let x = Matrix::from_vec(ia.len(), wa + wb, data);
        let label = self.label.as_ref().map(|l| l.select_rows(ib));
        (x, label)
    }
}

/// Result of [`train_mi`] across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Mean of the replicate values (nats).
    pub value: f64,
    /// Per-epoch validation objective, averaged over replicates.
    pub curve: Vec<f64>,
    pub replicate_values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MiEstimate {
    pub fn from_replicates(values: Vec<f64>, curves: &[Vec<f64>]) -> Self {
        let epochs = curves.iter().map(Vec::len).min().unwrap_or(0);
        let curve = (0..epochs)
            .map(|e| curves.iter().map(|c| c[e]).sum::<f64>() / curves.len() as f64)
            .collect();
        let m = mean(&values);
        let s = if values.len() > 1 {
            std_dev(&values)
        } else {
            0.0
        };
        MiEstimate {
            value: m,
            curve,
            replicate_values: values,
            mean: m,
            std: s,
        }
    }
}

/// One trained replicate.
#[derive(Debug, Clone)]
pub struct MiRun {
    pub value: f64,
    pub curve: Vec<f64>,
    pub params: MlpParams,
}

impl MiEstimate {
    pub fn from_runs(runs: &[MiRun]) -> Self {
        let values = runs.iter().map(|r| r.value).collect();
        let curves: Vec<Vec<f64>> = runs.iter().map(|r| r.curve.clone()).collect();
        Self::from_replicates(values, &curves)
    }
}

/// Trains `cfg.replicates` critics on `train` and evaluates them on `val`.
pub fn train_mi(
    train: &MiSamples,
    val: &MiSamples,
    critic: &CriticSpec,
    cfg: &MineTrainConfig,
) -> Result<MiEstimate> {
    Ok(MiEstimate::from_runs(&train_mi_runs(train, val, critic, cfg)?))
}

/// As [`train_mi`], keeping each replicate's parameters. With
/// `cfg.standardize` the parameters expect standardized inputs.
pub fn train_mi_runs(
    train: &MiSamples,
    val: &MiSamples,
    critic: &CriticSpec,
    cfg: &MineTrainConfig,
) -> Result<Vec<MiRun>> {
    let scaled;
    let (train, val) = if cfg.standardize {
        train.validate()?;
        val.validate()?;
        scaled = standardize_pair(train, val)?;
        (&scaled.0, &scaled.1)
    } else {
        (train, val)
    };
    (0..cfg.replicates)
        .map(|r| train_mi_once(train, val, critic, cfg, derive_seed(cfg.seed, r as u64)))
        .collect()
}

/// Per-column `(mean, std)` of `m`; constant columns get std 1.
fn column_stats(m: &Matrix) -> Vec<(f64, f64)> {
    let n = m.rows().max(1) as f64;
    (0..m.cols())
        .map(|c| {
            let mean = (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / n;
            let var = (0..m.rows()).map(|r| (m.get(r, c) - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 1e-12 { sd } else { 1.0 })
        })
        .collect()
}

fn apply_stats(m: &Matrix, stats: &[(f64, f64)]) -> Matrix {
    let mut out = m.clone();
    let cols = m.cols();
    for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
        let (mu, sd) = stats[i % cols];
        *v = (*v - mu) / sd;
    }
    out
}

fn standardize_pair(train: &MiSamples, val: &MiSamples) -> Result<(MiSamples, MiSamples)> {
    let sa = column_stats(&train.a);
    let sb = column_stats(&train.b);
    let map = |s: &MiSamples| {
        MiSamples::new(apply_stats(&s.a, &sa), apply_stats(&s.b, &sb), s.label.clone())
    };
    Ok((map(train)?, map(val)?))
}

/// Validation objective of a critic with a fixed marginal pairing.
pub fn evaluate_dv(
    critic: &CriticSpec,
    params: &MlpParams,
    val: &MiSamples,
    perm: &[usize],
) -> Result<f64> {
    let idx: Vec<usize> = (0..val.len()).collect();
    let score = |ib: &[usize]| -> Result<Matrix> {
        let (x, l) = val.gather(&idx, ib);
        critic.scores(params, &x, l.as_ref())
    };
    dv_objective(score(&idx)?.as_slice(), score(perm)?.as_slice())
}


/// A single replicate with an explicit seed.
pub fn train_mi_once(
    train: &MiSamples,
    val: &MiSamples,
    critic: &CriticSpec,
    cfg: &MineTrainConfig,
    seed: u64,
) -> Result<MiRun> {
    cfg.validate()?;
    train.validate()?;
    val.validate()?;
    train.check_critic(critic)?;
    val.check_critic(critic)?;
    if train.len() < 2 || val.len() < 2 {
        return Err(Error::structural(
            "train and validation splits need at least 2 rows",
        ));
    }
    let spec = &critic.mlp;
    let mut params = init_params(spec, derive_seed(seed, TAG_INIT))?;
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), params.len())?;
    let mut rng = Stream::new(seed, TAG_BATCHES);
    let val_perm = Stream::new(seed, TAG_EVAL).cyclic_permutation(val.len());
    let batch = cfg.batch_size.min(train.len());
    let mut log_ema: Option<f64> = None;
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        opt.set_epoch(epoch);
        let order = rng.permutation(train.len());
        for chunk in order.chunks(batch) {
            if chunk.len() < 2 {
                continue;
            }
            let b = chunk.len();
            let shift = rng.cyclic_permutation(b);
            let partners: Vec<usize> = shift.iter().map(|&k| chunk[k]).collect();
            // Joint rows first, marginal rows second, in one pass.
            let ia: Vec<usize> = chunk.iter().chain(chunk.iter()).copied().collect();
            let ib: Vec<usize> = chunk.iter().chain(partners.iter()).copied().collect();
            let (x, label) = train.gather(&ia, &ib);
            let (mut t, cache) = forward(spec, &params, &x, label.as_ref())?;
            let slope = critic.squash(&mut t);
            let scores = t.as_slice();
            let (tj, tm) = scores.split_at(b);
            dv_objective(tj, tm).map_err(|e| Error::Divergence {
                epoch,
                detail: e.to_string(),
            })?;
            let lme = log_mean_exp(tm);
            let denom = match cfg.ema_rate {
                Some(rate) => {
                    let next = match log_ema {
                        None => lme,
                        Some(prev) => log_add_exp((1.0 - rate).ln() + lme, rate.ln() + prev),
                    };
                    log_ema = Some(next);
                    next
                }
                None => lme,
            };
            // Minimise −DV: d/dT_j = −1/b, d/dT_m = exp(T_m − denom)/b.
            let mut g = Matrix::zeros(2 * b, 1);
            let gs = g.as_mut_slice();
            let inv = 1.0 / b as f64;
            for v in gs[..b].iter_mut() {
                *v = -inv;
            }
            for (v, &s) in gs[b..].iter_mut().zip(tm) {
                *v = (s - denom).exp() * inv;
            }
            if let Some(slope) = slope {
                for (v, d) in g.as_mut_slice().iter_mut().zip(slope) {
                    *v *= d;
                }
            }
            let grads = backward_params(spec, &params, &cache, &g)?;
            opt.step(params.as_mut_slice(), grads.as_slice())
                .map_err(|e| Error::Divergence {
                    epoch,
                    detail: e.to_string(),
                })?;
        }
        let v = evaluate_dv(critic, &params, val, &val_perm).map_err(|e| Error::Divergence {
            epoch,
            detail: format!("validation objective: {e}"),
        })?;
        curve.push(v);
    }
    let tail = &curve[curve.len() - cfg.window()..];
    let mut value = median(tail);
    if cfg.clamp_nonnegative {
        value = value.max(0.0);
    }
    Ok(MiRun {
        value,
        curve,
        params,
    })
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LrSchedule;

    #[test]
    fn dv_examples() {
        assert!(dv_objective(&[0.7; 4], &[0.7; 3]).unwrap().abs() < 1e-15);
        assert!((dv_objective(&[1.0; 3], &[0.0; 5]).unwrap() - 1.0).abs() < 1e-15);
        assert!((dv_objective(&[0.0, 2.0], &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            dv_objective(&[f64::NAN], &[0.0]),
            Err(Error::Numeric(_))
        ));
        assert!(dv_objective(&[], &[0.0]).is_err());
        // Max shift keeps huge scores finite.
        let v = dv_objective(&[1000.0], &[1000.0, 1000.0]).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn resampling_keeps_a_and_moves_every_b() {
        let a = Matrix::from_vec(5, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let b = a.clone();
        let (a2, b2) = marginal_resample(&a, &b, 4).unwrap();
        assert_eq!(a2, a);
        for i in 0..5 {
            assert_ne!(b2.get(i, 0), a.get(i, 0));
        }
        assert_eq!(marginal_resample(&a, &b, 4).unwrap(), (a2, b2));
        let same = Matrix::from_vec(3, 2, vec![1.0; 6]);
        assert_eq!(marginal_resample(&same, &same, 1).unwrap().1, same);
        let one = Matrix::zeros(1, 1);
        assert!(marginal_resample(&one, &one, 0).is_err());
    }

    #[test]
    fn critic_shape_checks() {
        assert!(CriticSpec::new(MlpSpec::elu(&[4, 3, 2])).is_err());
        let c = CriticSpec::labeled(4, &[8, 6, 5], 2, 3).unwrap();
        assert!(c.takes_label());
        let s = MiSamples::new(Matrix::zeros(4, 2), Matrix::zeros(4, 2), None).unwrap();
        assert!(s.check_critic(&c).is_err());
        let s = MiSamples::new(
            Matrix::zeros(4, 2),
            Matrix::zeros(4, 2),
            Some(Matrix::zeros(4, 3)),
        )
        .unwrap();
        assert!(s.check_critic(&c).is_ok());
        assert!(MiSamples::new(Matrix::zeros(4, 2), Matrix::zeros(3, 2), None).is_err());
        let wrong = CriticSpec::plain(5, &[4]).unwrap();
        let plain = MiSamples::new(Matrix::zeros(4, 2), Matrix::zeros(4, 2), None).unwrap();
        match plain.check_critic(&wrong) {
            Err(Error::Structural(msg)) => assert!(msg.contains('5') && msg.contains('2')),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn gaussian_pair(n: usize, rho: f64, seed: u64) -> MiSamples {
        let mut r = Stream::new(seed, 0);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            let u = r.normal();
            let v = r.normal();
            a.push(u);
            b.push(rho * u + (1.0 - rho * rho).sqrt() * v);
        }
        MiSamples::new(Matrix::from_vec(n, 1, a), Matrix::from_vec(n, 1, b), None).unwrap()
    }

    fn quick() -> MineTrainConfig {
        MineTrainConfig {
            epochs: 30,
            batch_size: 200,
            replicates: 1,
            optimizer: OptimizerConfig::adam(3e-3, 0.0),
            ..MineTrainConfig::default()
        }
    }

    #[test]
    fn correlated_gaussians_are_detected() {
        let train = gaussian_pair(2000, 0.9, 1);
        let val = gaussian_pair(1000, 0.9, 2);
        let critic = CriticSpec::plain(2, &[32, 16]).unwrap();
        let est = train_mi(&train, &val, &critic, &quick()).unwrap();
        let truth = -0.5 * (1.0f64 - 0.81).ln();
        assert!((est.value - truth).abs() < 0.2, "estimate {}", est.value);
        assert_eq!(est.curve.len(), 30);
    }

    #[test]
    fn output_bound_caps_the_objective() {
        // Near-deterministic pair: the true MI (~3.9 nats) exceeds 2c = 1.
        let train = gaussian_pair(2000, 0.9998, 11);
        let val = gaussian_pair(1000, 0.9998, 12);
        let critic = CriticSpec::plain(2, &[32, 16])
            .unwrap()
            .with_output_bound(Some(0.5))
            .unwrap();
        let est = train_mi(&train, &val, &critic, &quick()).unwrap();
        assert!(est.curve.iter().all(|&v| v <= 1.0 + 1e-12), "{:?}", est.curve);
        assert!(est.value > 0.5, "{}", est.value);
        let params = init_params(&critic.mlp, 3).unwrap();
        let t = critic.scores(&params, &Matrix::hcat(&[&train.a, &train.b]), None).unwrap();
        assert!(t.as_slice().iter().all(|v| v.abs() < 0.5));
        assert!(CriticSpec::plain(2, &[4]).unwrap().with_output_bound(Some(0.0)).is_err());
    }

    #[test]
    fn ema_and_clamp_paths_run() {
        let train = gaussian_pair(400, 0.0, 3);
        let val = gaussian_pair(200, 0.0, 4);
        let critic = CriticSpec::plain(2, &[8]).unwrap();
        let cfg = MineTrainConfig {
            epochs: 5,
            ema_rate: Some(0.99),
            clamp_nonnegative: true,
            replicates: 2,
            ..quick()
        };
        let est = train_mi(&train, &val, &critic, &cfg).unwrap();
        assert!(est.replicate_values.iter().all(|&v| v >= 0.0));
        assert!(est.std >= 0.0);
        assert_eq!(train_mi(&train, &val, &critic, &cfg).unwrap(), est);
    }

    #[test]
    fn divergence_carries_the_epoch() {
        let train = gaussian_pair(300, 0.99, 5);
        let val = gaussian_pair(100, 0.99, 6);
        let critic = CriticSpec::plain(2, &[16]).unwrap();
        let cfg = MineTrainConfig {
            epochs: 50,
            optimizer: OptimizerConfig {
                algorithm: crate::nn::Algorithm::Sgd,
                schedule: LrSchedule::constant(1e6),
                ..OptimizerConfig::adam(1.0, 0.0)
            },
            ..quick()
        };
        match train_mi(&train, &val, &critic, &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch < 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn labelled_critic_uses_the_label() {
        // a determines y; b is noise. I(a; b, y) = H(y) = ln 2.
        let n = 1200;
        let mut r = Stream::new(8, 0);
        let mut a = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let c = r.below(2);
            a.push(if c == 1 { 1.0 } else { -1.0 } + 0.1 * r.normal());
            y.push(c);
        }
        let b: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let label = crate::datagen::one_hot(&y, 2);
        let all = MiSamples::new(
            Matrix::from_vec(n, 1, a),
            Matrix::from_vec(n, 1, b),
            Some(label),
        )
        .unwrap();
        let idx_t: Vec<usize> = (0..800).collect();
        let idx_v: Vec<usize> = (800..n).collect();
        let split = |idx: &[usize]| MiSamples {
            a: all.a.select_rows(idx),
            b: all.b.select_rows(idx),
            label: all.label.as_ref().map(|l| l.select_rows(idx)),
        };
        let critic = CriticSpec::labeled(2, &[16, 8], 1, 2).unwrap();
        let cfg = MineTrainConfig {
            epochs: 60,
            batch_size: 100,
            ..quick()
        };
        let est = train_mi(&split(&idx_t), &split(&idx_v), &critic, &cfg).unwrap();
        assert!(
            (est.value - std::f64::consts::LN_2).abs() < 0.15,
            "{}",
            est.value
        );
    }
}
