use serde::{Deserialize, Serialize};

use super::{split_dataset, GeneratorConfig, MultiModalDataset, Provenance, Split, STREAM_SAMPLES};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::oracle::DiscreteJoint;
use crate::rng::Stream;

const STREAM_POOL_A: u64 = 11;
const STREAM_POOL_B: u64 = 12;
const STREAM_CENTERS: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemixConfig {
    /// Standard deviation of the class offset before rounding.
    pub sigma: f64,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for RemixConfig {
    fn default() -> Self {
        RemixConfig {
            sigma: 1.0,
            num_classes: 10,
            seed: 0,
        }
    }
}

impl RemixConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::structural(format!(
                "num_classes = {} must be at least 2",
                self.num_classes
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::structural(format!(
                "sigma = {} must be finite and >= 0",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Feature rows with a class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledPool {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::structural(format!(
                "pool has {} rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(LabeledPool { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Result of re-pairing: row `i` pairs `pool_a[i]` (class `x[i]`) with
/// `pool_b[partner[i]]` (class `y[i]`) under label `t[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RemixOutput {
    pub a: Matrix,
    pub b: Matrix,
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub t: Vec<usize>,
    pub partner: Vec<usize>,
}

/// `round((x + y) / 2)` with halves rounded away from zero.
pub(crate) fn remix_label(x: usize, y: usize) -> usize {
    ((x + y) as f64 / 2.0).round() as usize
}

/// Offset class `y = (x + round(sigma·N(0,1))) mod K`.
pub(crate) fn offset_class(x: usize, delta: i64, k: usize) -> usize {
    (x as i64 + delta).rem_euclid(k as i64) as usize
}

pub fn remix_pairs(
    pool_a: &LabeledPool,
    pool_b: &LabeledPool,
    cfg: &RemixConfig,
) -> Result<RemixOutput> {
    cfg.validate()?;
    let k = cfg.num_classes;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in pool_b.labels.iter().enumerate() {
        if l >= k {
            return Err(Error::structural(format!(
                "pool_b label {l} outside [0, {k})"
            )));
        }
        by_class[l].push(i);
    }
    if let Some(c) = by_class.iter().position(|v| v.is_empty()) {
        return Err(Error::Generation(format!(
            "pool_b has no items of class {c}"
        )));
    }
    if let Some(&l) = pool_a.labels.iter().find(|&&l| l >= k) {
        return Err(Error::structural(format!(
            "pool_a label {l} outside [0, {k})"
        )));
    }

    let mut rng = Stream::new(cfg.seed, STREAM_SAMPLES);
    let n = pool_a.len();
    let (mut x, mut y, mut t, mut partner) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for &xi in &pool_a.labels {
        let delta = if cfg.sigma == 0.0 {
            0
        } else {
            (cfg.sigma * rng.normal()).round() as i64
        };
        let yi = offset_class(xi, delta, k);
        let candidates = &by_class[yi];
        let j = candidates[rng.below(candidates.len())];
        x.push(xi);
        y.push(yi);
        t.push(remix_label(xi, yi));
        partner.push(j);
    }
    Ok(RemixOutput {
        a: pool_a.features.clone(),
        b: pool_b.features.select_rows(&partner),
        x,
        y,
        t,
        partner,
    })
}

/// Standard normal CDF.
fn phi(v: f64) -> f64 {
    0.5 * (1.0 + libm::erf(v / std::f64::consts::SQRT_2))
}

/// Exact law of `(x, y, t)` for a uniform class `x` under [`remix_pairs`], as
/// a discrete joint with `X = x`, `Z = y`, `Y = t`. Rounded-Gaussian buckets
/// are summed out to `|δ| ≤ 12σ + K`.
pub fn remix_joint(num_classes: usize, sigma: f64) -> Result<DiscreteJoint> {
    RemixConfig {
        sigma,
        num_classes,
        seed: 0,
    }
    .validate()?;
    let k = num_classes;
    // P(y | x) depends only on (y - x) mod K.
    let mut offset = vec![0.0; k];
    if sigma == 0.0 {
        offset[0] = 1.0;
    } else {
        let reach = (12.0 * sigma).ceil() as i64 + k as i64;
        for delta in -reach..=reach {
            let d = delta as f64;
            let mass = phi((d + 0.5) / sigma) - phi((d - 0.5) / sigma);
            offset[offset_class(0, delta, k)] += mass;
        }
    }
    let mut probs = vec![0.0; k * k * k];
    for xi in 0..k {
        for (shift, &m) in offset.iter().enumerate() {
            let yi = (xi + shift) % k;
            let ti = remix_label(xi, yi);
            probs[(xi * k + yi) * k + ti] += m / k as f64;
        }
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    DiscreteJoint::with_cap(k, k, k, probs, k.max(16))
}

/// Two pools of Gaussian class clusters with separate fixed centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPoolConfig {
    pub num_classes: usize,
    /// Items in pool A; classes drawn uniformly.
    pub n_a: usize,
    /// Items per class in pool B (balanced).
    pub per_class_b: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    /// Distance scale of the class centres relative to unit within-class noise.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticPoolConfig {
    fn default() -> Self {
        SyntheticPoolConfig {
            num_classes: 10,
            n_a: 4000,
            per_class_b: 100,
            dim_a: 20,
            dim_b: 20,
            separation: 4.0,
            seed: 0,
        }
    }
}

fn centres(rng: &mut Stream, k: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| rng.normal_vec(dim).into_iter().map(|v| v * scale).collect())
        .collect()
}

fn cluster_rows(rng: &mut Stream, centres: &[Vec<f64>], labels: &[usize]) -> Matrix {
    let dim = centres[0].len();
    let mut data = Vec::with_capacity(labels.len() * dim);
    for &l in labels {
        for c in &centres[l] {
            data.push(c + rng.normal());
        }
    }
    Matrix::from_vec(labels.len(), dim, data)
}

/// Builds `(pool_a, pool_b)`.
impl SyntheticPoolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2
            || self.n_a == 0
            || self.per_class_b == 0
            || self.dim_a == 0
            || self.dim_b == 0
        {
            return Err(Error::structural(
                "pool sizes, dimensions and num_classes >= 2 required",
            ));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::structural("separation must be finite and >= 0"));
        }
        Ok(())
    }
}

pub fn synthetic_pools(cfg: &SyntheticPoolConfig) -> Result<(LabeledPool, LabeledPool)> {
    cfg.validate()?;
    let k = cfg.num_classes;
    // Centre norms ~ separation, so scale per coordinate by 1/sqrt(dim).
    let mut crng = Stream::new(cfg.seed, STREAM_CENTERS);
    let ca = centres(
        &mut crng,
        k,
        cfg.dim_a,
        cfg.separation / (cfg.dim_a as f64).sqrt(),
    );
    let cb = centres(
        &mut crng,
        k,
        cfg.dim_b,
        cfg.separation / (cfg.dim_b as f64).sqrt(),
    );

    let mut ra = Stream::new(cfg.seed, STREAM_POOL_A);
    let la: Vec<usize> = (0..cfg.n_a).map(|_| ra.below(k)).collect();
    let fa = cluster_rows(&mut ra, &ca, &la);
    let mut rb = Stream::new(cfg.seed, STREAM_POOL_B);
    let lb: Vec<usize> = (0..k * cfg.per_class_b)
        .map(|i| i / cfg.per_class_b)
        .collect();
    let fb = cluster_rows(&mut rb, &cb, &lb);
    Ok((LabeledPool::new(fa, la)?, LabeledPool::new(fb, lb)?))
}

/// Synthetic pools + remix, emitted as a two-modality dataset labelled by `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemixDatasetConfig {
    pub pools: SyntheticPoolConfig,
    pub sigma: f64,
    pub train_frac: f64,
    pub seed: u64,
}

impl Default for RemixDatasetConfig {
    fn default() -> Self {
        RemixDatasetConfig {
            pools: SyntheticPoolConfig::default(),
            sigma: 1.0,
            train_frac: 0.8,
            seed: 0,
        }
    }
}

impl RemixDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::structural(format!(
                "train_frac = {} outside (0, 1)",
                self.train_frac
            )));
        }
        self.pools.validate()?;
        RemixConfig {
            sigma: self.sigma,
            num_classes: self.pools.num_classes,
            seed: self.seed,
        }
        .validate()
    }
}

pub fn gen_remix(cfg: &RemixDatasetConfig) -> Result<(MultiModalDataset, MultiModalDataset)> {
    cfg.validate()?;
    let (a, b) = synthetic_pools(&cfg.pools)?;
    let out = remix_pairs(
        &a,
        &b,
        &RemixConfig {
            sigma: cfg.sigma,
            num_classes: cfg.pools.num_classes,
            seed: cfg.seed,
        },
    )?;
    let all = MultiModalDataset::new(
        vec![out.a, out.b],
        out.t,
        cfg.pools.num_classes,
        Split::All,
        Provenance {
            generator: GeneratorConfig::Remix(cfg.clone()),
            projections: vec![],
        },
    )?;
    split_dataset(all, cfg.train_frac, cfg.seed)
}
