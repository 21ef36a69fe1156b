use serde::{Deserialize, Serialize};

use super::{
    binary_quota, split_dataset, GeneratorConfig, MultiModalDataset, Provenance, Split,
    STREAM_SAMPLES,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::oracle::DiscreteJoint;
use crate::rng::Stream;

/// Two independent fair bits, each embedded as `±1/sqrt(dim)` per coordinate
/// plus Gaussian noise; the label is their XOR. Either modality alone carries
/// no information about the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorConfig {
    pub dim: usize,
    /// Noise standard deviation along the signal direction (per coordinate
    /// it is `noise / sqrt(dim)`).
    pub noise: f64,
    pub n: usize,
    pub train_frac: f64,
    pub seed: u64,
}

impl Default for XorConfig {
    fn default() -> Self {
        XorConfig {
            dim: 20,
            noise: 0.2,
            n: 4000,
            train_frac: 0.8,
            seed: 0,
        }
    }
}

impl XorConfig {
    /// The generating law of `(b_1, b_2, label)`.
    pub fn bit_joint(&self) -> DiscreteJoint {
        DiscreteJoint::from_fn(2, 2, 2, |x, z, y| ((x ^ z) == y) as u8 as f64).expect("valid joint")
    }
}

impl XorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n < 2 {
            return Err(Error::structural("dim must be positive and n at least 2"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::structural(format!(
                "noise = {} must be finite and >= 0",
                self.noise
            )));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::structural(format!(
                "train_frac = {} outside (0, 1)",
                self.train_frac
            )));
        }
        Ok(())
    }
}

pub fn gen_xor(cfg: &XorConfig) -> Result<(MultiModalDataset, MultiModalDataset)> {
    cfg.validate()?;
    let mut rng = Stream::new(cfg.seed, STREAM_SAMPLES);
    let quota = binary_quota(cfg.n);
    let mut counts = [0usize; 2];
    let scale = 1.0 / (cfg.dim as f64).sqrt();
    let mut rows = [
        Vec::with_capacity(cfg.n * cfg.dim),
        Vec::with_capacity(cfg.n * cfg.dim),
    ];
    let mut labels = Vec::with_capacity(cfg.n);
    while labels.len() < cfg.n {
        let bits = [rng.below(2), rng.below(2)];
        let y = bits[0] ^ bits[1];
        if counts[y] >= quota[y] {
            continue;
        }
        counts[y] += 1;
        for (m, &b) in bits.iter().enumerate() {
            let sign = if b == 1 { 1.0 } else { -1.0 };
            for _ in 0..cfg.dim {
                rows[m].push(scale * (sign + cfg.noise * rng.normal()));
            }
        }
        labels.push(y);
    }
    let [rx, rz] = rows;
    let all = MultiModalDataset::new(
        vec![
            Matrix::from_vec(cfg.n, cfg.dim, rx),
            Matrix::from_vec(cfg.n, cfg.dim, rz),
        ],
        labels,
        2,
        Split::All,
        Provenance {
            generator: GeneratorConfig::Xor(cfg.clone()),
            projections: vec![],
        },
    )?;
    split_dataset(all, cfg.train_frac, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{bayes_error_classification, Modality};

    #[test]
    fn single_modality_is_uninformative() {
        let j = XorConfig::default().bit_joint();
        assert!(bayes_error_classification(&j, None).abs() < 1e-12);
        assert!((bayes_error_classification(&j, Some(Modality::Z)) - 0.5).abs() < 1e-12);
        assert!((bayes_error_classification(&j, Some(Modality::X)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bits_are_recoverable_from_the_sign_of_the_row_sum() {
        let cfg = XorConfig {
            n: 200,
            ..XorConfig::default()
        };
        let (train, _) = gen_xor(&cfg).unwrap();
        let bit =
            |m: usize, i: usize| usize::from(train.modality(m).row(i).iter().sum::<f64>() > 0.0);
        let agree = (0..train.len())
            .filter(|&i| bit(0, i) ^ bit(1, i) == train.labels()[i])
            .count();
        assert!(agree as f64 / train.len() as f64 > 0.95);
        let h = train.class_histogram();
        assert!(h[0] > 0 && h[1] > 0);
    }
}
