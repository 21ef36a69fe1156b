//! Seeded synthetic multimodal datasets.
//!
//! Three families are provided:
//!
//! - [`gen_two_modal`]: two projected views of unit latents `x`, `z` whose
//!   overlap is controlled by `alpha`; the label is the sign of `x·z`.
//! - [`gen_multi_modal`]: `m` views anchored on `x_1`, labelled by the sign
//!   of `(x_1 + x_2)·(x_3 + x_4)`.
//! - [`remix_pairs`]: re-pairs two labelled pools so that each partner's class
//!   is offset by a rounded Gaussian; the new label is the rounded class mean.
//!
//! Every generator draws projections, samples and the train/val split from
//! separate seeded streams, so the projections depend only on the seed and
//! the dimensions.

mod io;
mod multi_modal;
mod remix;
mod two_modal;
mod xor;

pub use io::{load_dataset, save_dataset, DATASET_FORMAT};
pub use multi_modal::{
    gen_multi_modal, gen_multi_modal_traced, gen_multi_modal_with_rule, paired_sum_rule,
    MultiModalConfig,
};
pub use remix::{
    gen_remix, remix_joint, remix_pairs, synthetic_pools, LabeledPool, RemixConfig,
    RemixDatasetConfig, RemixOutput, SyntheticPoolConfig,
};
pub use two_modal::{gen_two_modal, gen_two_modal_traced, TwoModalConfig};
pub use xor::{gen_xor, XorConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Stream;

/// Seed-stream ids shared by the generators.
pub(crate) const STREAM_PROJECTIONS: u64 = 1;
pub(crate) const STREAM_SAMPLES: u64 = 2;
pub(crate) const STREAM_SPLIT: u64 = 3;

/// Default cap on consecutive rejections for one anchor draw.
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    All,
}

/// The configuration a dataset was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorConfig {
    TwoModal(TwoModalConfig),
    MultiModal(MultiModalConfig),
    Remix(RemixDatasetConfig),
    Xor(XorConfig),
    /// Data that did not come from a built-in generator, or was altered after
    /// generation (e.g. shuffled labels).
    External {
        description: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub name: String,
    pub matrix: Matrix,
}

/// Where a dataset came from: its generating configuration and the fixed
/// projection matrices that embed its latents.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub generator: GeneratorConfig,
    pub projections: Vec<NamedMatrix>,
}

impl Provenance {
    pub fn external(description: impl Into<String>) -> Self {
        Provenance {
            generator: GeneratorConfig::External {
                description: description.into(),
            },
            projections: vec![],
        }
    }

    pub fn projection(&self, name: &str) -> Option<&Matrix> {
        self.projections
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.matrix)
    }
}

/// `m` aligned modality matrices (one row per example) and integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalDataset {
    modalities: Vec<Matrix>,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
    provenance: Provenance,
}

impl MultiModalDataset {
    pub fn new(
        modalities: Vec<Matrix>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
        provenance: Provenance,
    ) -> Result<Self> {
        let ds = MultiModalDataset {
            modalities,
            labels,
            num_classes,
            split,
            provenance,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::structural("dataset has no modalities"));
        }
        if self.num_classes == 0 || self.num_classes > u16::MAX as usize + 1 {
            return Err(Error::structural(format!(
                "num_classes {} outside 1..=65536",
                self.num_classes
            )));
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if m.rows() != self.labels.len() {
                return Err(Error::structural(format!(
                    "modality {i} has {} rows for {} labels",
                    m.rows(),
                    self.labels.len()
                )));
            }
            if !m.is_finite() {
                return Err(Error::structural(format!(
                    "modality {i} has non-finite entries"
                )));
            }
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::structural(format!(
                "label {l} outside [0, {})",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn modality(&self, i: usize) -> &Matrix {
        &self.modalities[i]
    }

    pub fn modalities(&self) -> &[Matrix] {
        &self.modalities
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.cols()).collect()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Column-wise concatenation of the listed modalities.
    pub fn concat(&self, which: &[usize]) -> Matrix {
        let parts: Vec<&Matrix> = which.iter().map(|&i| &self.modalities[i]).collect();
        if parts.is_empty() {
            return Matrix::zeros(self.len(), 0);
        }
        Matrix::hcat(&parts)
    }

    /// One-hot label matrix (`len × num_classes`).
    pub fn one_hot_labels(&self) -> Matrix {
        one_hot(&self.labels, self.num_classes)
    }

    pub fn select(&self, idx: &[usize]) -> MultiModalDataset {
        MultiModalDataset {
            modalities: self.modalities.iter().map(|m| m.select_rows(idx)).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split: self.split,
            provenance: self.provenance.clone(),
        }
    }

    /// Same features with labels permuted by a seeded shuffle; provenance
    /// becomes external since no generator reproduces it.
    pub fn with_shuffled_labels(&self, seed: u64) -> MultiModalDataset {
        let mut labels = self.labels.clone();
        Stream::new(seed, 0x5eed).shuffle(&mut labels);
        MultiModalDataset {
            labels,
            provenance: Provenance::external("labels shuffled after generation"),
            ..self.clone()
        }
    }

    /// Appends a modality (e.g. a noise channel) aligned with the rows.
    pub fn with_extra_modality(
        &self,
        extra: Matrix,
        description: &str,
    ) -> Result<MultiModalDataset> {
        let mut modalities = self.modalities.clone();
        modalities.push(extra);
        MultiModalDataset::new(
            modalities,
            self.labels.clone(),
            self.num_classes,
            self.split,
            Provenance::external(description),
        )
    }

    /// Keeps only the listed modalities, in that order.
    pub fn with_modalities(&self, which: &[usize]) -> MultiModalDataset {
        MultiModalDataset {
            modalities: which.iter().map(|&i| self.modalities[i].clone()).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn set_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

pub fn one_hot(labels: &[usize], num_classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        m.set(i, l, 1.0);
    }
    m
}

/// Seeded shuffle of all rows, then the first `floor(n * train_frac)` rows
/// become the training split.
pub fn split_dataset(
    all: MultiModalDataset,
    train_frac: f64,
    seed: u64,
) -> Result<(MultiModalDataset, MultiModalDataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::structural(format!(
            "train_frac {train_frac} outside (0, 1)"
        )));
    }
    let n = all.len();
    let perm = Stream::new(seed, STREAM_SPLIT).permutation(n);
    let n_train = (n as f64 * train_frac).floor() as usize;
    let train = all.select(&perm[..n_train]).set_split(Split::Train);
    let val = all.select(&perm[n_train..]).set_split(Split::Val);
    Ok((train, val))
}

/// Entries drawn from U(-0.5, 0.5).
pub(crate) fn uniform_projection(rng: &mut Stream, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.uniform_range(-0.5, 0.5))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Non-anchor redraws tried before the anchor itself is redrawn. At full
/// overlap the non-anchor latents are a function of the anchor, so retrying
/// them is pointless.
pub(crate) fn anchor_retries(alpha: f64) -> usize {
    if alpha >= 1.0 {
        1
    } else {
        64
    }
}

/// Per-class quotas for exact balance: class 0 gets `floor(n/2)`, class 1
/// gets the rest.
pub(crate) fn binary_quota(n: usize) -> [usize; 2] {
    [n / 2, n - n / 2]
}

/// Counters reported by the rejection-sampling generators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    /// Candidate draws rejected by the margin rule.
    pub rejections: usize,
    /// Accepted samples discarded because their class quota was full.
    pub surplus_discarded: usize,
    pub anchors_drawn: usize,
}

/// Internal latents of every emitted sample, in generation order.
#[derive(Debug, Clone, Default)]
pub struct GenerationTrace {
    /// Per sample, the unit latent of every modality before output projection.
    pub latents: Vec<Vec<Vec<f64>>>,
    /// Per sample, the label-defining score (`x·z` or the custom rule).
    pub scores: Vec<f64>,
    pub stats: GenerationStats,
}

pub(crate) fn validate_common(alpha: f64, delta: f64, n: usize, train_frac: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::structural(format!("alpha = {alpha} outside [0, 1]")));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::structural(format!("delta = {delta} outside [0, 1)")));
    }
    if n < 2 {
        return Err(Error::structural(format!("n = {n} must be at least 2")));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::structural(format!(
            "train_frac = {train_frac} outside (0, 1)"
        )));
    }
    Ok(())
}

impl GeneratorConfig {
    /// Checks the configuration without generating anything.
    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorConfig::TwoModal(c) => c.validate(),
            GeneratorConfig::MultiModal(c) => c.validate(),
            GeneratorConfig::Remix(c) => c.validate(),
            GeneratorConfig::Xor(c) => c.validate(),
            GeneratorConfig::External { .. } => Ok(()),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            GeneratorConfig::TwoModal(c) => Some(c.seed),
            GeneratorConfig::MultiModal(c) => Some(c.seed),
            GeneratorConfig::Remix(c) => Some(c.seed),
            GeneratorConfig::Xor(c) => Some(c.seed),
            GeneratorConfig::External { .. } => None,
        }
    }
}

/// Regenerates a (train, val) pair from a recorded generator config.
pub fn regenerate(cfg: &GeneratorConfig) -> Result<(MultiModalDataset, MultiModalDataset)> {
    match cfg {
        GeneratorConfig::TwoModal(c) => gen_two_modal(c),
        GeneratorConfig::MultiModal(c) => gen_multi_modal(c),
        GeneratorConfig::Remix(c) => gen_remix(c),
        GeneratorConfig::Xor(c) => gen_xor(c),
        GeneratorConfig::External { description } => Err(Error::structural(format!(
            "dataset is not reproducible from a generator: {description}"
        ))),
    }
}
