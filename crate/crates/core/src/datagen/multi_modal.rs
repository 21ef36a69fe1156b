use serde::{Deserialize, Serialize};

use super::{
    anchor_retries, binary_quota, split_dataset, uniform_projection, validate_common,
    GenerationTrace, GeneratorConfig, MultiModalDataset, NamedMatrix, Provenance, Split,
    DEFAULT_MAX_ATTEMPTS, STREAM_PROJECTIONS, STREAM_SAMPLES,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, normalize, Matrix};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// `(x_1 + x_2)·(x_3 + x_4)`; needs `m = 4` and `d1 = d`.
    PairedSums,
    /// Supplied at generation time through [`gen_multi_modal_with_rule`].
    Custom { name: String },
}

/// `m` views anchored on `x_1`: every other latent is pulled towards the
/// anchor by `alpha`, projected by `P_i`, and all are emitted through `Q_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiModalConfig {
    pub m: usize,
    pub d: usize,
    pub d1: usize,
    pub delta: f64,
    pub alpha: f64,
    pub n: usize,
    pub train_frac: f64,
    pub seed: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    #[serde(default = "default_rule")]
    pub label_rule: LabelRule,
}

fn default_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

fn default_rule() -> LabelRule {
    LabelRule::PairedSums
}

impl Default for MultiModalConfig {
    fn default() -> Self {
        MultiModalConfig {
            m: 4,
            d: 50,
            d1: 50,
            delta: 0.25,
            alpha: 0.0,
            n: 10_000,
            train_frac: 0.8,
            seed: 0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            label_rule: LabelRule::PairedSums,
        }
    }
}

impl MultiModalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::structural(format!(
                "m = {} must be at least 2",
                self.m
            )));
        }
        if self.d == 0 || self.d1 == 0 || self.max_attempts == 0 {
            return Err(Error::structural(
                "dimensions and max_attempts must be positive",
            ));
        }
        validate_common(self.alpha, self.delta, self.n, self.train_frac)
    }
}

/// The default label score `(x_1 + x_2)·(x_3 + x_4)`.
pub fn paired_sum_rule(latents: &[Vec<f64>]) -> f64 {
    let a: Vec<f64> = latents[0]
        .iter()
        .zip(&latents[1])
        .map(|(p, q)| p + q)
        .collect();
    let b: Vec<f64> = latents[2]
        .iter()
        .zip(&latents[3])
        .map(|(p, q)| p + q)
        .collect();
    dot(&a, &b)
}

pub fn gen_multi_modal(cfg: &MultiModalConfig) -> Result<(MultiModalDataset, MultiModalDataset)> {
    let (train, val, _) = gen_multi_modal_traced(cfg)?;
    Ok((train, val))
}

/// [`gen_multi_modal`] with the default rule, also returning latents.
pub fn gen_multi_modal_traced(
    cfg: &MultiModalConfig,
) -> Result<(MultiModalDataset, MultiModalDataset, GenerationTrace)> {
    match &cfg.label_rule {
        LabelRule::PairedSums => {
            if cfg.m != 4 {
                return Err(Error::structural(format!(
                    "the paired-sum label rule needs m = 4, got m = {}",
                    cfg.m
                )));
            }
            if cfg.d1 != cfg.d {
                return Err(Error::structural(format!(
                    "the paired-sum label rule needs d1 = d, got d1 = {}, d = {}",
                    cfg.d1, cfg.d
                )));
            }
            generate(cfg, &paired_sum_rule)
        }
        LabelRule::Custom { name } => Err(Error::structural(format!(
            "custom label rule {name:?} must be supplied through gen_multi_modal_with_rule"
        ))),
    }
}

/// Generation with a caller-supplied label score over the unit latents
/// (`x_1` has width `d`, the others `d1`). Label is `score > 0`, rejection
/// when `|score| <= delta`.
pub fn gen_multi_modal_with_rule(
    cfg: &MultiModalConfig,
    rule: &dyn Fn(&[Vec<f64>]) -> f64,
) -> Result<(MultiModalDataset, MultiModalDataset, GenerationTrace)> {
    generate(cfg, rule)
}

fn generate(
    cfg: &MultiModalConfig,
    rule: &dyn Fn(&[Vec<f64>]) -> f64,
) -> Result<(MultiModalDataset, MultiModalDataset, GenerationTrace)> {
    cfg.validate()?;
    let (m, d, d1) = (cfg.m, cfg.d, cfg.d1);
    let mut proj_rng = Stream::new(cfg.seed, STREAM_PROJECTIONS);
    // P_i for i >= 2 (the anchor is not projected), then Q_i for every view.
    let p: Vec<Matrix> = (1..m)
        .map(|_| uniform_projection(&mut proj_rng, d1, d))
        .collect();
    let q: Vec<Matrix> = (0..m)
        .map(|i| uniform_projection(&mut proj_rng, d, if i == 0 { d } else { d1 }))
        .collect();

    let mut rng = Stream::new(cfg.seed, STREAM_SAMPLES);
    let quota = binary_quota(cfg.n);
    let mut counts = [0usize; 2];
    let mut trace = GenerationTrace::default();
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.n * d); m];
    let mut labels = Vec::with_capacity(cfg.n);
    let anchor_budget = cfg.max_attempts.saturating_mul(cfg.n).max(cfg.n * 16);

    while counts[0] < quota[0] || counts[1] < quota[1] {
        if trace.stats.anchors_drawn >= anchor_budget {
            return Err(Error::Generation(format!(
                "class quotas not met after {} anchor draws (delta = {})",
                trace.stats.anchors_drawn, cfg.delta
            )));
        }
        let mut attempts = 0;
        let (latents, score) = 'anchor: loop {
            trace.stats.anchors_drawn += 1;
            let x1 = rng.normal_vec(d);
            let mut x1_hat = x1.clone();
            normalize(&mut x1_hat);
            loop {
                let mut latents = Vec::with_capacity(m);
                latents.push(x1_hat.clone());
                for p_i in &p {
                    let fresh = rng.normal_vec(d);
                    let mixed: Vec<f64> = fresh
                        .iter()
                        .zip(&x1)
                        .map(|(xi, a)| (1.0 - cfg.alpha) * xi + cfg.alpha * a)
                        .collect();
                    let mut xi = p_i.matvec(&mixed);
                    normalize(&mut xi);
                    latents.push(xi);
                }
                let s = rule(&latents);
                if !s.is_finite() {
                    return Err(Error::Generation(
                        "label rule returned a non-finite score".into(),
                    ));
                }
                if s.abs() > cfg.delta {
                    break 'anchor (latents, s);
                }
                trace.stats.rejections += 1;
                attempts += 1;
                if attempts >= cfg.max_attempts {
                    return Err(Error::Generation(format!(
                        "rejection budget of {} draws exhausted for one sample (delta = {})",
                        cfg.max_attempts, cfg.delta
                    )));
                }
                if attempts % anchor_retries(cfg.alpha) == 0 {
                    continue 'anchor;
                }
            }
        };
        let y = usize::from(score > 0.0);
        if counts[y] >= quota[y] {
            trace.stats.surplus_discarded += 1;
            continue;
        }
        counts[y] += 1;
        for (i, lat) in latents.iter().enumerate() {
            rows[i].extend(q[i].matvec(lat));
        }
        labels.push(y);
        trace.latents.push(latents);
        trace.scores.push(score);
    }

    let n = labels.len();
    let mut projections = Vec::new();
    for (i, p_i) in p.into_iter().enumerate() {
        projections.push(NamedMatrix {
            name: format!("P_{}", i + 2),
            matrix: p_i,
        });
    }
    for (i, q_i) in q.into_iter().enumerate() {
        projections.push(NamedMatrix {
            name: format!("Q_{}", i + 1),
            matrix: q_i,
        });
    }
    let all = MultiModalDataset::new(
        rows.into_iter()
            .map(|r| Matrix::from_vec(n, d, r))
            .collect(),
        labels,
        2,
        Split::All,
        Provenance {
            generator: GeneratorConfig::MultiModal(cfg.clone()),
            projections,
        },
    )?;
    let (train, val) = split_dataset(all, cfg.train_frac, cfg.seed)?;
    Ok((train, val, trace))
}
