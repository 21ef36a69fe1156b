use serde::{Deserialize, Serialize};

use super::{
    anchor_retries, binary_quota, split_dataset, uniform_projection, validate_common,
    GenerationTrace, GeneratorConfig, MultiModalDataset, NamedMatrix, Provenance, Split,
    DEFAULT_MAX_ATTEMPTS, STREAM_PROJECTIONS, STREAM_SAMPLES,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, normalize, Matrix};
use crate::rng::Stream;

/// Two views `(P_X x, P_Z z)` of unit latents with overlap `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoModalConfig {
    /// Latent dimension.
    pub d: usize,
    /// Output dimension of modality X.
    pub d1: usize,
    /// Output dimension of modality Z.
    pub d2: usize,
    /// Rejection margin: samples with `|x·z| <= delta` are redrawn.
    pub delta: f64,
    pub alpha: f64,
    pub n: usize,
    pub train_frac: f64,
    pub seed: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

impl Default for TwoModalConfig {
    fn default() -> Self {
        TwoModalConfig {
            d: 50,
            d1: 200,
            d2: 100,
            delta: 0.25,
            alpha: 0.0,
            n: 5000,
            train_frac: 0.8,
            seed: 0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl TwoModalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(Error::structural("dimensions must be positive"));
        }
        if self.max_attempts == 0 {
            return Err(Error::structural("max_attempts must be positive"));
        }
        validate_common(self.alpha, self.delta, self.n, self.train_frac)
    }
}

pub fn gen_two_modal(cfg: &TwoModalConfig) -> Result<(MultiModalDataset, MultiModalDataset)> {
    let (train, val, _) = gen_two_modal_traced(cfg)?;
    Ok((train, val))
}

/// [`gen_two_modal`] that also returns the unit latents `(x, z)` of every
/// emitted sample and the rejection counters.
pub fn gen_two_modal_traced(
    cfg: &TwoModalConfig,
) -> Result<(MultiModalDataset, MultiModalDataset, GenerationTrace)> {
    cfg.validate()?;
    let d = cfg.d;
    let mut proj_rng = Stream::new(cfg.seed, STREAM_PROJECTIONS);
    let p_x = uniform_projection(&mut proj_rng, cfg.d1, d);
    let p_z = uniform_projection(&mut proj_rng, cfg.d2, d);
    let p = uniform_projection(&mut proj_rng, d, d);

    let mut rng = Stream::new(cfg.seed, STREAM_SAMPLES);
    let quota = binary_quota(cfg.n);
    let mut counts = [0usize; 2];
    let mut trace = GenerationTrace::default();
    let mut x_rows = Vec::with_capacity(cfg.n * cfg.d1);
    let mut z_rows = Vec::with_capacity(cfg.n * cfg.d2);
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
        let (x_hat, z_hat, score) = 'anchor: loop {
            trace.stats.anchors_drawn += 1;
            let x = rng.normal_vec(d);
            let mut x_hat = x.clone();
            normalize(&mut x_hat);
            loop {
                let fresh = rng.normal_vec(d);
                let mixed: Vec<f64> = fresh
                    .iter()
                    .zip(&x)
                    .map(|(z, x)| (1.0 - cfg.alpha) * z + cfg.alpha * x)
                    .collect();
                let mut z = p.matvec(&mixed);
                normalize(&mut z);
                let s = dot(&x_hat, &z);
                if s.abs() > cfg.delta {
                    break 'anchor (x_hat, z, s);
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
        x_rows.extend(p_x.matvec(&x_hat));
        z_rows.extend(p_z.matvec(&z_hat));
        labels.push(y);
        trace.latents.push(vec![x_hat, z_hat]);
        trace.scores.push(score);
    }

    let n = labels.len();
    let provenance = Provenance {
        generator: GeneratorConfig::TwoModal(cfg.clone()),
        projections: vec![
            NamedMatrix {
                name: "P_X".into(),
                matrix: p_x,
            },
            NamedMatrix {
                name: "P_Z".into(),
                matrix: p_z,
            },
            NamedMatrix {
                name: "P".into(),
                matrix: p,
            },
        ],
    };
    let all = MultiModalDataset::new(
        vec![
            Matrix::from_vec(n, cfg.d1, x_rows),
            Matrix::from_vec(n, cfg.d2, z_rows),
        ],
        labels,
        2,
        Split::All,
        provenance,
    )?;
    let (train, val) = split_dataset(all, cfg.train_frac, cfg.seed)?;
    Ok((train, val, trace))
}
