//! Complementary information `Γ_{S1} = I(S1; Y, S2) − I(S1; S2)` and the
//! normalised complementarity metrics, estimated from data or computed
//! exactly on discrete joints.

use serde::{Deserialize, Serialize};

use crate::datagen::MultiModalDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mine::{train_mi, CriticSpec, MiEstimate, MiSamples, MineTrainConfig};
use crate::oracle::{
    complementary_info, interaction_info, mutual_info, DiscreteJoint, Modality, Vars,
};
use crate::stats::{mean, std_dev};

/// Normaliser estimates below this are treated as zero and the metric is
/// reported as undefined.
pub const NORMALIZER_FLOOR: f64 = 0.02;

/// A proper nonempty subset `S1` of the modalities; `S2` is the complement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub s1: Vec<usize>,
}

impl SubsetSpec {
    pub fn new(mut s1: Vec<usize>, num_modalities: usize) -> Result<Self> {
        s1.sort_unstable();
        s1.dedup();
        if s1.is_empty() || s1.len() >= num_modalities {
            return Err(Error::structural(format!(
                "subset {s1:?} must be a proper nonempty subset of {num_modalities} modalities"
            )));
        }
        if let Some(&i) = s1.iter().find(|&&i| i >= num_modalities) {
            return Err(Error::structural(format!(
                "modality index {i} out of range for {num_modalities} modalities"
            )));
        }
        Ok(SubsetSpec { s1 })
    }

    pub fn s2(&self, num_modalities: usize) -> Vec<usize> {
        (0..num_modalities)
            .filter(|i| !self.s1.contains(i))
            .collect()
    }

    fn check(&self, num_modalities: usize) -> Result<()> {
        SubsetSpec::new(self.s1.clone(), num_modalities).map(|_| ())
    }
}

/// Hidden-layer layout of a critic; the input width is filled in from the
/// data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticTemplate {
    pub hidden: Vec<usize>,
    /// 1-based hidden layer after which the one-hot label is appended.
    #[serde(default)]
    pub label_concat_at: Option<usize>,
    /// See [`CriticSpec::output_bound`].
    #[serde(default)]
    pub output_bound: Option<f64>,
}

impl CriticTemplate {
    pub fn build(&self, input_dim: usize, num_classes: Option<usize>) -> Result<CriticSpec> {
        let spec = match (self.label_concat_at, num_classes) {
            (Some(at), Some(k)) => CriticSpec::labeled(input_dim, &self.hidden, at, k),
            (None, None) => CriticSpec::plain(input_dim, &self.hidden),
            (None, Some(_)) => Err(Error::structural(
                "critic template has no label position but the term needs the label",
            )),
            (Some(_), None) => Err(Error::structural(
                "critic template reads a label but the term has none",
            )),
        }?;
        spec.with_output_bound(self.output_bound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerMode {
    /// A separate critic for `I(S; Y)` over all modalities.
    Direct,
}

/// Critics and training settings for each estimated term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// `I(S1; S2)`.
    pub plain: CriticTemplate,
    /// `I(S1; Y, S2)` and `I(S2; Y, S1)`.
    pub labeled: CriticTemplate,
    /// `I(S; Y)`; defaults to `labeled`.
    #[serde(default)]
    pub direct: Option<CriticTemplate>,
    pub train: MineTrainConfig,
    #[serde(default)]
    pub direct_train: Option<MineTrainConfig>,
    #[serde(default = "default_mode")]
    pub normalizer: NormalizerMode,
    /// Also estimate `Γ_{S2}` (needed for the pair metric). Defaults to
    /// `true` only for two modalities when unset.
    #[serde(default)]
    pub pair: Option<bool>,
}

fn default_mode() -> NormalizerMode {
    NormalizerMode::Direct
}

/// How the label block of a critic input is filled.
#[derive(Clone, Copy, PartialEq)]
enum LabelInput {
    None,
    OneHot,
    /// All zeros: a constant, so the critic still scores `(a, b)` only.
    Blank,
}

fn samples(ds: &MultiModalDataset, a: &[usize], b: &[usize], label: LabelInput) -> Result<MiSamples> {
    let block = match label {
        LabelInput::None => None,
        LabelInput::OneHot => Some(ds.one_hot_labels()),
        LabelInput::Blank => Some(Matrix::zeros(ds.len(), ds.num_classes())),
    };
    MiSamples::new(ds.concat(a), ds.concat(b), block)
}

/// A label-free term whose template still names a label position is
/// trained on the labeled architecture with a blank label block. It then
/// shares the initialisation, batches and marginal pairing of the labeled
/// critic it is subtracted from, which cancels much of the run-to-run noise
/// in the difference.
#[allow(clippy::too_many_arguments)]
fn estimate_term(
    name: &str,
    train: &MultiModalDataset,
    val: &MultiModalDataset,
    a: &[usize],
    b: &[usize],
    label: bool,
    template: &CriticTemplate,
    cfg: &MineTrainConfig,
) -> Result<MiEstimate> {
    let input = match (label, template.label_concat_at) {
        (true, _) => LabelInput::OneHot,
        (false, Some(_)) => LabelInput::Blank,
        (false, None) => LabelInput::None,
    };
    let run = || -> Result<MiEstimate> {
        let tr = samples(train, a, b, input)?;
        let va = samples(val, a, b, input)?;
        let critic = template.build(
            tr.a.cols() + tr.b.cols(),
            (input != LabelInput::None).then_some(train.num_classes()),
        )?;
        train_mi(&tr, &va, &critic, cfg)
    };
    run().map_err(|e| e.in_term(name))
}

fn check_pair(train: &MultiModalDataset, val: &MultiModalDataset) -> Result<()> {
    if train.num_modalities() < 2 {
        return Err(Error::structural(
            "complementarity needs at least 2 modalities",
        ));
    }
    if train.dims() != val.dims() || train.num_classes() != val.num_classes() {
        return Err(Error::structural(
            "train and validation splits disagree on shape",
        ));
    }
    Ok(())
}

/// `Γ_{S1}` with its two terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// `Î(S1; Y, S2) − Î(S1; S2)`, unclamped.
    pub raw: f64,
    pub clamped: f64,
    /// Per-replicate raw differences.
    pub replicates: Vec<f64>,
    pub std: f64,
    pub i_cross: MiEstimate,
    pub i_shared: MiEstimate,
}

impl GammaEstimate {
    fn compose(i_cross: MiEstimate, i_shared: MiEstimate) -> Self {
        let raw = i_cross.value - i_shared.value;
        let replicates: Vec<f64> = i_cross
            .replicate_values
            .iter()
            .zip(&i_shared.replicate_values)
            .map(|(c, s)| c - s)
            .collect();
        let std = if replicates.len() > 1 {
            std_dev(&replicates)
        } else {
            0.0
        };
        GammaEstimate {
            raw,
            clamped: raw.max(0.0),
            replicates,
            std,
            i_cross,
            i_shared,
        }
    }
}

pub fn estimate_gamma(
    train: &MultiModalDataset,
    val: &MultiModalDataset,
    subset: &SubsetSpec,
    cfg: &EstimatorConfig,
) -> Result<GammaEstimate> {
    check_pair(train, val)?;
    let m = train.num_modalities();
    subset.check(m)?;
    let s2 = subset.s2(m);
    let i_shared = estimate_term(
        "I(S1;S2)", train, val, &subset.s1, &s2, false, &cfg.plain, &cfg.train,
    )?;
    let i_cross = estimate_term(
        "I(S1;Y,S2)",
        train,
        val,
        &subset.s1,
        &s2,
        true,
        &cfg.labeled,
        &cfg.train,
    )?;
    Ok(GammaEstimate::compose(i_cross, i_shared))
}

/// All estimated terms and the derived metrics. `X` denotes `S1` and `Z`
/// denotes `S2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityReport {
    pub subset: SubsetSpec,
    pub normalizer: NormalizerMode,
    pub i_xz: MiEstimate,
    pub i_x_yz: MiEstimate,
    pub i_z_yx: Option<MiEstimate>,
    pub i_sy: MiEstimate,
    pub gamma_x_raw: f64,
    pub gamma_x: f64,
    pub gamma_z_raw: Option<f64>,
    pub gamma_z: Option<f64>,
    /// `(Γ_X⁺ + Γ_Z⁺) / Î(S;Y)`; `None` when undefined or not estimated.
    pub metric_pair: Option<f64>,
    /// `Γ_X⁺ / Î(S;Y)`; `None` when undefined.
    pub metric_subset: Option<f64>,
    /// Set when `Î(S;Y)` fell below [`NORMALIZER_FLOOR`].
    pub undefined: bool,
    /// Metrics recomputed from each replicate's terms.
    pub replicate_metric_pair: Vec<Option<f64>>,
    pub replicate_metric_subset: Vec<Option<f64>>,
}

impl ComplementarityReport {
    /// Mean and sample std of the defined per-replicate pair metrics.
    pub fn metric_pair_stats(&self) -> Option<(f64, f64)> {
        stats_of(&self.replicate_metric_pair)
    }

    pub fn metric_subset_stats(&self) -> Option<(f64, f64)> {
        stats_of(&self.replicate_metric_subset)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn stats_of(values: &[Option<f64>]) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    let s = if v.len() > 1 { std_dev(&v) } else { 0.0 };
    Some((mean(&v), s))
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den >= NORMALIZER_FLOOR).then(|| num / den)
}

pub fn estimate_complementarity(
    train: &MultiModalDataset,
    val: &MultiModalDataset,
    subset: &SubsetSpec,
    cfg: &EstimatorConfig,
) -> Result<ComplementarityReport> {
    check_pair(train, val)?;
    let m = train.num_modalities();
    subset.check(m)?;
    let s1 = &subset.s1;
    let s2 = subset.s2(m);
    let all: Vec<usize> = (0..m).collect();
    let pair = cfg.pair.unwrap_or(m == 2);

    let i_xz = estimate_term("I(X;Z)", train, val, s1, &s2, false, &cfg.plain, &cfg.train)?;
    let i_x_yz = estimate_term(
        "I(X;Y,Z)",
        train,
        val,
        s1,
        &s2,
        true,
        &cfg.labeled,
        &cfg.train,
    )?;
    let i_z_yx = if pair {
        Some(estimate_term(
            "I(Z;Y,X)",
            train,
            val,
            &s2,
            s1,
            true,
            &cfg.labeled,
            &cfg.train,
        )?)
    } else {
        None
    };
    let direct = cfg.direct.as_ref().unwrap_or(&cfg.labeled);
    let direct_train = cfg.direct_train.as_ref().unwrap_or(&cfg.train);
    let i_sy = estimate_term("I(S;Y)", train, val, &all, &[], true, direct, direct_train)?;

    let gamma_x_raw = i_x_yz.value - i_xz.value;
    let gamma_z_raw = i_z_yx.as_ref().map(|e| e.value - i_xz.value);
    let gamma_x = gamma_x_raw.max(0.0);
    let gamma_z = gamma_z_raw.map(|g| g.max(0.0));
    let undefined = i_sy.value < NORMALIZER_FLOOR;
    let metric_subset = ratio(gamma_x, i_sy.value);
    let metric_pair = gamma_z.and_then(|gz| ratio(gamma_x + gz, i_sy.value));

    let reps = i_xz.replicate_values.len();
    let mut replicate_metric_pair = Vec::with_capacity(reps);
    let mut replicate_metric_subset = Vec::with_capacity(reps);
    for r in 0..reps {
        let shared = i_xz.replicate_values[r];
        let gx = (i_x_yz.replicate_values[r] - shared).max(0.0);
        let den = i_sy.replicate_values[r];
        replicate_metric_subset.push(ratio(gx, den));
        replicate_metric_pair.push(
            i_z_yx
                .as_ref()
                .and_then(|e| ratio(gx + (e.replicate_values[r] - shared).max(0.0), den)),
        );
    }

    Ok(ComplementarityReport {
        subset: subset.clone(),
        normalizer: cfg.normalizer,
        i_xz,
        i_x_yz,
        i_z_yx,
        i_sy,
        gamma_x_raw,
        gamma_x,
        gamma_z_raw,
        gamma_z,
        metric_pair,
        metric_subset,
        undefined,
        replicate_metric_pair,
        replicate_metric_subset,
    })
}

/// Exact counterparts of [`ComplementarityReport`] on a discrete joint,
/// with `S1 = s1` and `S2` the other modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComplementarity {
    pub i_xz: f64,
    pub i_x_yz: f64,
    pub i_z_yx: f64,
    pub i_sy: f64,
    pub gamma_x: f64,
    pub gamma_z: f64,
    pub interaction: f64,
    pub metric_pair: Option<f64>,
    pub metric_subset: Option<f64>,
}

pub fn oracle_complementarity(joint: &DiscreteJoint, s1: Modality) -> OracleComplementarity {
    let (x, z) = (s1.var(), s1.other().var());
    let mi = |a, b| mutual_info(joint, a, b, Vars::NONE).expect("disjoint");
    let i_xz = mi(x, z);
    let i_x_yz = mi(x, Vars::Y | z);
    let i_z_yx = mi(z, Vars::Y | x);
    let i_sy = mi(Vars::X | Vars::Z, Vars::Y);
    let gamma_x = complementary_info(joint, s1);
    let gamma_z = complementary_info(joint, s1.other());
    let g = |v: f64| v.max(0.0);
    OracleComplementarity {
        i_xz,
        i_x_yz,
        i_z_yx,
        i_sy,
        gamma_x,
        gamma_z,
        interaction: interaction_info(joint),
        metric_pair: ratio(g(gamma_x) + g(gamma_z), i_sy),
        metric_subset: ratio(g(gamma_x), i_sy),
    }
}
