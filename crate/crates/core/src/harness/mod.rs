//! Late-fusion classifiers, the five training strategies, and zero-fill
//! missing-modality evaluation.

mod model;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use model::{missing_detect_decision, FusionMode, FusionModel, FusionModelSpec};
use model::{FusionRule, ModelGrads, ModelOptimizer, Trainable};

use crate::datagen::MultiModalDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::persist::{load_networks, save_networks};
use crate::nn::{MlpParams, MlpSpec, OptimizerConfig};
use crate::rng::{derive_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Naive,
    MultiTask,
    MissingAug,
    MissingDetect,
    UmeMma,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Naive,
        Strategy::MultiTask,
        Strategy::MissingAug,
        Strategy::MissingDetect,
        Strategy::UmeMma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::MultiTask => "multi_task",
            Strategy::MissingAug => "missing_aug",
            Strategy::MissingDetect => "missing_detect",
            Strategy::UmeMma => "ume_mma",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::structural(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            epochs: 20,
            batch_size: 64,
            optimizer: OptimizerConfig::adam(1e-3, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    /// Per-modality drop probabilities; a single entry applies to every
    /// modality.
    #[serde(default = "default_drop_probs")]
    pub drop_probs: Vec<f64>,
    /// Weight of the auxiliary per-modality losses (multi-task).
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub phase1: PhaseConfig,
    /// Fine-tuning schedule for the two-phase strategy; defaults to phase 1
    /// with the learning rate scaled by 0.1.
    #[serde(default)]
    pub phase2: Option<PhaseConfig>,
    #[serde(default)]
    pub freeze_encoders_in_phase2: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_drop_probs() -> Vec<f64> {
    vec![0.3]
}

fn default_lambda() -> f64 {
    1.0
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        StrategyConfig {
            strategy,
            drop_probs: default_drop_probs(),
            lambda: default_lambda(),
            phase1: PhaseConfig::default(),
            phase2: None,
            freeze_encoders_in_phase2: false,
            seed: 0,
        }
    }

    pub fn phase2(&self) -> PhaseConfig {
        self.phase2.clone().unwrap_or_else(|| {
            let mut p = self.phase1.clone();
            p.optimizer.schedule = p.optimizer.schedule.scaled(0.1);
            p
        })
    }

    /// Drop probabilities broadcast to `m` modalities.
    pub fn drop_probs_for(&self, m: usize) -> Result<Vec<f64>> {
        match self.drop_probs.len() {
            1 => Ok(vec![self.drop_probs[0]; m]),
            l if l == m => Ok(self.drop_probs.clone()),
            l => Err(Error::structural(format!(
                "{l} drop probabilities for {m} modalities"
            ))),
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        let probs = self.drop_probs_for(m)?;
        validate_drop_probs(&probs)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::structural("lambda must be finite and >= 0"));
        }
        for p in [&self.phase1, &self.phase2()] {
            if p.batch_size == 0 {
                return Err(Error::structural("batch_size must be positive"));
            }
            p.optimizer.validate()?;
        }
        Ok(())
    }
}

fn validate_drop_probs(probs: &[f64]) -> Result<()> {
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        return Err(Error::structural(format!("drop probability {p} outside [0, 1]")));
    }
    if probs.iter().all(|&p| p >= 1.0) {
        return Err(Error::structural(
            "every drop probability is 1: no draw can keep a modality",
        ));
    }
    Ok(())
}

/// Replaces one modality's features with exact zeros.
pub fn mask_modality(inputs: &[Matrix], modality: usize) -> Result<Vec<Matrix>> {
    if modality >= inputs.len() {
        return Err(Error::structural(format!(
            "modality {modality} out of range for {} modalities",
            inputs.len()
        )));
    }
    let mut out = inputs.to_vec();
    out[modality].as_mut_slice().fill(0.0);
    Ok(out)
}

/// One drop mask per example: independent Bernoulli draws per modality,
/// redrawn whenever every modality would drop.
pub fn draw_drop_masks(n: usize, probs: &[f64], rng: &mut Stream) -> Result<Vec<Vec<bool>>> {
    validate_drop_probs(probs)?;
    Ok((0..n)
        .map(|_| loop {
            let mask: Vec<bool> = probs.iter().map(|&p| rng.bernoulli(p)).collect();
            if mask.iter().any(|d| !d) {
                break mask;
            }
        })
        .collect())
}

/// Zero-fills dropped modalities per example.
pub fn apply_drop_masks(inputs: &[Matrix], masks: &[Vec<bool>]) -> Vec<Matrix> {
    let mut out = inputs.to_vec();
    for (i, mask) in masks.iter().enumerate() {
        for (x, &dropped) in out.iter_mut().zip(mask) {
            if dropped {
                x.row_mut(i).fill(0.0);
            }
        }
    }
    out
}

/// Missing-modality augmentation of a batch; returns the augmented batch
/// and the per-example drop mask.
pub fn missing_aug_sample(
    inputs: &[Matrix],
    drop_probs: &[f64],
    seed: u64,
) -> Result<(Vec<Matrix>, Vec<Vec<bool>>)> {
    if drop_probs.len() != inputs.len() {
        return Err(Error::structural(format!(
            "{} drop probabilities for {} modalities",
            drop_probs.len(),
            inputs.len()
        )));
    }
    let n = inputs.first().map_or(0, Matrix::rows);
    let mut rng = Stream::new(seed, 0);
    let masks = draw_drop_masks(n, drop_probs, &mut rng)?;
    Ok((apply_drop_masks(inputs, &masks), masks))
}

fn batch_inputs(ds: &MultiModalDataset, idx: &[usize]) -> Vec<Matrix> {
    ds.modalities().iter().map(|m| m.select_rows(idx)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Objective {
    Fusion,
    FusionPlusHeads,
    AugmentedFusion,
    DetectMissing,
    Unimodal,
    AugmentedAverage,
}

fn run_phase(
    model: &mut FusionModel,
    ds: &MultiModalDataset,
    phase: &PhaseConfig,
    objective: Objective,
    trainable: Trainable,
    cfg: &StrategyConfig,
    seed: u64,
) -> Result<()> {
    let probs = cfg.drop_probs_for(model.num_modalities())?;
    let mut opt = ModelOptimizer::new(model, &phase.optimizer, trainable)?;
    let mut order_rng = Stream::new(seed, 1);
    let mut drop_rng = Stream::new(seed, 2);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let k = model.spec.num_classes;
    for epoch in 0..phase.epochs {
        opt.set_epoch(epoch);
        order_rng.shuffle(&mut order);
        for chunk in order.chunks(phase.batch_size) {
            let inputs = batch_inputs(ds, chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| ds.labels()[i]).collect();
            let mut grads = ModelGrads::zeros(model);
            let loss = match objective {
                Objective::Fusion => model.loss_and_grads(
                    &inputs,
                    Some((&labels, FusionRule::Spec)),
                    None,
                    &mut grads,
                )?,
                Objective::FusionPlusHeads => {
                    let targets = vec![labels.clone(); model.num_modalities()];
                    model.loss_and_grads(
                        &inputs,
                        Some((&labels, FusionRule::Spec)),
                        Some((&targets, cfg.lambda)),
                        &mut grads,
                    )?
                }
                Objective::AugmentedFusion => {
                    let masks = draw_drop_masks(chunk.len(), &probs, &mut drop_rng)?;
                    let aug = apply_drop_masks(&inputs, &masks);
                    model.loss_and_grads(&aug, Some((&labels, FusionRule::Spec)), None, &mut grads)?
                }
                Objective::AugmentedAverage => {
                    let masks = draw_drop_masks(chunk.len(), &probs, &mut drop_rng)?;
                    let aug = apply_drop_masks(&inputs, &masks);
                    model.loss_and_grads(
                        &aug,
                        Some((&labels, FusionRule::HeadAverage)),
                        None,
                        &mut grads,
                    )?
                }
                Objective::Unimodal => {
                    let targets = vec![labels.clone(); model.num_modalities()];
                    model.loss_and_grads(&inputs, None, Some((&targets, 1.0)), &mut grads)?
                }
                Objective::DetectMissing => {
                    let masks = draw_drop_masks(chunk.len(), &probs, &mut drop_rng)?;
                    let aug = apply_drop_masks(&inputs, &masks);
                    let targets: Vec<Vec<usize>> = (0..model.num_modalities())
                        .map(|m| {
                            masks
                                .iter()
                                .zip(&labels)
                                .map(|(mask, &y)| if mask[m] { k } else { y })
                                .collect()
                        })
                        .collect();
                    let mut loss =
                        model.loss_and_grads(&aug, None, Some((&targets, 1.0)), &mut grads)?;
                    let complete: Vec<usize> = (0..chunk.len())
                        .filter(|&i| masks[i].iter().all(|d| !d))
                        .collect();
                    if !complete.is_empty() {
                        let sub: Vec<Matrix> =
                            inputs.iter().map(|x| x.select_rows(&complete)).collect();
                        let sub_labels: Vec<usize> = complete.iter().map(|&i| labels[i]).collect();
                        loss += model.loss_and_grads(
                            &sub,
                            Some((&sub_labels, FusionRule::Spec)),
                            None,
                            &mut grads,
                        )?;
                    }
                    loss
                }
            };
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("{} loss is {loss}", cfg.strategy.name()),
                });
            }
            opt.step(model, &grads)?;
        }
        if !model.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("{} parameters became non-finite", cfg.strategy.name()),
            });
        }
    }
    Ok(())
}

/// Trains a fresh model under the configured strategy.
pub fn train(
    ds: &MultiModalDataset,
    spec: &FusionModelSpec,
    cfg: &StrategyConfig,
) -> Result<FusionModel> {
    if ds.is_empty() {
        return Err(Error::structural("training split is empty"));
    }
    if spec.num_classes != ds.num_classes() {
        return Err(Error::structural(format!(
            "model has {} classes, dataset has {}",
            spec.num_classes,
            ds.num_classes()
        )));
    }
    cfg.validate(ds.num_modalities())?;
    let mut model = FusionModel::init(spec.clone(), cfg.strategy, &ds.dims(), derive_seed(cfg.seed, 0))?;
    let s1 = derive_seed(cfg.seed, 1);
    let p1 = &cfg.phase1;
    match cfg.strategy {
        Strategy::Naive => run_phase(&mut model, ds, p1, Objective::Fusion, Trainable::All, cfg, s1)?,
        Strategy::MultiTask => run_phase(
            &mut model,
            ds,
            p1,
            Objective::FusionPlusHeads,
            Trainable::All,
            cfg,
            s1,
        )?,
        Strategy::MissingAug => run_phase(
            &mut model,
            ds,
            p1,
            Objective::AugmentedFusion,
            Trainable::All,
            cfg,
            s1,
        )?,
        Strategy::MissingDetect => run_phase(
            &mut model,
            ds,
            p1,
            Objective::DetectMissing,
            Trainable::All,
            cfg,
            s1,
        )?,
        Strategy::UmeMma => {
            run_phase(
                &mut model,
                ds,
                p1,
                Objective::Unimodal,
                Trainable::EncodersAndHeads,
                cfg,
                s1,
            )?;
            fine_tune(&mut model, ds, cfg)?;
        }
    }
    Ok(model)
}

/// Phase 2 of the two-phase strategy: fine-tunes the averaged ensemble on
/// missing-augmented batches.
pub fn fine_tune(model: &mut FusionModel, ds: &MultiModalDataset, cfg: &StrategyConfig) -> Result<()> {
    if model.strategy != Strategy::UmeMma {
        return Err(Error::structural("fine-tuning applies to the two-phase strategy only"));
    }
    cfg.validate(model.num_modalities())?;
    let trainable = if cfg.freeze_encoders_in_phase2 {
        Trainable::HeadOutputLayers
    } else {
        Trainable::EncodersAndHeads
    };
    run_phase(
        model,
        ds,
        &cfg.phase2(),
        Objective::AugmentedAverage,
        trainable,
        cfg,
        derive_seed(cfg.seed, 2),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub clean_accuracy: f64,
    /// Accuracy with modality `i` zero-filled.
    pub missing_accuracy: Vec<f64>,
    /// Mean missing accuracy over clean accuracy (0 when clean accuracy is 0).
    pub robustness_ratio: f64,
    /// `confusion[true][predicted]` on intact inputs.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn mean_missing_accuracy(&self) -> f64 {
        crate::stats::mean(&self.missing_accuracy)
    }
}

fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

pub fn evaluate_missing(model: &FusionModel, ds: &MultiModalDataset) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::structural("validation split is empty"));
    }
    let inputs = ds.modalities();
    let pred = model.predict(inputs)?;
    let k = model.spec.num_classes;
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &y) in pred.iter().zip(ds.labels()) {
        if y < k {
            confusion[y][p] += 1;
        }
    }
    let clean_accuracy = accuracy(&pred, ds.labels());
    let missing_accuracy = (0..inputs.len())
        .map(|m| {
            let masked = mask_modality(inputs, m)?;
            Ok(accuracy(&model.predict(&masked)?, ds.labels()))
        })
        .collect::<Result<Vec<_>>>()?;
    let robustness_ratio = if clean_accuracy > 0.0 {
        crate::stats::mean(&missing_accuracy) / clean_accuracy
    } else {
        0.0
    };
    Ok(EvalReport {
        clean_accuracy,
        missing_accuracy,
        robustness_ratio,
        confusion,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMetadata {
    strategy: Strategy,
    input_dims: Vec<usize>,
    spec: FusionModelSpec,
}

/// Writes `<dir>/<name>.json` and `<dir>/<name>.f64le`.
pub fn save_model(model: &FusionModel, dir: &Path, name: &str) -> Result<()> {
    let mut nets: Vec<(String, &MlpSpec, &MlpParams)> = Vec::new();
    for (i, (s, p)) in model.spec.encoders.iter().zip(&model.encoders).enumerate() {
        if let (Some(s), Some(p)) = (s, p) {
            nets.push((format!("encoder_{i}"), s, p));
        }
    }
    if let (FusionMode::ConcatHead { head }, Some(p)) = (&model.spec.fusion, &model.fusion_head) {
        nets.push(("fusion_head".into(), head, p));
    }
    for (i, (s, p)) in model.spec.heads.iter().zip(&model.heads).enumerate() {
        nets.push((format!("head_{i}"), s, p));
    }
    let refs: Vec<(&str, &MlpSpec, &MlpParams)> =
        nets.iter().map(|(n, s, p)| (n.as_str(), *s, *p)).collect();
    let meta = serde_json::to_value(ModelMetadata {
        strategy: model.strategy,
        input_dims: model.input_dims.clone(),
        spec: model.spec.clone(),
    })?;
    save_networks(dir, name, &refs, meta)
}

pub fn load_model(dir: &Path, name: &str) -> Result<FusionModel> {
    let (nets, meta) = load_networks(dir, name)?;
    let meta: ModelMetadata = serde_json::from_value(meta)
        .map_err(|e| Error::Format(format!("model metadata: {e}")))?;
    let mut model = FusionModel::init(meta.spec, meta.strategy, &meta.input_dims, 0)?;
    let mut seen = 0;
    for net in nets {
        let slot: &mut MlpParams = if let Some(i) = net.name.strip_prefix("encoder_") {
            let i: usize = i.parse().map_err(|_| Error::Format(format!("bad network {}", net.name)))?;
            model
                .encoders
                .get_mut(i)
                .and_then(Option::as_mut)
                .ok_or_else(|| Error::Format(format!("unexpected network {}", net.name)))?
        } else if let Some(i) = net.name.strip_prefix("head_") {
            let i: usize = i.parse().map_err(|_| Error::Format(format!("bad network {}", net.name)))?;
            model
                .heads
                .get_mut(i)
                .ok_or_else(|| Error::Format(format!("unexpected network {}", net.name)))?
        } else if net.name == "fusion_head" {
            model
                .fusion_head
                .as_mut()
                .ok_or_else(|| Error::Format("unexpected fusion_head".into()))?
        } else {
            return Err(Error::Format(format!("unexpected network {}", net.name)));
        };
        if slot.shapes() != net.params.shapes() {
            return Err(Error::Format(format!("network {} has the wrong shape", net.name)));
        }
        *slot = net.params;
        seen += 1;
    }
    let expected = model.encoders.iter().flatten().count()
        + usize::from(model.fusion_head.is_some())
        + model.heads.len();
    if seen != expected {
        return Err(Error::Format(format!(
            "bundle holds {seen} networks, model needs {expected}"
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_xor, XorConfig};

    fn toy_inputs() -> Vec<Matrix> {
        vec![
            Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            Matrix::from_vec(3, 1, vec![7.0, 8.0, 9.0]),
        ]
    }

    #[test]
    fn masking_zeroes_one_modality_only() {
        let x = toy_inputs();
        let m = mask_modality(&x, 0).unwrap();
        assert!(m[0].as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(m[1], x[1]);
        assert_eq!(mask_modality(&m, 0).unwrap(), m);
        assert!(mask_modality(&x, 2).is_err());
    }

    #[test]
    fn augmentation_never_drops_everything() {
        let x = toy_inputs();
        let (_, masks) = missing_aug_sample(&x, &[0.9, 0.9], 3).unwrap();
        assert!(masks.iter().all(|m| m.iter().any(|d| !d)));
        let (same, none) = missing_aug_sample(&x, &[0.0, 0.0], 3).unwrap();
        assert_eq!(same, x);
        assert!(none.iter().flatten().all(|d| !d));
        assert!(missing_aug_sample(&x, &[1.0, 1.0], 3).is_err());
        assert_eq!(
            missing_aug_sample(&x, &[0.5, 0.5], 9).unwrap(),
            missing_aug_sample(&x, &[0.5, 0.5], 9).unwrap()
        );
    }

    #[test]
    fn marginal_drop_rate_matches_conditioned_enumeration() {
        let p = [0.3, 0.3];
        // Enumerate the four (d1, d2) outcomes and condition on not (1, 1).
        let mut keep = 0.0;
        let mut drop_first = 0.0;
        for d1 in [false, true] {
            for d2 in [false, true] {
                if d1 && d2 {
                    continue;
                }
                let w = (if d1 { p[0] } else { 1.0 - p[0] }) * (if d2 { p[1] } else { 1.0 - p[1] });
                keep += w;
                if d1 {
                    drop_first += w;
                }
            }
        }
        let exact = drop_first / keep;
        let n = 100_000;
        let mut rng = Stream::new(5, 0);
        let masks = draw_drop_masks(n, &p, &mut rng).unwrap();
        assert!(masks.iter().all(|m| !(m[0] && m[1])));
        let freq = masks.iter().filter(|m| m[0]).count() as f64 / n as f64;
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((freq - exact).abs() < 3.0 * sigma, "{freq} vs {exact}");
    }

    #[test]
    fn detect_rule_truth_table() {
        // K = 2, index 2 is "missing".
        let a: &[f64] = &[2.0, 0.0, -1.0];
        let b_missing: &[f64] = &[0.0, 1.0, 5.0];
        let b: &[f64] = &[0.0, 3.0, -1.0];
        assert_eq!(missing_detect_decision(&[a, b_missing], 2), 0);
        assert_eq!(missing_detect_decision(&[b_missing, a], 2), 0);
        // Neither flagged: average (1.0, 1.5) → class 1.
        assert_eq!(missing_detect_decision(&[a, b], 2), 1);
        // Both flagged: average real logits (1.0, 0.5) → class 0.
        let a_missing: &[f64] = &[2.0, 0.0, 9.0];
        assert_eq!(missing_detect_decision(&[a_missing, b_missing], 2), 0);
    }

    fn small_phase(epochs: usize) -> PhaseConfig {
        PhaseConfig {
            epochs,
            batch_size: 32,
            optimizer: OptimizerConfig::adam(3e-3, 0.0),
        }
    }

    fn xor_data() -> (MultiModalDataset, MultiModalDataset) {
        gen_xor(&XorConfig {
            n: 1000,
            ..XorConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn naive_learns_xor_and_single_modalities_fall_to_chance() {
        let (train_ds, val) = xor_data();
        let spec = FusionModelSpec::perceptron(&train_ds.dims(), 32, 2);
        let cfg = StrategyConfig {
            phase1: small_phase(30),
            ..StrategyConfig::new(Strategy::Naive)
        };
        let model = train(&train_ds, &spec, &cfg).unwrap();
        let r = evaluate_missing(&model, &val).unwrap();
        assert!(r.clean_accuracy >= 0.95, "{r:?}");
        for a in &r.missing_accuracy {
            assert!((a - 0.5).abs() <= 0.08, "{r:?}");
        }
        assert_eq!(r, evaluate_missing(&model, &val).unwrap());
    }

    #[test]
    fn strategy_spec_mismatch_is_structural() {
        let (train_ds, _) = xor_data();
        let mut spec = FusionModelSpec::perceptron(&train_ds.dims(), 8, 2);
        spec.heads.clear();
        for s in [Strategy::MultiTask, Strategy::MissingDetect, Strategy::UmeMma] {
            let err = train(&train_ds, &spec, &StrategyConfig::new(s)).unwrap_err();
            assert!(matches!(err, Error::Structural(_)), "{s:?}");
        }
        // Heads of width K are wrong for missing-detect.
        let spec = FusionModelSpec::perceptron(&train_ds.dims(), 8, 2);
        assert!(train(&train_ds, &spec, &StrategyConfig::new(Strategy::MissingDetect)).is_err());
    }

    #[test]
    fn every_strategy_trains_and_round_trips() {
        let (train_ds, val) = xor_data();
        let dir = tempfile::tempdir().unwrap();
        for s in Strategy::ALL {
            let mut spec = FusionModelSpec::perceptron(&train_ds.dims(), 16, 2);
            if s == Strategy::MissingDetect {
                spec = spec.with_missing_class();
            }
            let cfg = StrategyConfig {
                phase1: small_phase(2),
                ..StrategyConfig::new(s)
            };
            let model = train(&train_ds, &spec, &cfg).unwrap();
            save_model(&model, dir.path(), s.name()).unwrap();
            let back = load_model(dir.path(), s.name()).unwrap();
            assert_eq!(back, model);
            assert_eq!(
                evaluate_missing(&back, &val).unwrap(),
                evaluate_missing(&model, &val).unwrap()
            );
        }
    }

    #[test]
    fn empty_phase_two_leaves_the_averaged_unimodal_models() {
        let (train_ds, val) = xor_data();
        let spec = FusionModelSpec::perceptron(&train_ds.dims(), 16, 2);
        let cfg = StrategyConfig {
            drop_probs: vec![0.0],
            phase1: small_phase(3),
            phase2: Some(small_phase(0)),
            ..StrategyConfig::new(Strategy::UmeMma)
        };
        let model = train(&train_ds, &spec, &cfg).unwrap();
        let heads = model.head_logits(val.modalities()).unwrap();
        let pred = model.predict(val.modalities()).unwrap();
        for (i, p) in pred.iter().enumerate() {
            let avg: Vec<f64> = (0..2)
                .map(|c| 0.5 * (heads[0].get(i, c) + heads[1].get(i, c)))
                .collect();
            assert_eq!(*p, crate::nn::argmax(&avg));
        }
    }

    #[test]
    fn logit_average_with_a_masked_branch_adds_a_constant() {
        let (train_ds, val) = xor_data();
        let spec = FusionModelSpec::perceptron(&train_ds.dims(), 16, 2);
        let cfg = StrategyConfig {
            phase1: small_phase(1),
            ..StrategyConfig::new(Strategy::UmeMma)
        };
        let model = train(&train_ds, &spec, &cfg).unwrap();
        let masked = mask_modality(val.modalities(), 1).unwrap();
        let fused = model.fusion_logits(&masked).unwrap();
        let heads = model.head_logits(&masked).unwrap();
        for i in 0..val.len() {
            assert_eq!(heads[1].row(i), heads[1].row(0));
            for c in 0..2 {
                let expect = 0.5 * (heads[0].get(i, c) + heads[1].get(0, c));
                assert!((fused.get(i, c) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frozen_phase_two_only_moves_output_layers() {
        let (train_ds, _) = xor_data();
        let spec = FusionModelSpec::perceptron(&train_ds.dims(), 16, 2);
        let base = StrategyConfig {
            phase1: small_phase(2),
            phase2: Some(small_phase(0)),
            freeze_encoders_in_phase2: true,
            ..StrategyConfig::new(Strategy::UmeMma)
        };
        let before = train(&train_ds, &spec, &base).unwrap();
        let mut after = before.clone();
        let cfg = StrategyConfig {
            phase2: Some(small_phase(2)),
            ..base
        };
        fine_tune(&mut after, &train_ds, &cfg).unwrap();
        for (b, a) in before.heads.iter().zip(&after.heads) {
            assert_eq!(b.layer_range(0), a.layer_range(0));
            let r = b.layer_range(0);
            assert_eq!(b.as_slice()[r.clone()], a.as_slice()[r]);
            let last = b.layer_range(1);
            assert_ne!(b.as_slice()[last.clone()], a.as_slice()[last]);
        }
    }

    #[test]
    fn ignored_modality_does_not_change_accuracy_when_masked() {
        let (train_ds, val) = xor_data();
        let spec = FusionModelSpec::perceptron(&train_ds.dims(), 16, 2);
        let cfg = StrategyConfig {
            phase1: small_phase(2),
            ..StrategyConfig::new(Strategy::Naive)
        };
        let mut model = train(&train_ds, &spec, &cfg).unwrap();
        let d0 = train_ds.dims()[0];
        let head = model.fusion_head.as_mut().unwrap();
        let cols = d0 + train_ds.dims()[1];
        let (rows, _) = head.shapes()[0];
        let w = head.weight_mut(0);
        for r in 0..rows {
            w[r * cols + d0..(r + 1) * cols].fill(0.0);
        }
        let rep = evaluate_missing(&model, &val).unwrap();
        assert_eq!(rep.missing_accuracy[1], rep.clean_accuracy);
    }
}
