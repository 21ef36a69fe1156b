use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    argmax, backward, forward, init_params, predict, softmax_cross_entropy, Activation,
    ForwardCache, MlpParams, MlpSpec, OptimizerConfig, OptimizerState,
};
use crate::rng::derive_seed;

use super::Strategy;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FusionMode {
    /// Concatenated encoder features through a head network.
    ConcatHead { head: MlpSpec },
    /// Mean of the per-modality head logits.
    LogitAverage,
}

/// Per-modality encoders (`None` passes the raw input through), a fusion
/// rule, and optional per-modality heads used as auxiliary classifiers,
/// missing detectors, or ensemble members.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionModelSpec {
    pub encoders: Vec<Option<MlpSpec>>,
    /// Applied to every encoder's output.
    #[serde(default = "default_encoder_activation")]
    pub encoder_activation: Activation,
    pub fusion: FusionMode,
    #[serde(default)]
    pub heads: Vec<MlpSpec>,
    pub num_classes: usize,
}

fn default_encoder_activation() -> Activation {
    Activation::Elu
}

impl FusionModelSpec {
    /// Identity encoders, an ELU perceptron `concat → hidden → K` as the
    /// fusion head, and one `d_i → hidden → K` perceptron per modality.
    pub fn perceptron(input_dims: &[usize], hidden: usize, num_classes: usize) -> Self {
        let total: usize = input_dims.iter().sum();
        FusionModelSpec {
            encoders: vec![None; input_dims.len()],
            encoder_activation: Activation::Elu,
            fusion: FusionMode::ConcatHead {
                head: MlpSpec::elu(&[total, hidden, num_classes]),
            },
            heads: input_dims
                .iter()
                .map(|&d| MlpSpec::elu(&[d, hidden, num_classes]))
                .collect(),
            num_classes,
        }
    }

    /// Same model with `K + 1` outputs on every head (the extra class
    /// marks a missing modality).
    pub fn with_missing_class(mut self) -> Self {
        for h in &mut self.heads {
            if let Some(last) = h.layer_dims.last_mut() {
                *last = self.num_classes + 1;
            }
        }
        self
    }

    pub fn num_modalities(&self) -> usize {
        self.encoders.len()
    }

    /// Width of each modality's feature after its encoder.
    pub fn feature_dims(&self, input_dims: &[usize]) -> Vec<usize> {
        self.encoders
            .iter()
            .zip(input_dims)
            .map(|(e, &d)| e.as_ref().map_or(d, MlpSpec::output_dim))
            .collect()
    }

    pub fn validate(&self, input_dims: &[usize], strategy: Strategy) -> Result<()> {
        let m = self.num_modalities();
        if m == 0 || input_dims.len() != m {
            return Err(Error::structural(format!(
                "model has {m} encoders for {} modalities",
                input_dims.len()
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::structural("num_classes must be at least 2"));
        }
        for (i, (e, &d)) in self.encoders.iter().zip(input_dims).enumerate() {
            if let Some(e) = e {
                e.validate()?;
                if e.input_dim() != d || e.label_concat_at.is_some() {
                    return Err(Error::structural(format!(
                        "encoder {i} reads {} inputs, modality has {d}",
                        e.input_dim()
                    )));
                }
            }
        }
        let feats = self.feature_dims(input_dims);
        let k = self.num_classes;
        let head_out = if strategy == Strategy::MissingDetect { k + 1 } else { k };
        let needs_heads = match strategy {
            Strategy::Naive | Strategy::MissingAug => self.fusion == FusionMode::LogitAverage,
            Strategy::MultiTask | Strategy::MissingDetect | Strategy::UmeMma => true,
        };
        if needs_heads && self.heads.len() != m {
            return Err(Error::structural(format!(
                "{strategy:?} with this fusion mode needs one head per modality, found {}",
                self.heads.len()
            )));
        }
        if !self.heads.is_empty() && self.heads.len() != m {
            return Err(Error::structural("heads must be absent or one per modality"));
        }
        for (i, h) in self.heads.iter().enumerate() {
            h.validate()?;
            if h.input_dim() != feats[i] || h.label_concat_at.is_some() {
                return Err(Error::structural(format!(
                    "head {i} reads {} inputs, encoder emits {}",
                    h.input_dim(),
                    feats[i]
                )));
            }
            if h.output_dim() != head_out {
                return Err(Error::structural(format!(
                    "head {i} emits {} logits, {strategy:?} needs {head_out}",
                    h.output_dim()
                )));
            }
        }
        if strategy == Strategy::MissingDetect && self.fusion == FusionMode::LogitAverage {
            return Err(Error::structural(
                "missing-detect heads carry an extra class and cannot be logit-averaged",
            ));
        }
        if let FusionMode::ConcatHead { head } = &self.fusion {
            head.validate()?;
            let total: usize = feats.iter().sum();
            if head.input_dim() != total || head.output_dim() != k || head.label_concat_at.is_some() {
                return Err(Error::structural(format!(
                    "fusion head is {}→{}, expected {total}→{k}",
                    head.input_dim(),
                    head.output_dim()
                )));
            }
        }
        Ok(())
    }
}

/// Trained parameters of a [`FusionModelSpec`] plus the strategy that
/// decides its inference rule.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub spec: FusionModelSpec,
    pub strategy: Strategy,
    pub input_dims: Vec<usize>,
    pub encoders: Vec<Option<MlpParams>>,
    pub fusion_head: Option<MlpParams>,
    pub heads: Vec<MlpParams>,
}

/// Gradient buffers mirroring a [`FusionModel`].
#[derive(Debug, Clone)]
pub(crate) struct ModelGrads {
    pub encoders: Vec<Option<MlpParams>>,
    pub fusion_head: Option<MlpParams>,
    pub heads: Vec<MlpParams>,
}

impl ModelGrads {
    pub fn zeros(model: &FusionModel) -> Self {
        let z = |p: &MlpParams| {
            let mut q = p.clone();
            q.scale(0.0);
            q
        };
        ModelGrads {
            encoders: model.encoders.iter().map(|e| e.as_ref().map(z)).collect(),
            fusion_head: model.fusion_head.as_ref().map(z),
            heads: model.heads.iter().map(z).collect(),
        }
    }
}

struct Features {
    feats: Vec<Matrix>,
    caches: Vec<Option<(ForwardCache, Matrix)>>,
}

/// Which per-modality sources a loss reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FusionRule {
    /// The spec's fusion mode.
    Spec,
    /// Mean of head logits regardless of the spec.
    HeadAverage,
}

impl FusionModel {
    pub fn init(
        spec: FusionModelSpec,
        strategy: Strategy,
        input_dims: &[usize],
        seed: u64,
    ) -> Result<Self> {
        spec.validate(input_dims, strategy)?;
        let encoders = spec
            .encoders
            .iter()
            .enumerate()
            .map(|(i, e)| {
                e.as_ref()
                    .map(|s| init_params(s, derive_seed(seed, 100 + i as u64)))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        let fusion_head = match &spec.fusion {
            FusionMode::ConcatHead { head } => Some(init_params(head, derive_seed(seed, 200))?),
            FusionMode::LogitAverage => None,
        };
        let heads = spec
            .heads
            .iter()
            .enumerate()
            .map(|(i, h)| init_params(h, derive_seed(seed, 300 + i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(FusionModel {
            spec,
            strategy,
            input_dims: input_dims.to_vec(),
            encoders,
            fusion_head,
            heads,
        })
    }

    pub fn num_modalities(&self) -> usize {
        self.input_dims.len()
    }

    fn check_inputs(&self, inputs: &[Matrix]) -> Result<usize> {
        if inputs.len() != self.num_modalities() {
            return Err(Error::structural(format!(
                "model expects {} modalities, got {}",
                self.num_modalities(),
                inputs.len()
            )));
        }
        let n = inputs[0].rows();
        for (i, (x, &d)) in inputs.iter().zip(&self.input_dims).enumerate() {
            if x.cols() != d || x.rows() != n {
                return Err(Error::structural(format!(
                    "modality {i} batch is {}x{}, expected {n}x{d}",
                    x.rows(),
                    x.cols()
                )));
            }
        }
        Ok(n)
    }

    fn features(&self, inputs: &[Matrix], keep: bool) -> Result<Features> {
        self.check_inputs(inputs)?;
        let act = self.spec.encoder_activation;
        let mut feats = Vec::with_capacity(inputs.len());
        let mut caches = Vec::with_capacity(inputs.len());
        for (i, x) in inputs.iter().enumerate() {
            match (&self.spec.encoders[i], &self.encoders[i]) {
                (Some(spec), Some(params)) => {
                    let (pre, cache) = if keep {
                        let (o, c) = forward(spec, params, x, None)?;
                        (o, Some(c))
                    } else {
                        (predict(spec, params, x, None)?, None)
                    };
                    let mut f = pre.clone();
                    f.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
                    feats.push(f);
                    caches.push(cache.map(|c| (c, pre)));
                }
                _ => {
                    feats.push(x.clone());
                    caches.push(None);
                }
            }
        }
        Ok(Features { feats, caches })
    }

    fn head_logits_from(&self, feats: &[Matrix]) -> Result<Vec<Matrix>> {
        self.spec
            .heads
            .iter()
            .zip(&self.heads)
            .zip(feats)
            .map(|((s, p), f)| predict(s, p, f, None))
            .collect()
    }

    fn average(logits: &[Matrix], classes: usize) -> Matrix {
        let n = logits[0].rows();
        let mut out = Matrix::zeros(n, classes);
        let w = 1.0 / logits.len() as f64;
        for l in logits {
            for i in 0..n {
                for (o, v) in out.row_mut(i).iter_mut().zip(&l.row(i)[..classes]) {
                    *o += w * v;
                }
            }
        }
        out
    }

    fn fused_from(&self, feats: &[Matrix], rule: FusionRule) -> Result<Matrix> {
        match (&self.spec.fusion, rule) {
            (FusionMode::ConcatHead { head }, FusionRule::Spec) => {
                let refs: Vec<&Matrix> = feats.iter().collect();
                let x = Matrix::hcat(&refs);
                predict(head, self.fusion_head.as_ref().expect("initialised"), &x, None)
            }
            _ => {
                let logits = self.head_logits_from(feats)?;
                Ok(Self::average(&logits, self.spec.num_classes))
            }
        }
    }

    /// Output of the fusion rule the strategy trains.
    pub fn fusion_logits(&self, inputs: &[Matrix]) -> Result<Matrix> {
        let f = self.features(inputs, false)?;
        self.fused_from(&f.feats, self.inference_rule())
    }

    /// Per-modality head logits.
    pub fn head_logits(&self, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
        let f = self.features(inputs, false)?;
        self.head_logits_from(&f.feats)
    }

    pub(crate) fn inference_rule(&self) -> FusionRule {
        if self.strategy == Strategy::UmeMma {
            FusionRule::HeadAverage
        } else {
            FusionRule::Spec
        }
    }

    /// Predicted classes under the strategy's inference rule.
    pub fn predict(&self, inputs: &[Matrix]) -> Result<Vec<usize>> {
        let f = self.features(inputs, false)?;
        let n = inputs[0].rows();
        if self.strategy == Strategy::MissingDetect {
            let logits = self.head_logits_from(&f.feats)?;
            return Ok((0..n)
                .map(|i| {
                    let rows: Vec<&[f64]> = logits.iter().map(|l| l.row(i)).collect();
                    missing_detect_decision(&rows, self.spec.num_classes)
                })
                .collect());
        }
        let fused = self.fused_from(&f.feats, self.inference_rule())?;
        Ok((0..n).map(|i| argmax(fused.row(i))).collect())
    }

    /// Loss and gradients of
    /// `fusion_weight · CE(fused, fusion_targets) + head_weight · Σ_i CE(head_i, head_targets[i])`.
    pub(crate) fn loss_and_grads(
        &self,
        inputs: &[Matrix],
        fusion: Option<(&[usize], FusionRule)>,
        heads: Option<(&[Vec<usize>], f64)>,
        grads: &mut ModelGrads,
    ) -> Result<f64> {
        let f = self.features(inputs, true)?;
        let m = self.num_modalities();
        let mut dfeat: Vec<Matrix> = f.feats.iter().map(|x| Matrix::zeros(x.rows(), x.cols())).collect();
        let mut loss = 0.0;

        if let Some((targets, rule)) = fusion {
            match (&self.spec.fusion, rule) {
                (FusionMode::ConcatHead { head }, FusionRule::Spec) => {
                    let refs: Vec<&Matrix> = f.feats.iter().collect();
                    let x = Matrix::hcat(&refs);
                    let params = self.fusion_head.as_ref().expect("initialised");
                    let (out, cache) = forward(head, params, &x, None)?;
                    let (l, g) = softmax_cross_entropy(&out, targets);
                    loss += l;
                    let (gp, dx) = backward(head, params, &cache, &g)?;
                    grads.fusion_head.as_mut().expect("initialised").add_assign(&gp);
                    let mut at = 0;
                    for (i, d) in dfeat.iter_mut().enumerate() {
                        let w = f.feats[i].cols();
                        add_into(d, &dx.columns(at, w));
                        at += w;
                    }
                }
                _ => {
                    let k = self.spec.num_classes;
                    let mut outs = Vec::with_capacity(m);
                    let mut caches = Vec::with_capacity(m);
                    for i in 0..m {
                        let (o, c) = forward(&self.spec.heads[i], &self.heads[i], &f.feats[i], None)?;
                        outs.push(o);
                        caches.push(c);
                    }
                    let fused = Self::average(&outs, k);
                    let (l, g) = softmax_cross_entropy(&fused, targets);
                    loss += l;
                    for i in 0..m {
                        let width = self.spec.heads[i].output_dim();
                        let mut gi = Matrix::zeros(g.rows(), width);
                        for r in 0..g.rows() {
                            for (dst, src) in gi.row_mut(r).iter_mut().zip(g.row(r)) {
                                *dst = src / m as f64;
                            }
                        }
                        let (gp, dx) = backward(&self.spec.heads[i], &self.heads[i], &caches[i], &gi)?;
                        grads.heads[i].add_assign(&gp);
                        add_into(&mut dfeat[i], &dx);
                    }
                }
            }
        }

        if let Some((targets, weight)) = heads {
            for i in 0..m {
                let (o, c) = forward(&self.spec.heads[i], &self.heads[i], &f.feats[i], None)?;
                let (l, mut g) = softmax_cross_entropy(&o, &targets[i]);
                loss += weight * l;
                g.as_mut_slice().iter_mut().for_each(|v| *v *= weight);
                let (gp, dx) = backward(&self.spec.heads[i], &self.heads[i], &c, &g)?;
                grads.heads[i].add_assign(&gp);
                add_into(&mut dfeat[i], &dx);
            }
        }

        let act = self.spec.encoder_activation;
        for (i, cache) in f.caches.iter().enumerate() {
            if let (Some((c, pre)), Some(spec), Some(params)) =
                (cache, &self.spec.encoders[i], &self.encoders[i])
            {
                let mut d = dfeat[i].clone();
                for (v, p) in d.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *v *= act.derivative(*p);
                }
                let (gp, _) = backward(spec, params, c, &d)?;
                grads.encoders[i].as_mut().expect("initialised").add_assign(&gp);
            }
        }
        Ok(loss)
    }

    pub fn is_finite(&self) -> bool {
        self.encoders.iter().flatten().all(MlpParams::is_finite)
            && self.fusion_head.as_ref().is_none_or(MlpParams::is_finite)
            && self.heads.iter().all(MlpParams::is_finite)
    }
}

fn add_into(dst: &mut Matrix, src: &Matrix) {
    for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *d += s;
    }
}

/// Missing-detect decision from per-modality head rows of `K + 1` logits
/// (index `K` is "missing"). If some but not all heads flag their modality
/// as missing, the remaining heads decide; otherwise all heads' real-class
/// logits are averaged. Ties go to the lowest class.
pub fn missing_detect_decision(rows: &[&[f64]], num_classes: usize) -> usize {
    let flagged: Vec<bool> = rows.iter().map(|r| argmax(r) == num_classes).collect();
    let n_flagged = flagged.iter().filter(|&&f| f).count();
    let use_all = n_flagged == 0 || n_flagged == rows.len();
    let mut avg = vec![0.0; num_classes];
    let mut count = 0.0;
    for (r, &f) in rows.iter().zip(&flagged) {
        if use_all || !f {
            for (a, v) in avg.iter_mut().zip(&r[..num_classes]) {
                *a += v;
            }
            count += 1.0;
        }
    }
    avg.iter_mut().for_each(|a| *a /= count);
    argmax(&avg)
}

/// An optimizer restricted to a contiguous range of one network's
/// parameters.
#[derive(Debug, Clone)]
struct NetOptimizer {
    state: OptimizerState,
    range: Range<usize>,
}

impl NetOptimizer {
    fn new(cfg: &OptimizerConfig, range: Range<usize>) -> Result<Self> {
        Ok(NetOptimizer {
            state: OptimizerState::new(cfg.clone(), range.len())?,
            range,
        })
    }

    fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        let r = self.range.clone();
        self.state
            .step(&mut params.as_mut_slice()[r.clone()], &grads.as_slice()[r])
    }
}

/// What a training phase may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Trainable {
    All,
    /// Only the final linear layer of every per-modality head.
    HeadOutputLayers,
    /// Encoders plus heads, each modality trained on its own.
    EncodersAndHeads,
}

/// Optimizers for every trainable network of a model.
pub(crate) struct ModelOptimizer {
    encoders: Vec<Option<NetOptimizer>>,
    fusion_head: Option<NetOptimizer>,
    heads: Vec<Option<NetOptimizer>>,
}

impl ModelOptimizer {
    pub fn new(model: &FusionModel, cfg: &OptimizerConfig, which: Trainable) -> Result<Self> {
        let full = |p: &MlpParams| NetOptimizer::new(cfg, 0..p.len());
        let encoders = model
            .encoders
            .iter()
            .map(|e| match (e, which) {
                (Some(p), Trainable::All | Trainable::EncodersAndHeads) => full(p).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        let fusion_head = match (&model.fusion_head, which) {
            (Some(p), Trainable::All) => Some(full(p)?),
            _ => None,
        };
        let heads = model
            .heads
            .iter()
            .map(|p| match which {
                Trainable::All | Trainable::EncodersAndHeads => full(p).map(Some),
                Trainable::HeadOutputLayers => {
                    let last = p.shapes().len() - 1;
                    NetOptimizer::new(cfg, p.layer_range(last)).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelOptimizer {
            encoders,
            fusion_head,
            heads,
        })
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        let all = self
            .encoders
            .iter_mut()
            .chain(self.heads.iter_mut())
            .chain(std::iter::once(&mut self.fusion_head))
            .flatten();
        for o in all {
            o.state.set_epoch(epoch);
        }
    }

    pub fn step(&mut self, model: &mut FusionModel, grads: &ModelGrads) -> Result<()> {
        for ((o, p), g) in self.encoders.iter_mut().zip(&mut model.encoders).zip(&grads.encoders) {
            if let (Some(o), Some(p), Some(g)) = (o, p.as_mut(), g) {
                o.step(p, g)?;
            }
        }
        if let (Some(o), Some(p), Some(g)) =
            (&mut self.fusion_head, model.fusion_head.as_mut(), &grads.fusion_head)
        {
            o.step(p, g)?;
        }
        for ((o, p), g) in self.heads.iter_mut().zip(&mut model.heads).zip(&grads.heads) {
            if let Some(o) = o {
                o.step(p, g)?;
            }
        }
        Ok(())
    }
}
