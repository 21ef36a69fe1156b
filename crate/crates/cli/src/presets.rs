//! Named configurations. The `synthetic-*` and `remix` presets carry the
//! full-size estimator tables; the `desk-*` presets shrink networks and
//! epochs so a full sweep finishes in minutes on one core.

use modcomp::complementarity::{CriticTemplate, EstimatorConfig, NormalizerMode};
use modcomp::datagen::{
    GeneratorConfig, MultiModalConfig, RemixDatasetConfig, SyntheticPoolConfig, TwoModalConfig,
    XorConfig,
};
use modcomp::harness::{PhaseConfig, Strategy};
use modcomp::mine::MineTrainConfig;
use modcomp::nn::{LrSchedule, LrStep, OptimizerConfig};

use crate::config::{
    BoundsSection, EstimateSection, ExperimentConfig, MetricKind, MissingSection, SweepParam,
    SweepSection,
};
use crate::error::{config_err, Result};

pub const NAMES: &[&str] = &[
    "synthetic-2mod",
    "synthetic-4mod",
    "remix",
    "desk-2mod",
    "desk-4mod",
    "desk-remix",
    "desk-xor",
    "bounds",
];

fn plain(hidden: &[usize]) -> CriticTemplate {
    CriticTemplate {
        hidden: hidden.to_vec(),
        label_concat_at: None,
        output_bound: None,
    }
}

fn labeled(hidden: &[usize], at: usize) -> CriticTemplate {
    CriticTemplate {
        hidden: hidden.to_vec(),
        label_concat_at: Some(at),
        output_bound: None,
    }
}

fn bounded(mut t: CriticTemplate, c: f64) -> CriticTemplate {
    t.output_bound = Some(c);
    t
}

fn estimator(
    plain: CriticTemplate,
    labeled: CriticTemplate,
    train: MineTrainConfig,
    subset: Vec<usize>,
    input_dims: &[usize],
) -> EstimateSection {
    EstimateSection {
        subset,
        input_dims: Some(input_dims.to_vec()),
        config: EstimatorConfig {
            plain,
            labeled,
            direct: None,
            train,
            direct_train: None,
            normalizer: NormalizerMode::Direct,
            pair: None,
        },
    }
}

fn perceptron_missing(strategies: Vec<Strategy>) -> MissingSection {
    MissingSection {
        strategies,
        hidden: 200,
        drop_probs: vec![0.3],
        lambda: 1.0,
        phase1: PhaseConfig::default(),
        phase2: None,
        freeze_encoders_in_phase2: false,
    }
}

fn sweep(param: SweepParam, values: &[f64], metric: MetricKind) -> SweepSection {
    SweepSection {
        param,
        values: values.to_vec(),
        seeds: vec![0, 1, 2],
        metric: Some(metric),
        skip_missing: false,
    }
}

const ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const SIGMAS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

fn synthetic_2mod() -> ExperimentConfig {
    ExperimentConfig {
        generator: Some(GeneratorConfig::TwoModal(TwoModalConfig::default())),
        estimator: Some(estimator(
            plain(&[1000, 500, 100]),
            labeled(&[1000, 200, 10, 12], 3),
            MineTrainConfig {
                epochs: 500,
                batch_size: 100,
                optimizer: OptimizerConfig::adam(1e-3, 2e-4),
                ..MineTrainConfig::default()
            },
            vec![0],
            &[200, 100],
        )),
        missing: Some(perceptron_missing(vec![Strategy::Naive, Strategy::UmeMma])),
        sweep: Some(sweep(SweepParam::Alpha, &ALPHAS, MetricKind::Pair)),
        ..ExperimentConfig::empty()
    }
}

fn synthetic_4mod() -> ExperimentConfig {
    ExperimentConfig {
        generator: Some(GeneratorConfig::MultiModal(MultiModalConfig::default())),
        estimator: Some(estimator(
            plain(&[1000, 500, 100]),
            labeled(&[1000, 500, 100, 12], 3),
            MineTrainConfig {
                epochs: 1000,
                batch_size: 1000,
                optimizer: OptimizerConfig::adam(1e-3, 2e-4),
                ..MineTrainConfig::default()
            },
            vec![1],
            &[50; 4],
        )),
        missing: Some(perceptron_missing(vec![Strategy::Naive, Strategy::UmeMma])),
        sweep: Some(sweep(SweepParam::Alpha, &ALPHAS, MetricKind::Subset)),
        ..ExperimentConfig::empty()
    }
}

fn remix() -> ExperimentConfig {
    let mut optimizer = OptimizerConfig::adam(1e-3, 1e-4);
    optimizer.schedule = LrSchedule {
        lr: 1e-3,
        steps: vec![LrStep {
            from_epoch: 40,
            lr: 1e-4,
        }],
    };
    ExperimentConfig {
        generator: Some(GeneratorConfig::Remix(RemixDatasetConfig::default())),
        estimator: Some(estimator(
            plain(&[1000, 100]),
            labeled(&[1000, 100, 110], 2),
            MineTrainConfig {
                epochs: 50,
                batch_size: 800,
                optimizer,
                ..MineTrainConfig::default()
            },
            vec![0],
            &[20, 20],
        )),
        missing: Some(perceptron_missing(vec![Strategy::Naive, Strategy::UmeMma])),
        sweep: Some(sweep(SweepParam::Sigma, &SIGMAS, MetricKind::Pair)),
        ..ExperimentConfig::empty()
    }
}

fn desk_train(epochs: usize, batch_size: usize) -> MineTrainConfig {
    MineTrainConfig {
        epochs,
        batch_size,
        optimizer: OptimizerConfig::adam(1e-3, 2e-4),
        clamp_nonnegative: true,
        replicates: 1,
        standardize: true,
        ..MineTrainConfig::default()
    }
}

fn desk_missing(strategies: Vec<Strategy>) -> MissingSection {
    MissingSection {
        phase1: PhaseConfig {
            epochs: 20,
            batch_size: 64,
            optimizer: OptimizerConfig::adam(1e-3, 0.0),
        },
        ..perceptron_missing(strategies)
    }
}

/// Output bound of every desk critic (objective capped at twice this).
pub const DESK_BOUND: f64 = 2.0;

fn desk_2mod() -> ExperimentConfig {
    ExperimentConfig {
        generator: Some(GeneratorConfig::TwoModal(TwoModalConfig::default())),
        estimator: Some(estimator(
            bounded(plain(&[256, 128, 32]), DESK_BOUND),
            bounded(labeled(&[256, 64, 10, 12], 3), DESK_BOUND),
            desk_train(50, 100),
            vec![0],
            &[200, 100],
        )),
        missing: Some(desk_missing(vec![Strategy::Naive, Strategy::UmeMma])),
        sweep: Some(sweep(SweepParam::Alpha, &ALPHAS, MetricKind::Pair)),
        ..ExperimentConfig::empty()
    }
}

fn desk_4mod() -> ExperimentConfig {
    ExperimentConfig {
        generator: Some(GeneratorConfig::MultiModal(MultiModalConfig {
            n: 4000,
            ..MultiModalConfig::default()
        })),
        estimator: Some(estimator(
            bounded(plain(&[256, 128, 32]), DESK_BOUND),
            bounded(labeled(&[256, 64, 10, 12], 3), DESK_BOUND),
            desk_train(50, 100),
            vec![1],
            &[50; 4],
        )),
        missing: Some(desk_missing(vec![Strategy::Naive, Strategy::UmeMma])),
        sweep: Some(sweep(SweepParam::Alpha, &ALPHAS, MetricKind::Subset)),
        ..ExperimentConfig::empty()
    }
}

fn desk_remix() -> ExperimentConfig {
    ExperimentConfig {
        // The (x, z, t) interaction has ~1000 cells; the default pools
        // leave the labelled critic too few rows per cell at large σ.
        generator: Some(GeneratorConfig::Remix(RemixDatasetConfig {
            pools: SyntheticPoolConfig {
                n_a: 10_000,
                per_class_b: 200,
                ..SyntheticPoolConfig::default()
            },
            ..RemixDatasetConfig::default()
        })),
        estimator: Some(estimator(
            bounded(plain(&[256, 64]), DESK_BOUND),
            bounded(labeled(&[256, 64, 64], 1), DESK_BOUND),
            desk_train(50, 100),
            vec![0],
            &[20, 20],
        )),
        missing: Some(desk_missing(vec![Strategy::Naive, Strategy::UmeMma])),
        sweep: Some(sweep(SweepParam::Sigma, &SIGMAS, MetricKind::Pair)),
        ..ExperimentConfig::empty()
    }
}

fn desk_xor() -> ExperimentConfig {
    ExperimentConfig {
        generator: Some(GeneratorConfig::Xor(XorConfig::default())),
        missing: Some(desk_missing(Strategy::ALL.to_vec())),
        ..ExperimentConfig::empty()
    }
}

fn bounds() -> ExperimentConfig {
    ExperimentConfig {
        bounds: Some(BoundsSection {
            count: 10_000,
            cap: 6,
            seed: 0,
        }),
        ..ExperimentConfig::empty()
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "synthetic-2mod" => synthetic_2mod(),
        "synthetic-4mod" => synthetic_4mod(),
        "remix" => remix(),
        "desk-2mod" => desk_2mod(),
        "desk-4mod" => desk_4mod(),
        "desk-remix" => desk_remix(),
        "desk-xor" => desk_xor(),
        "bounds" => bounds(),
        other => {
            return Err(config_err(format!(
                "unknown preset {other:?} (known: {})",
                NAMES.join(", ")
            )))
        }
    };
    Ok(ExperimentConfig {
        preset: Some(name.to_string()),
        ..cfg
    })
}
