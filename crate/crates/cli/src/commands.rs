use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use modcomp::complementarity::{estimate_complementarity, ComplementarityReport, SubsetSpec};
use modcomp::datagen::{
    gen_multi_modal_traced, gen_two_modal_traced, load_dataset, regenerate, save_dataset,
    GenerationStats, GeneratorConfig, MultiModalDataset,
};
use modcomp::harness::{evaluate_missing, save_model, train, EvalReport, FusionModelSpec, Strategy};
use modcomp::oracle::{verify_bounds, DiscreteJoint, YRange};
use modcomp::rng::Stream;
use modcomp::stats::{mean, spearman, std_dev};

use crate::config::{
    with_param, EstimateSection, ExperimentConfig, MetricKind, MissingSection, SweepParam,
};
use crate::error::{config_err, Result};
use crate::table::{self, StrategyCell, SweepRow, SweepWriter};

/// Generates and writes `<out>/train` and `<out>/val`.
#[derive(Debug, Clone, Serialize)]
pub struct GenOutcome {
    pub train_histogram: Vec<usize>,
    pub val_histogram: Vec<usize>,
    pub stats: Option<GenerationStats>,
}

pub fn generate(g: &GeneratorConfig) -> Result<(MultiModalDataset, MultiModalDataset, Option<GenerationStats>)> {
    Ok(match g {
        GeneratorConfig::TwoModal(c) => {
            let (t, v, trace) = gen_two_modal_traced(c)?;
            (t, v, Some(trace.stats))
        }
        GeneratorConfig::MultiModal(c) => {
            let (t, v, trace) = gen_multi_modal_traced(c)?;
            (t, v, Some(trace.stats))
        }
        other => {
            let (t, v) = regenerate(other)?;
            (t, v, None)
        }
    })
}

pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> Result<GenOutcome> {
    let (train, val, stats) = generate(cfg.generator()?)?;
    save_dataset(&train, &out.join("train"))?;
    save_dataset(&val, &out.join("val"))?;
    Ok(GenOutcome {
        train_histogram: train.class_histogram(),
        val_histogram: val.class_histogram(),
        stats,
    })
}

/// Loads `<dir>/train` and `<dir>/val`.
pub fn load_split(dir: &Path) -> Result<(MultiModalDataset, MultiModalDataset)> {
    Ok((load_dataset(&dir.join("train"))?, load_dataset(&dir.join("val"))?))
}

fn check_dims(section: &EstimateSection, ds: &MultiModalDataset) -> Result<()> {
    if let Some(expected) = &section.input_dims {
        if *expected != ds.dims() {
            return Err(config_err(format!(
                "dataset modality dims {:?} do not match estimator input dims {expected:?}",
                ds.dims()
            )));
        }
    }
    Ok(())
}

pub fn run_estimate(
    train: &MultiModalDataset,
    val: &MultiModalDataset,
    section: &EstimateSection,
) -> Result<ComplementarityReport> {
    check_dims(section, train)?;
    let subset = SubsetSpec::new(section.subset.clone(), train.num_modalities())?;
    Ok(estimate_complementarity(train, val, &subset, &section.config)?)
}

pub fn cmd_estimate(
    cfg: &ExperimentConfig,
    dataset: &Path,
    out: &Path,
) -> Result<ComplementarityReport> {
    let (train, val) = load_split(dataset)?;
    let report = run_estimate(&train, &val, cfg.estimator()?)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.json"), report.to_json()?)?;
    Ok(report)
}

fn model_spec(section: &MissingSection, ds: &MultiModalDataset, s: Strategy) -> FusionModelSpec {
    let spec = FusionModelSpec::perceptron(&ds.dims(), section.hidden, ds.num_classes());
    if s == Strategy::MissingDetect {
        spec.with_missing_class()
    } else {
        spec
    }
}

/// Trains and evaluates one strategy, optionally persisting the model.
pub fn run_strategy(
    section: &MissingSection,
    strategy: Strategy,
    seed: u64,
    train_ds: &MultiModalDataset,
    val: &MultiModalDataset,
    save_to: Option<&Path>,
) -> Result<EvalReport> {
    let spec = model_spec(section, train_ds, strategy);
    let model = train(train_ds, &spec, &section.strategy_config(strategy, seed))?;
    if let Some(dir) = save_to {
        save_model(&model, dir, strategy.name())?;
    }
    Ok(evaluate_missing(&model, val)?)
}

#[derive(Debug, Serialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    /// Exit status the error maps to, when there is one.
    #[serde(skip)]
    pub exit_code: Option<i32>,
}

/// Trains every listed strategy; a failing strategy is reported without
/// stopping the others.
pub fn cmd_train_missing(
    cfg: &ExperimentConfig,
    dataset: &Path,
    out: &Path,
    seed: u64,
) -> Result<Vec<StrategyOutcome>> {
    let section = cfg.missing()?;
    let (train_ds, val) = load_split(dataset)?;
    let models = out.join("models");
    let mut outcomes = Vec::new();
    for &s in &section.strategies {
        let res = run_strategy(section, s, seed, &train_ds, &val, Some(&models));
        outcomes.push(match res {
            Ok(r) => StrategyOutcome {
                strategy: s,
                report: Some(r),
                error: None,
                exit_code: None,
            },
            Err(e) => StrategyOutcome {
                strategy: s,
                report: None,
                exit_code: Some(e.exit_code()),
                error: Some(e.to_string()),
            },
        });
    }
    let m = train_ds.num_modalities();
    let mut header = vec!["strategy".to_string(), "clean_accuracy".to_string()];
    header.extend((0..m).map(|i| format!("missing_accuracy_{i}")));
    header.extend(["robustness_ratio".to_string(), "error".to_string()]);
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            let mut r = vec![o.strategy.name().to_string()];
            match &o.report {
                Some(rep) => {
                    r.push(rep.clean_accuracy.to_string());
                    r.extend(rep.missing_accuracy.iter().map(|v| v.to_string()));
                    r.push(rep.robustness_ratio.to_string());
                }
                None => r.extend(std::iter::repeat_n(String::new(), m + 2)),
            }
            r.push(o.error.clone().unwrap_or_default());
            r
        })
        .collect();
    std::fs::create_dir_all(out)?;
    table::write_table(&out.join("strategies.csv"), table::COMPARISON_SCHEMA, &header, &rows)?;
    std::fs::write(
        out.join("strategies.json"),
        serde_json::to_string_pretty(&outcomes)?,
    )?;
    Ok(outcomes)
}

/// One sweep cell: generate, estimate, train and evaluate each strategy.
pub fn sweep_cell(cfg: &ExperimentConfig, value: f64, seed: u64) -> SweepRow {
    let t0 = Instant::now();
    let sweep = cfg.sweep.as_ref().expect("validated sweep");
    let strategies: Vec<Strategy> = match (&cfg.missing, sweep.skip_missing) {
        (Some(m), false) => m.strategies.clone(),
        _ => vec![],
    };
    let param = sweep.param.name();
    let run = || -> Result<SweepRow> {
        let g = with_param(cfg.generator()?, sweep.param, value, seed)?;
        let (train_ds, val) = generate(&g)?.into_tuple();
        let mut est = cfg.estimator()?.clone();
        est.config.train.seed = seed;
        if let Some(t) = &mut est.config.direct_train {
            t.seed = seed;
        }
        let r = run_estimate(&train_ds, &val, &est)?;
        let mut cells = Vec::with_capacity(strategies.len());
        let mut first_err = None;
        for &s in &strategies {
            let section = cfg.missing.as_ref().expect("strategies imply a section");
            match run_strategy(section, s, seed, &train_ds, &val, None) {
                Ok(rep) => cells.push(Some(StrategyCell {
                    clean: rep.clean_accuracy,
                    missing: rep.missing_accuracy,
                    ratio: rep.robustness_ratio,
                })),
                Err(e) => {
                    first_err.get_or_insert_with(|| format!("{}: {e}", s.name()));
                    cells.push(None);
                }
            }
        }
        Ok(SweepRow {
            param: param.to_string(),
            value,
            seed,
            i_xz: Some(r.i_xz.value),
            i_x_yz: Some(r.i_x_yz.value),
            i_z_yx: r.i_z_yx.as_ref().map(|e| e.value),
            i_sy: Some(r.i_sy.value),
            gamma_x_raw: Some(r.gamma_x_raw),
            gamma_x: Some(r.gamma_x),
            gamma_z_raw: r.gamma_z_raw,
            gamma_z: r.gamma_z,
            metric_pair: r.metric_pair,
            metric_subset: r.metric_subset,
            undefined: Some(r.undefined),
            strategies: cells,
            seconds: 0.0,
            error: first_err,
        })
    };
    let mut row = run().unwrap_or_else(|e| {
        SweepRow::failed(param, value, seed, strategies.len(), e.to_string())
    });
    row.seconds = t0.elapsed().as_secs_f64();
    row
}

trait IntoTuple {
    fn into_tuple(self) -> (MultiModalDataset, MultiModalDataset);
}

impl IntoTuple for (MultiModalDataset, MultiModalDataset, Option<GenerationStats>) {
    fn into_tuple(self) -> (MultiModalDataset, MultiModalDataset) {
        (self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

fn mean_std(v: &[f64]) -> Option<MeanStd> {
    if v.is_empty() {
        return None;
    }
    Some(MeanStd {
        mean: mean(v),
        std: if v.len() > 1 { std_dev(v) } else { 0.0 },
        n: v.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSummary {
    pub value: f64,
    pub rows: usize,
    pub failed: usize,
    pub metric: Option<MeanStd>,
    /// Per strategy, aligned with [`SweepSummary::strategies`].
    pub ratio: Vec<Option<MeanStd>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub param: String,
    pub metric: MetricKind,
    pub strategies: Vec<Strategy>,
    pub values: Vec<ValueSummary>,
    /// Spearman correlation between the grid and the per-value mean metric;
    /// `None` when some grid value has no defined metric.
    pub spearman_metric: Option<f64>,
    pub spearman_ratio: Vec<Option<f64>>,
}

fn spearman_of(values: &[f64], means: &[Option<f64>]) -> Option<f64> {
    let m: Option<Vec<f64>> = means.iter().copied().collect();
    let m = m?;
    if values.len() < 2 {
        return None;
    }
    let r = spearman(values, &m);
    r.is_finite().then_some(r)
}

/// Reduces sweep rows to per-value statistics and trend correlations.
pub fn summarize(
    param: SweepParam,
    metric: MetricKind,
    grid: &[f64],
    strategies: &[Strategy],
    rows: &[SweepRow],
) -> SweepSummary {
    let values: Vec<ValueSummary> = grid
        .iter()
        .map(|&v| {
            let here: Vec<&SweepRow> = rows.iter().filter(|r| r.value == v).collect();
            let metrics: Vec<f64> = here
                .iter()
                .filter_map(|r| match metric {
                    MetricKind::Pair => r.metric_pair,
                    MetricKind::Subset => r.metric_subset,
                })
                .collect();
            let ratio = (0..strategies.len())
                .map(|k| {
                    let v: Vec<f64> = here
                        .iter()
                        .filter_map(|r| r.strategies.get(k).cloned().flatten().map(|c| c.ratio))
                        .collect();
                    mean_std(&v)
                })
                .collect();
            ValueSummary {
                value: v,
                rows: here.len(),
                failed: here.iter().filter(|r| r.i_xz.is_none()).count(),
                metric: mean_std(&metrics),
                ratio,
            }
        })
        .collect();
    let metric_means: Vec<Option<f64>> =
        values.iter().map(|v| v.metric.as_ref().map(|m| m.mean)).collect();
    let spearman_ratio = (0..strategies.len())
        .map(|k| {
            let means: Vec<Option<f64>> = values
                .iter()
                .map(|v| v.ratio[k].as_ref().map(|m| m.mean))
                .collect();
            spearman_of(grid, &means)
        })
        .collect();
    SweepSummary {
        param: param.name().to_string(),
        metric,
        strategies: strategies.to_vec(),
        spearman_metric: spearman_of(grid, &metric_means),
        values,
        spearman_ratio,
    }
}

fn write_summary(out: &Path, s: &SweepSummary) -> Result<()> {
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(s)?)?;
    let mut header = vec![
        "value".to_string(),
        "rows".to_string(),
        "failed".to_string(),
        "metric_mean".to_string(),
        "metric_std".to_string(),
    ];
    for st in &s.strategies {
        header.push(format!("{}_ratio_mean", st.name()));
        header.push(format!("{}_ratio_std", st.name()));
    }
    let opt = |m: &Option<MeanStd>| -> [String; 2] {
        match m {
            Some(m) => [m.mean.to_string(), m.std.to_string()],
            None => [String::new(), String::new()],
        }
    };
    let mut rows: Vec<Vec<String>> = s
        .values
        .iter()
        .map(|v| {
            let mut r = vec![v.value.to_string(), v.rows.to_string(), v.failed.to_string()];
            r.extend(opt(&v.metric));
            for m in &v.ratio {
                r.extend(opt(m));
            }
            r
        })
        .collect();
    let fmt = |x: &Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut sp = vec![
        "spearman".to_string(),
        String::new(),
        String::new(),
        fmt(&s.spearman_metric),
        String::new(),
    ];
    for r in &s.spearman_ratio {
        sp.push(fmt(r));
        sp.push(String::new());
    }
    rows.push(sp);
    table::write_table(&out.join("summary.csv"), table::SUMMARY_SCHEMA, &header, &rows)
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
    pub table: PathBuf,
}

/// Runs every (value, seed) cell not already present in `<out>/sweep.csv`,
/// then rewrites the table in grid order and writes the summary.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, parallel: usize) -> Result<SweepOutcome> {
    let sweep = cfg.sweep()?;
    cfg.generator()?;
    cfg.estimator()?;
    let strategies: Vec<Strategy> = match (&cfg.missing, sweep.skip_missing) {
        (Some(m), false) => m.strategies.clone(),
        _ => vec![],
    };
    let num_modalities = match cfg.generator()? {
        GeneratorConfig::MultiModal(c) => c.m,
        _ => 2,
    };
    let metric = sweep.metric.unwrap_or(if num_modalities == 2 {
        MetricKind::Pair
    } else {
        MetricKind::Subset
    });
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), toml::to_string(cfg).map_err(|e| config_err(e.to_string()))?)?;
    let path = out.join("sweep.csv");
    let done: Vec<SweepRow> = if path.exists() {
        table::read_sweep(&path)?.1
    } else {
        vec![]
    };
    let writer = Mutex::new(SweepWriter::open(&path, &strategies)?);
    let todo: Vec<(f64, u64)> = sweep
        .values
        .iter()
        .flat_map(|&v| sweep.seeds.iter().map(move |&s| (v, s)))
        .filter(|(v, s)| !done.iter().any(|r| r.value == *v && r.seed == *s && r.error.is_none()))
        .collect();
    let run = |&(v, s): &(f64, u64)| -> Result<()> {
        let row = sweep_cell(cfg, v, s);
        writer.lock().expect("writer lock").append(&row)
    };
    let results: Vec<Result<()>> = if parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| config_err(format!("thread pool: {e}")))?;
        pool.install(|| todo.par_iter().map(run).collect())
    } else {
        todo.iter().map(run).collect()
    };
    results.into_iter().collect::<Result<()>>()?;
    drop(writer);

    // Keep the latest row per cell, in grid order.
    let (_, all) = table::read_sweep(&path)?;
    let mut rows = Vec::new();
    for &v in &sweep.values {
        for &s in &sweep.seeds {
            let pick = all
                .iter()
                .filter(|r| r.value == v && r.seed == s)
                .max_by_key(|r| r.error.is_none());
            if let Some(r) = pick {
                rows.push(r.clone());
            }
        }
    }
    table::write_sweep(&path, &strategies, &rows)?;
    let summary = summarize(sweep.param, metric, &sweep.values, &strategies, &rows);
    write_summary(out, &summary)?;
    Ok(SweepOutcome {
        rows,
        summary,
        table: path,
    })
}

/// Counts from [`cmd_verify_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSummary {
    pub count: usize,
    pub cap: usize,
    pub seed: u64,
    pub complete_violations: usize,
    pub missing_violations: usize,
    pub two_gamma_violations: usize,
    /// Joints whose regression gap exceeds `Γ_Z / 2` (the constant that
    /// applies to labels in [0, 1], evaluated here on [-1, 1] labels).
    pub half_gamma_exceedances: usize,
    /// Largest `gap / Γ_Z` seen (0 when every Γ_Z is 0).
    pub max_gap_over_gamma: f64,
    pub counterexample: Counterexample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub gap: f64,
    pub half_gamma: f64,
    pub two_gamma: f64,
    /// Set because the gap exceeds `Γ_Z / 2`.
    pub flagged: bool,
}

/// X uniform on two symbols independent of Z; Y = Z on {-1, 1}.
pub fn counterexample_joint() -> DiscreteJoint {
    DiscreteJoint::from_fn(2, 2, 2, |_, z, y| if z == y { 0.25 } else { 0.0 })
        .and_then(|j| j.with_y_values(vec![-1.0, 1.0], YRange::Symmetric))
        .expect("valid joint")
}

/// Random joint with label values drawn uniformly from [-1, 1].
pub fn random_regression_joint(rng: &mut Stream, cap: usize) -> Result<DiscreteJoint> {
    let j = DiscreteJoint::random_capped(rng, cap)?;
    let values = (0..j.ny()).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    Ok(j.with_y_values(values, YRange::Symmetric)?)
}

pub fn cmd_verify_bounds(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<BoundsSummary> {
    let b = cfg.bounds()?;
    let mut rng = Stream::new(b.seed, 0);
    let mut s = BoundsSummary {
        count: b.count,
        cap: b.cap,
        seed: b.seed,
        complete_violations: 0,
        missing_violations: 0,
        two_gamma_violations: 0,
        half_gamma_exceedances: 0,
        max_gap_over_gamma: 0.0,
        counterexample: {
            let r = verify_bounds(&counterexample_joint());
            let reg = r.regression.expect("regression joint");
            Counterexample {
                gap: reg.gap,
                half_gamma: reg.half_gamma,
                two_gamma: reg.two_gamma,
                flagged: !reg.within_half_gamma,
            }
        },
    };
    for _ in 0..b.count {
        let j = random_regression_joint(&mut rng, b.cap)?;
        let r = verify_bounds(&j);
        s.complete_violations += usize::from(!r.complete.holds());
        s.missing_violations += usize::from(!r.missing_bound.holds());
        let reg = r.regression.expect("regression joint");
        s.two_gamma_violations += usize::from(!reg.within_two_gamma);
        s.half_gamma_exceedances += usize::from(!reg.within_half_gamma);
        if r.gamma_missing > 1e-12 {
            s.max_gap_over_gamma = s.max_gap_over_gamma.max(reg.gap / r.gamma_missing);
        }
    }
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("bounds.json"), serde_json::to_string_pretty(&s)?)?;
    }
    Ok(s)
}
