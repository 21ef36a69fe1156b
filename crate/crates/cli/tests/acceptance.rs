//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- 1 4 11` runs a subset. The process
//! exits non-zero only when a criterion could not be evaluated at all; a
//! criterion that runs and misses its threshold prints FAIL with the
//! measured values.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use modcomp::complementarity::{
    estimate_gamma, CriticTemplate, EstimatorConfig, NormalizerMode, SubsetSpec,
};
use modcomp::datagen::{gen_xor, one_hot, split_dataset, MultiModalDataset, Provenance, Split, XorConfig};
use modcomp::harness::{
    draw_drop_masks, evaluate_missing, mask_modality, missing_aug_sample, missing_detect_decision,
    train, FusionModelSpec, Strategy,
};
use modcomp::linalg::Matrix;
use modcomp::mine::{train_mi, CriticSpec, MiSamples, MineTrainConfig};
use modcomp::nn::gradcheck::random_gradient_check;
use modcomp::nn::OptimizerConfig;
use modcomp::oracle::{
    complementary_info, conditional_entropy, entropy, interaction_info, mutual_info,
    verify_bounds, DiscreteJoint, Modality, Vars, BOUND_SLACK,
};
use modcomp::rng::Stream;
use modcomp_cli::commands::{
    cmd_sweep, counterexample_joint, random_regression_joint, SweepOutcome,
};
use modcomp_cli::config::ExperimentConfig;
use modcomp_cli::presets::preset;

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Check {
    Check {
        pass,
        detail: detail.into(),
    }
}

const JOINTS: usize = 10_000;
const CAP: usize = 6;

fn random_joints(seed: u64) -> impl Iterator<Item = DiscreteJoint> {
    let mut rng = Stream::new(seed, 0);
    (0..JOINTS).map(move |_| DiscreteJoint::random_capped(&mut rng, CAP).expect("joint"))
}

fn c1_identities() -> Check {
    let x = Vars::X;
    let z = Vars::Z;
    let y = Vars::Y;
    let none = Vars::NONE;
    let mut worst: f64 = 0.0;
    for j in random_joints(1) {
        let mi = |a, b, c| mutual_info(&j, a, b, c).unwrap();
        // I(X,Z;Y) = I(X;Y) + I(Z;Y|X)
        let chain = mi(x | z, y, none) - mi(x, y, none) - mi(z, y, x);
        // H(X,Z,Y) = H(X) + H(Z|X) + H(Y|X,Z)
        let entropy_chain = entropy(&j, x | z | y)
            - entropy(&j, x)
            - conditional_entropy(&j, z, x)
            - conditional_entropy(&j, y, x | z);
        let gamma_z = complementary_info(&j, Modality::Z) - conditional_entropy(&j, y, x)
            + conditional_entropy(&j, y, x | z);
        let decomposition = complementary_info(&j, Modality::X)
            + complementary_info(&j, Modality::Z)
            + interaction_info(&j)
            - mi(x | z, y, none);
        for r in [chain, entropy_chain, gamma_z, decomposition] {
            worst = worst.max(r.abs());
        }
    }
    check(worst < 1e-9, format!("max residual {worst:.2e} over {JOINTS} joints"))
}

fn c2_bounds() -> Check {
    let mut violations = 0;
    for j in random_joints(2) {
        let r = verify_bounds(&j);
        violations += usize::from(!r.complete.holds()) + usize::from(!r.missing_bound.holds());
    }
    let u = DiscreteJoint::from_fn(2, 3, 4, |_, _, _| 1.0).unwrap();
    let r = verify_bounds(&u);
    let attained = (r.complete.upper - 0.75).abs() < 1e-12 && (r.complete.value - 0.75).abs() < 1e-12;
    check(
        violations == 0 && attained,
        format!(
            "{violations} violations (slack {BOUND_SLACK:e}); uniform |Y|=4: P_e {:.15}, upper {:.15}",
            r.complete.value, r.complete.upper
        ),
    )
}

fn c3_regression() -> Check {
    let mut rng = Stream::new(3, 0);
    let mut worst: f64 = 0.0;
    let mut two_gamma = 0;
    let mut half_exceed = 0;
    for _ in 0..JOINTS {
        let j = random_regression_joint(&mut rng, CAP).unwrap();
        let reg = verify_bounds(&j).regression.unwrap();
        worst = worst.max((reg.gap - reg.gap_direct).abs());
        two_gamma += usize::from(!reg.within_two_gamma);
        half_exceed += usize::from(!reg.within_half_gamma);
    }
    let cx = verify_bounds(&counterexample_joint()).regression.unwrap();
    let flagged = (cx.gap - 1.0).abs() < 1e-12
        && (cx.half_gamma - 0.3466).abs() < 1e-4
        && !cx.within_half_gamma
        && cx.within_two_gamma;
    check(
        worst < 1e-12 && two_gamma == 0 && flagged,
        format!(
            "gap identity residual {worst:.1e}; 2Γ violations {two_gamma}; \
             ½Γ exceedances {half_exceed} (recorded); counterexample gap {:.4} vs ½Γ {:.4}",
            cx.gap, cx.half_gamma
        ),
    )
}

fn c4_gradients() -> Check {
    let mut rng = Stream::new(4, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        worst = worst.max(random_gradient_check(&mut rng, 1e-5).unwrap().max_rel_error);
    }
    check(worst < 1e-4, format!("max relative error {worst:.2e} over 100 networks"))
}

fn gaussian_pair(n: usize, rho: f64, seed: u64) -> MiSamples {
    let mut r = Stream::new(seed, 0);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let u = r.normal();
        let v = r.normal();
        a.push(u);
        b.push(rho * u + (1.0 - rho * rho).sqrt() * v);
    }
    MiSamples::new(Matrix::from_vec(n, 1, a), Matrix::from_vec(n, 1, b), None).unwrap()
}

fn small_train(epochs: usize, batch: usize, lr: f64) -> MineTrainConfig {
    MineTrainConfig {
        epochs,
        batch_size: batch,
        replicates: 3,
        optimizer: OptimizerConfig::adam(lr, 0.0),
        ..MineTrainConfig::default()
    }
}

fn c5_gaussian() -> Check {
    let critic = CriticSpec::plain(2, &[64, 32]).unwrap();
    let cfg = small_train(40, 200, 2e-3);
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, rho) in [0.0, 0.5, 0.9].into_iter().enumerate() {
        let train = gaussian_pair(5000, rho, 50 + k as u64);
        let val = gaussian_pair(5000, rho, 60 + k as u64);
        let est = train_mi(&train, &val, &critic, &cfg).unwrap();
        let truth = -0.5 * (1.0f64 - rho * rho).ln() + 0.0;
        ok &= (est.value - truth).abs() <= 0.10;
        parts.push(format!("ρ={rho}: {:.4} (truth {truth:.4})", est.value));
    }
    check(ok, parts.join("; "))
}

fn one_hot_dataset(pairs: &[(usize, usize, usize)], k: usize) -> MultiModalDataset {
    let xs: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let zs: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let ys: Vec<usize> = pairs.iter().map(|p| p.2).collect();
    MultiModalDataset::new(
        vec![one_hot(&xs, k), one_hot(&zs, k)],
        ys,
        2,
        Split::All,
        Provenance::external("one-hot discrete pairs"),
    )
    .unwrap()
}

fn c6_discrete_agreement() -> Check {
    let mut rng = Stream::new(6, 0);
    // X = Z uniform over four symbols: I(X;Z) = ln 4.
    let copies: Vec<(usize, usize, usize)> = (0..5000)
        .map(|_| {
            let s = rng.below(4);
            (s, s, s % 2)
        })
        .collect();
    let ds = one_hot_dataset(&copies, 4);
    let (train, val) = split_dataset(ds, 0.8, 1).unwrap();
    let samples = |d: &MultiModalDataset| {
        MiSamples::new(d.modality(0).clone(), d.modality(1).clone(), None).unwrap()
    };
    let critic = CriticSpec::plain(8, &[32, 16]).unwrap();
    let cfg = small_train(40, 200, 2e-3);
    let copy = train_mi(&samples(&train), &samples(&val), &critic, &cfg).unwrap();
    let copy_truth = 4f64.ln();

    // XOR triple: Γ_X = I(X;Y,Z) − I(X;Z) = ln 2.
    let xor: Vec<(usize, usize, usize)> = (0..5000)
        .map(|_| {
            let (x, z) = (rng.below(2), rng.below(2));
            (x, z, x ^ z)
        })
        .collect();
    let (train, val) = split_dataset(one_hot_dataset(&xor, 2), 0.8, 2).unwrap();
    let est_cfg = EstimatorConfig {
        plain: CriticTemplate {
            hidden: vec![32, 16],
            label_concat_at: None,
            output_bound: None,
        },
        labeled: CriticTemplate {
            hidden: vec![32, 16],
            label_concat_at: Some(1),
            output_bound: None,
        },
        direct: None,
        train: cfg,
        direct_train: None,
        normalizer: NormalizerMode::Direct,
        pair: None,
    };
    let g = estimate_gamma(&train, &val, &SubsetSpec::new(vec![0], 2).unwrap(), &est_cfg).unwrap();
    let xor_truth = std::f64::consts::LN_2;
    let ok = (copy.value - copy_truth).abs() <= 0.1 && (g.raw - xor_truth).abs() <= 0.1;
    check(
        ok,
        format!(
            "X=Z: {:.4} (truth {copy_truth:.4}); XOR Γ_X: {:.4} (truth {xor_truth:.4})",
            copy.value, g.raw
        ),
    )
}

fn run_sweep(name: &str, cfg: &ExperimentConfig) -> Result<SweepOutcome, String> {
    let dir = tempfile::Builder::new()
        .prefix(name)
        .tempdir()
        .map_err(|e| e.to_string())?;
    cmd_sweep(cfg, dir.path(), 1).map_err(|e| e.to_string())
}

fn two_modal_sweep() -> &'static Result<SweepOutcome, String> {
    static CELL: OnceLock<Result<SweepOutcome, String>> = OnceLock::new();
    CELL.get_or_init(|| run_sweep("alpha-sweep", &preset("desk-2mod").unwrap()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:+.3}"))
}

fn metric_means(o: &SweepOutcome) -> String {
    o.summary
        .values
        .iter()
        .map(|v| match &v.metric {
            Some(m) => format!("{}:{:.3}", v.value, m.mean),
            None => format!("{}:-", v.value),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn c7_alpha_sweep() -> Check {
    let o = match two_modal_sweep() {
        Ok(o) => o,
        Err(e) => return check(false, format!("sweep failed: {e}")),
    };
    let metric = o.summary.spearman_metric;
    let ratios: Vec<String> = o
        .summary
        .strategies
        .iter()
        .zip(&o.summary.spearman_ratio)
        .map(|(s, r)| format!("{} {}", s.name(), fmt_opt(*r)))
        .collect();
    let best_ratio = o
        .summary
        .spearman_ratio
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    check(
        metric.is_some_and(|m| m <= -0.8) && best_ratio >= 0.8,
        format!(
            "spearman(metric_pair, α) {}; spearman(ratio, α): {}; means {}",
            fmt_opt(metric),
            ratios.join(", "),
            metric_means(o)
        ),
    )
}

fn metric_only(name: &str) -> ExperimentConfig {
    let mut cfg = preset(name).unwrap();
    if let Some(s) = &mut cfg.sweep {
        s.skip_missing = true;
    }
    cfg
}

fn c8_subset_sweep() -> Check {
    match run_sweep("subset-sweep", &metric_only("desk-4mod")) {
        Ok(o) => check(
            o.summary.spearman_metric.is_some_and(|m| m <= -0.8),
            format!(
                "spearman(metric_subset, α) {}; means {}",
                fmt_opt(o.summary.spearman_metric),
                metric_means(&o)
            ),
        ),
        Err(e) => check(false, format!("sweep failed: {e}")),
    }
}

fn c9_sigma_sweep() -> Check {
    match run_sweep("sigma-sweep", &metric_only("desk-remix")) {
        Ok(o) => check(
            o.summary.spearman_metric.is_some_and(|m| m >= 0.8),
            format!(
                "spearman(metric_pair, σ) {}; means {}",
                fmt_opt(o.summary.spearman_metric),
                metric_means(&o)
            ),
        ),
        Err(e) => check(false, format!("sweep failed: {e}")),
    }
}

fn c10_strategy_ordering() -> Check {
    let o = match two_modal_sweep() {
        Ok(o) => o,
        Err(e) => return check(false, format!("sweep failed: {e}")),
    };
    let at = o.summary.values.iter().find(|v| v.value == 0.25);
    let idx = |s: Strategy| o.summary.strategies.iter().position(|&t| t == s);
    let mean_ratio = |s: Strategy| -> Option<f64> {
        Some(at?.ratio[idx(s)?].as_ref()?.mean)
    };
    let (ume, naive) = (mean_ratio(Strategy::UmeMma), mean_ratio(Strategy::Naive));
    let ordered = matches!((ume, naive), (Some(u), Some(n)) if u >= n);

    let ds_cfg = XorConfig::default();
    let (train_ds, val) = gen_xor(&ds_cfg).unwrap();
    let section = preset("desk-xor").unwrap().missing.unwrap();
    let mut xor_ok = true;
    let mut parts = Vec::new();
    for &s in &section.strategies {
        let mut spec = FusionModelSpec::perceptron(&train_ds.dims(), section.hidden, 2);
        if s == Strategy::MissingDetect {
            spec = spec.with_missing_class();
        }
        match train(&train_ds, &spec, &section.strategy_config(s, 0))
            .and_then(|m| evaluate_missing(&m, &val))
        {
            Ok(r) => {
                xor_ok &= r.missing_accuracy.iter().all(|a| (a - 0.5).abs() <= 0.05);
                parts.push(format!(
                    "{} [{}]",
                    s.name(),
                    r.missing_accuracy
                        .iter()
                        .map(|a| format!("{a:.3}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                ));
            }
            Err(e) => {
                xor_ok = false;
                parts.push(format!("{} error: {e}", s.name()));
            }
        }
    }
    check(
        ordered && xor_ok,
        format!(
            "α=0.25 mean ratio: ume_mma {} vs naive {}; xor missing accuracy: {}",
            fmt_opt(ume),
            fmt_opt(naive),
            parts.join("; ")
        ),
    )
}

/// Reference decision: average the real-class logits of every head whose
/// largest entry is not the "missing" logit; fall back to all heads when
/// none or all of them are trusted.
fn detect_reference(rows: &[Vec<f64>], k: usize) -> usize {
    let first_max = |r: &[f64]| {
        let mut best = 0;
        for i in 1..r.len() {
            if r[i] > r[best] {
                best = i;
            }
        }
        best
    };
    let trusted: Vec<&Vec<f64>> = rows.iter().filter(|r| first_max(r) != k).collect();
    let pool: Vec<&Vec<f64>> = if trusted.is_empty() || trusted.len() == rows.len() {
        rows.iter().collect()
    } else {
        trusted
    };
    let mut sum = vec![0.0; k];
    for r in &pool {
        for c in 0..k {
            sum[c] += r[c];
        }
    }
    let avg: Vec<f64> = sum.iter().map(|s| s / pool.len() as f64).collect();
    first_max(&avg)
}

fn c11_harness() -> Check {
    let mut rng = Stream::new(11, 0);
    let masks = draw_drop_masks(100_000, &[0.5, 0.5], &mut rng).unwrap();
    let joint_drops = masks.iter().filter(|m| m.iter().all(|&d| d)).count();
    let inputs = vec![
        Matrix::from_vec(100_000, 1, vec![1.0; 100_000]),
        Matrix::from_vec(100_000, 1, vec![2.0; 100_000]),
    ];
    let (aug, aug_masks) = missing_aug_sample(&inputs, &[0.9, 0.9], 12).unwrap();
    let aug_joint = (0..100_000)
        .filter(|&i| aug[0].row(i)[0] == 0.0 && aug[1].row(i)[0] == 0.0)
        .count();
    let aug_consistent = (0..100_000).all(|i| {
        (aug[0].row(i)[0] == 0.0) == aug_masks[i][0] && (aug[1].row(i)[0] == 0.0) == aug_masks[i][1]
    });

    let mut r = Stream::new(13, 0);
    let feats = vec![
        Matrix::from_vec(7, 3, r.normal_vec(21)),
        Matrix::from_vec(7, 5, r.normal_vec(35)),
    ];
    let once = mask_modality(&feats, 0).unwrap();
    let twice = mask_modality(&once, 0).unwrap();
    let masking = once == twice
        && once[0].as_slice().iter().all(|&v| v == 0.0)
        && once[1] == feats[1];

    let grid = [-1.0, 0.0, 0.5, 2.0];
    let k = 2;
    let mut mismatches = 0;
    let mut cases = 0;
    let mut rows = vec![vec![0.0; k + 1]; 2];
    let total = grid.len().pow(2 * (k as u32 + 1));
    for code in 0..total {
        let mut c = code;
        for row in rows.iter_mut() {
            for v in row.iter_mut() {
                *v = grid[c % grid.len()];
                c /= grid.len();
            }
        }
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        mismatches += usize::from(missing_detect_decision(&refs, k) != detect_reference(&rows, k));
        cases += 1;
    }
    check(
        joint_drops == 0 && aug_joint == 0 && aug_consistent && masking && mismatches == 0,
        format!(
            "joint drops {joint_drops} + {aug_joint} over 2×10⁵ draws; masking exact/idempotent {masking}; \
             detect mismatches {mismatches}/{cases}"
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 11] = [
        (1, "oracle identities", c1_identities),
        (2, "classification error bounds", c2_bounds),
        (3, "regression bound", c3_regression),
        (4, "gradient check", c4_gradients),
        (5, "gaussian MI regression", c5_gaussian),
        (6, "oracle-estimator agreement", c6_discrete_agreement),
        (7, "alpha-sweep trend", c7_alpha_sweep),
        (8, "4-modality subset trend", c8_subset_sweep),
        (9, "sigma-sweep trend", c9_sigma_sweep),
        (10, "strategy ordering", c10_strategy_ordering),
        (11, "harness mechanics", c11_harness),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut passed = 0;
    let mut failed = 0;
    let mut errored = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(c) => {
                let tag = if c.pass { "PASS" } else { "FAIL" };
                if c.pass {
                    passed += 1;
                } else {
                    failed += 1;
                }
                println!("criterion {id:>2} {tag} {name}: {} [{secs:.1}s]", c.detail);
            }
            Err(_) => {
                errored += 1;
                println!("criterion {id:>2} FAIL {name}: panicked [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed, {errored} errored");
    if errored > 0 {
        std::process::exit(1);
    }
}
