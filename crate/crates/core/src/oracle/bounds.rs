//! Bayes errors and the entropy bounds that sandwich them.
//!
//! For classification, with Z missing:
//!
//! ```text
//! (H(Y|X,Z) - ln 2) / ln|Y|        <= P_ec      <= 1 - exp(-H(Y|X,Z))
//! (H(Y|X,Z) + Γ_Z - ln 2) / ln|Y|  <= P_ec^miss <= 1 - exp(-H(Y|X,Z) - Γ_Z)
//! ```
//!
//! For regression the gap `P_er^miss - P_er` equals
//! `E[(E[Y|x] - E[Y|x,z])^2]`. A Pinsker argument bounds it by `Γ_Z / 2`
//! when Y lies in [0, 1] and by `2 Γ_Z` when Y lies in [-1, 1]; both
//! constants are evaluated and recorded.

use serde::{Deserialize, Serialize};

use super::info::{complementary_info, conditional_entropy, interaction_info, mutual_info};
use super::joint::{DiscreteJoint, Modality, Vars, YRange};
use crate::error::{Error, Result};

/// Slack applied when deciding whether an inequality holds.
pub const BOUND_SLACK: f64 = 1e-9;

/// Variables a predictor sees when `missing` is dropped.
fn observed(missing: Option<Modality>) -> Vars {
    match missing {
        None => Vars::X | Vars::Z,
        Some(m) => m.other().var(),
    }
}

/// Per observed cell `c`, the label masses `P(c, y)`.
fn cell_label_masses(joint: &DiscreteJoint, missing: Option<Modality>) -> (Vec<f64>, usize) {
    let vars = observed(missing) | Vars::Y;
    (joint.marginal(vars), joint.ny())
}

/// `E_c[1 - max_y P(y | c)]`, where `c` is (x, z) or the surviving modality.
pub fn bayes_error_classification(joint: &DiscreteJoint, missing: Option<Modality>) -> f64 {
    let (masses, ny) = cell_label_masses(joint, missing);
    let mut err = 0.0;
    for cell in masses.chunks_exact(ny) {
        let total: f64 = cell.iter().sum();
        if total <= 0.0 {
            continue;
        }
        // Lowest-index argmax; the error does not depend on the tie choice.
        let best = cell.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        err += total - best;
    }
    err.clamp(0.0, 1.0)
}

fn y_values(joint: &DiscreteJoint) -> Result<&[f64]> {
    joint
        .y_values()
        .ok_or_else(|| Error::structural("regression quantities need y_values"))
}

/// Conditional means `E[Y | c]` per observed cell (NaN for empty cells),
/// with the cell masses.
fn conditional_means(
    joint: &DiscreteJoint,
    missing: Option<Modality>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let values = y_values(joint)?;
    let (masses, ny) = cell_label_masses(joint, missing);
    let mut means = Vec::new();
    let mut weights = Vec::new();
    for cell in masses.chunks_exact(ny) {
        let total: f64 = cell.iter().sum();
        weights.push(total);
        if total > 0.0 {
            means.push(cell.iter().zip(values).map(|(p, v)| p * v).sum::<f64>() / total);
        } else {
            means.push(f64::NAN);
        }
    }
    Ok((means, weights))
}

/// `E[(y - E[Y | c])^2]`.
pub fn bayes_error_regression(joint: &DiscreteJoint, missing: Option<Modality>) -> Result<f64> {
    let values = y_values(joint)?;
    let (masses, ny) = cell_label_masses(joint, missing);
    let (means, _) = conditional_means(joint, missing)?;
    let mut err = 0.0;
    for (cell, mu) in masses.chunks_exact(ny).zip(&means) {
        if mu.is_nan() {
            continue;
        }
        err += cell
            .iter()
            .zip(values)
            .map(|(p, v)| p * (v - mu).powi(2))
            .sum::<f64>();
    }
    Ok(err)
}

/// `E[(E[Y | surviving] - E[Y | x, z])^2]`, computed directly.
pub fn regression_gap_direct(joint: &DiscreteJoint, missing: Modality) -> Result<f64> {
    let (full, _) = conditional_means(joint, None)?;
    let (part, _) = conditional_means(joint, Some(missing))?;
    let nz = joint.nz();
    let mut gap = 0.0;
    for x in 0..joint.nx() {
        for z in 0..nz {
            let mass: f64 = (0..joint.ny()).map(|y| joint.p(x, z, y)).sum();
            if mass <= 0.0 {
                continue;
            }
            let surviving = match missing {
                Modality::Z => x,
                Modality::X => z,
            };
            gap += mass * (part[surviving] - full[x * nz + z]).powi(2);
        }
    }
    Ok(gap)
}

/// Both sides of one sandwich inequality `lower <= value <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `-inf` when |Y| = 1 (division by ln 1); see `lower_vacuous`.
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub lower_vacuous: bool,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

impl BoundCheck {
    fn new(numerator: f64, log_ny: f64, value: f64, upper: f64) -> Self {
        let lower_vacuous = log_ny == 0.0;
        let lower = if lower_vacuous {
            f64::NEG_INFINITY
        } else {
            numerator / log_ny
        };
        BoundCheck {
            lower,
            value,
            upper,
            lower_vacuous,
            lower_ok: lower_vacuous || lower <= value + BOUND_SLACK,
            upper_ok: value <= upper + BOUND_SLACK,
        }
    }

    pub fn holds(&self) -> bool {
        self.lower_ok && self.upper_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionCheck {
    pub y_range: YRange,
    pub p_er: f64,
    pub p_er_miss: f64,
    /// `p_er_miss - p_er`.
    pub gap: f64,
    /// The same gap computed as `E[(E[Y|x] - E[Y|x,z])^2]`.
    pub gap_direct: f64,
    pub half_gamma: f64,
    pub two_gamma: f64,
    pub within_half_gamma: bool,
    pub within_two_gamma: bool,
}

/// Every quantity in the classification and regression bounds for one joint,
/// with `missing` dropped (the surviving modality is the other one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub missing: Modality,
    pub h_y_given_xz: f64,
    /// H(Y | surviving modality).
    pub h_y_given_surviving: f64,
    pub gamma_x: f64,
    pub gamma_z: f64,
    /// Γ of the missing modality.
    pub gamma_missing: f64,
    pub i_xz: f64,
    pub interaction: f64,
    pub i_xz_y: f64,
    pub p_ec: f64,
    pub p_ec_miss: f64,
    pub complete: BoundCheck,
    pub missing_bound: BoundCheck,
    pub regression: Option<RegressionCheck>,
}

impl BoundReport {
    /// True when both classification sandwiches hold.
    pub fn classification_holds(&self) -> bool {
        self.complete.holds() && self.missing_bound.holds()
    }
}

/// Bound report with Z missing.
pub fn verify_bounds(joint: &DiscreteJoint) -> BoundReport {
    verify_bounds_missing(joint, Modality::Z)
}

pub fn verify_bounds_missing(joint: &DiscreteJoint, missing: Modality) -> BoundReport {
    let surviving = missing.other().var();
    let h_full = conditional_entropy(joint, Vars::Y, Vars::X | Vars::Z);
    let h_surv = conditional_entropy(joint, Vars::Y, surviving);
    let gamma_x = complementary_info(joint, Modality::X);
    let gamma_z = complementary_info(joint, Modality::Z);
    let gamma_missing = match missing {
        Modality::X => gamma_x,
        Modality::Z => gamma_z,
    };
    let log_ny = (joint.ny() as f64).ln();
    let ln2 = std::f64::consts::LN_2;
    let p_ec = bayes_error_classification(joint, None);
    let p_ec_miss = bayes_error_classification(joint, Some(missing));
    let complete = BoundCheck::new(h_full - ln2, log_ny, p_ec, 1.0 - (-h_full).exp());
    let missing_bound = BoundCheck::new(
        h_full + gamma_missing - ln2,
        log_ny,
        p_ec_miss,
        1.0 - (-h_full - gamma_missing).exp(),
    );
    let regression = joint.y_range().map(|range| {
        let p_er = bayes_error_regression(joint, None).expect("y_values present");
        let p_er_miss = bayes_error_regression(joint, Some(missing)).expect("y_values present");
        let gap = p_er_miss - p_er;
        let gap_direct = regression_gap_direct(joint, missing).expect("y_values present");
        let half_gamma = 0.5 * gamma_missing;
        let two_gamma = 2.0 * gamma_missing;
        RegressionCheck {
            y_range: range,
            p_er,
            p_er_miss,
            gap,
            gap_direct,
            half_gamma,
            two_gamma,
            within_half_gamma: gap <= half_gamma + BOUND_SLACK,
            within_two_gamma: gap <= two_gamma + BOUND_SLACK,
        }
    });
    BoundReport {
        missing,
        h_y_given_xz: h_full,
        h_y_given_surviving: h_surv,
        gamma_x,
        gamma_z,
        gamma_missing,
        i_xz: mutual_info(joint, Vars::X, Vars::Z, Vars::NONE).expect("disjoint"),
        interaction: interaction_info(joint),
        i_xz_y: mutual_info(joint, Vars::X | Vars::Z, Vars::Y, Vars::NONE).expect("disjoint"),
        p_ec,
        p_ec_miss,
        complete,
        missing_bound,
        regression,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn xor() -> DiscreteJoint {
        DiscreteJoint::from_fn(2, 2, 2, |x, z, y| ((x ^ z) == y) as u8 as f64).unwrap()
    }

    /// X independent of (Z, Y); Y = Z uniform binary.
    fn label_is_z(values: Vec<f64>, range: YRange) -> DiscreteJoint {
        DiscreteJoint::from_fn(2, 2, 2, |_, z, y| (z == y) as u8 as f64)
            .unwrap()
            .with_y_values(values, range)
            .unwrap()
    }

    #[test]
    fn classification_examples() {
        let det =
            DiscreteJoint::from_fn(3, 2, 3, |x, z, y| ((x + z) % 3 == y) as u8 as f64).unwrap();
        assert_eq!(bayes_error_classification(&det, None), 0.0);
        let j = xor();
        assert!(bayes_error_classification(&j, None).abs() < 1e-15);
        assert!((bayes_error_classification(&j, Some(Modality::Z)) - 0.5).abs() < 1e-15);
        let u = DiscreteJoint::from_fn(2, 2, 4, |_, _, _| 1.0).unwrap();
        assert!((bayes_error_classification(&u, None) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn regression_examples() {
        let unit = label_is_z(vec![0.0, 1.0], YRange::Unit);
        assert!(bayes_error_regression(&unit, None).unwrap().abs() < 1e-15);
        assert!((bayes_error_regression(&unit, Some(Modality::Z)).unwrap() - 0.25).abs() < 1e-15);
        let sym = label_is_z(vec![-1.0, 1.0], YRange::Symmetric);
        assert!((bayes_error_regression(&sym, Some(Modality::Z)).unwrap() - 1.0).abs() < 1e-15);
        assert!(bayes_error_regression(&xor(), None).is_err());
    }

    #[test]
    fn uniform_independent_attains_upper_bound() {
        let u = DiscreteJoint::from_fn(2, 3, 4, |_, _, _| 1.0).unwrap();
        let r = verify_bounds(&u);
        assert!((r.complete.upper - 0.75).abs() < 1e-12);
        assert!((r.complete.value - 0.75).abs() < 1e-12);
        assert!(r.classification_holds());
    }

    #[test]
    fn xor_missing_upper_bound_is_tight() {
        let r = verify_bounds(&xor());
        assert!((r.p_ec_miss - 0.5).abs() < 1e-12);
        assert!((r.missing_bound.upper - 0.5).abs() < 1e-12);
        assert!((r.gamma_missing - LN2).abs() < 1e-12);
    }

    #[test]
    fn regression_constants_on_fixed_joints() {
        let unit = verify_bounds(&label_is_z(vec![0.0, 1.0], YRange::Unit));
        let reg = unit.regression.unwrap();
        assert!((reg.gap - 0.25).abs() < 1e-12);
        assert!((reg.half_gamma - 0.5 * LN2).abs() < 1e-12);
        assert!(reg.within_half_gamma);

        let sym = verify_bounds(&label_is_z(vec![-1.0, 1.0], YRange::Symmetric));
        let reg = sym.regression.unwrap();
        assert!((reg.gap - 1.0).abs() < 1e-12);
        assert!((reg.half_gamma - 0.346_573_590_279_972_6).abs() < 1e-9);
        assert!(!reg.within_half_gamma);
        assert!(reg.within_two_gamma);
    }

    #[test]
    fn single_label_makes_lower_bounds_vacuous() {
        let j = DiscreteJoint::from_fn(2, 2, 1, |_, _, _| 1.0).unwrap();
        let r = verify_bounds(&j);
        assert!(r.complete.lower_vacuous && r.missing_bound.lower_vacuous);
        assert_eq!(r.complete.lower, f64::NEG_INFINITY);
        assert!(r.classification_holds());
    }
}
