//! Entropies and (conditional) mutual information in nats.

use super::joint::{DiscreteJoint, Modality, Vars};
use crate::error::{Error, Result};

/// Conditional MI values in `[-CLAMP_TOLERANCE, 0)` are reported as 0.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

fn shannon(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// H(vars), with 0 log 0 = 0. The empty set has zero entropy.
pub fn entropy(joint: &DiscreteJoint, vars: Vars) -> f64 {
    if vars.is_empty() {
        return 0.0;
    }
    shannon(&joint.marginal(vars))
}

/// H(target | given) = H(target, given) - H(given).
pub fn conditional_entropy(joint: &DiscreteJoint, target: Vars, given: Vars) -> f64 {
    (entropy(joint, target | given) - entropy(joint, given)).max(0.0)
}

/// I(A; B | C) via H(A,C) + H(B,C) - H(A,B,C) - H(C). Pass `Vars::NONE` for
/// the unconditional quantity.
pub fn mutual_info(joint: &DiscreteJoint, a: Vars, b: Vars, given: Vars) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::structural(
            "mutual information needs nonempty arguments",
        ));
    }
    if a.intersects(b) || a.intersects(given) || b.intersects(given) {
        return Err(Error::structural(
            "mutual information arguments must be disjoint",
        ));
    }
    let v = entropy(joint, a | given) + entropy(joint, b | given)
        - entropy(joint, a | b | given)
        - entropy(joint, given);
    Ok(if (-CLAMP_TOLERANCE..0.0).contains(&v) {
        0.0
    } else {
        v
    })
}

/// I(X;Y;Z) = I(X;Y) - I(X;Y|Z). Negative under synergy.
pub fn interaction_info(joint: &DiscreteJoint) -> f64 {
    let ixy = mutual_info(joint, Vars::X, Vars::Y, Vars::NONE).expect("disjoint");
    let ixy_z = mutual_info(joint, Vars::X, Vars::Y, Vars::Z).expect("disjoint");
    ixy - ixy_z
}

/// Complementary information: Γ_X = I(X;Y|Z), Γ_Z = I(Z;Y|X).
pub fn complementary_info(joint: &DiscreteJoint, which: Modality) -> f64 {
    mutual_info(joint, which.var(), Vars::Y, which.other().var()).expect("disjoint")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> DiscreteJoint {
        DiscreteJoint::from_fn(2, 2, 2, |x, z, y| ((x ^ z) == y) as u8 as f64).unwrap()
    }

    fn all_equal() -> DiscreteJoint {
        DiscreteJoint::from_fn(2, 2, 2, |x, z, y| (x == z && z == y) as u8 as f64).unwrap()
    }

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn entropy_examples() {
        let uniform4 = DiscreteJoint::from_fn(4, 1, 1, |_, _, _| 1.0).unwrap();
        assert!((entropy(&uniform4, Vars::X) - 1.386_294_361_119_890_6).abs() < 1e-12);
        let point = DiscreteJoint::new(1, 1, 1, vec![1.0]).unwrap();
        assert_eq!(entropy(&point, Vars::ALL), 0.0);
        let bern = DiscreteJoint::new(2, 1, 1, vec![0.25, 0.75]).unwrap();
        // -(0.25 ln 0.25 + 0.75 ln 0.75)
        assert!((entropy(&bern, Vars::X) - 0.562_335_144_618_556_8).abs() < 1e-12);
    }

    #[test]
    fn mutual_info_examples() {
        let indep =
            DiscreteJoint::from_fn(3, 2, 2, |x, z, _| (1 + x) as f64 * (2 + z) as f64).unwrap();
        assert!(
            mutual_info(&indep, Vars::X, Vars::Z, Vars::NONE)
                .unwrap()
                .abs()
                < 1e-15
        );
        let copy = DiscreteJoint::from_fn(2, 2, 1, |x, z, _| (x == z) as u8 as f64).unwrap();
        assert!((mutual_info(&copy, Vars::X, Vars::Z, Vars::NONE).unwrap() - LN2).abs() < 1e-12);
        let j = xor();
        assert!(mutual_info(&j, Vars::X, Vars::Y, Vars::NONE).unwrap().abs() < 1e-12);
        assert!((mutual_info(&j, Vars::X, Vars::Y, Vars::Z).unwrap() - LN2).abs() < 1e-12);
        assert!(mutual_info(&j, Vars::X, Vars::X | Vars::Y, Vars::NONE).is_err());
        assert!(mutual_info(&j, Vars::X, Vars::Y, Vars::X).is_err());
    }

    #[test]
    fn interaction_examples() {
        assert!((interaction_info(&xor()) + LN2).abs() < 1e-12);
        assert!((interaction_info(&all_equal()) - LN2).abs() < 1e-12);
        let indep = DiscreteJoint::from_fn(2, 3, 2, |x, z, y| {
            (1 + x) as f64 * (1 + z) as f64 * (3 + y) as f64
        })
        .unwrap();
        assert!(interaction_info(&indep).abs() < 1e-12);
    }

    #[test]
    fn complementary_examples() {
        // Y carried by Z; X independent of (Z, Y).
        let j = DiscreteJoint::from_fn(3, 2, 2, |x, z, y| (1 + x) as f64 * (z == y) as u8 as f64)
            .unwrap();
        assert!(complementary_info(&j, Modality::X).abs() < 1e-12);
        let x = xor();
        assert!((complementary_info(&x, Modality::X) - LN2).abs() < 1e-12);
        assert!((complementary_info(&x, Modality::Z) - LN2).abs() < 1e-12);
        assert!(complementary_info(&all_equal(), Modality::X).abs() < 1e-12);
    }
}
