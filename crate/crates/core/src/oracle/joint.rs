use std::ops::BitOr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Default per-variable alphabet cap.
pub const DEFAULT_CARDINALITY_CAP: usize = 16;

/// Tolerance on the total probability mass.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A set of the three variables X, Z (modalities) and Y (label).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Vars(u8);

impl Vars {
    pub const NONE: Vars = Vars(0);
    pub const X: Vars = Vars(1);
    pub const Z: Vars = Vars(2);
    pub const Y: Vars = Vars(4);
    pub const ALL: Vars = Vars(7);

    pub fn contains(self, other: Vars) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn intersects(self, other: Vars) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl BitOr for Vars {
    type Output = Vars;
    fn bitor(self, rhs: Vars) -> Vars {
        Vars(self.0 | rhs.0)
    }
}

/// One of the two modality variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    X,
    Z,
}

impl Modality {
    pub fn var(self) -> Vars {
        match self {
            Modality::X => Vars::X,
            Modality::Z => Vars::Z,
        }
    }

    pub fn other(self) -> Modality {
        match self {
            Modality::X => Modality::Z,
            Modality::Z => Modality::X,
        }
    }
}

/// Interval declared for numeric label values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YRange {
    /// [0, 1]
    Unit,
    /// [-1, 1]
    Symmetric,
}

impl YRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            YRange::Unit => (0.0, 1.0),
            YRange::Symmetric => (-1.0, 1.0),
        }
    }
}

/// Exact finite joint law P(X, Z, Y), stored flat in (x, z, y) row-major
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    cardinalities: [usize; 3],
    #[serde(default)]
    y_values: Option<Vec<f64>>,
    #[serde(default)]
    y_range: Option<YRange>,
    probs: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(nx: usize, nz: usize, ny: usize, probs: Vec<f64>) -> Result<Self> {
        Self::with_cap(nx, nz, ny, probs, DEFAULT_CARDINALITY_CAP)
    }

    pub fn with_cap(nx: usize, nz: usize, ny: usize, probs: Vec<f64>, cap: usize) -> Result<Self> {
        let j = DiscreteJoint {
            cardinalities: [nx, nz, ny],
            y_values: None,
            y_range: None,
            probs,
        };
        j.validate(cap)?;
        Ok(j)
    }

    /// Builds the joint from a (possibly unnormalized) weight function.
    pub fn from_fn(
        nx: usize,
        nz: usize,
        ny: usize,
        mut weight: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(nx * nz * ny);
        for x in 0..nx {
            for z in 0..nz {
                for y in 0..ny {
                    probs.push(weight(x, z, y));
                }
            }
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(Error::structural("joint weights sum to zero"));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(nx, nz, ny, probs)
    }

    /// Dirichlet(1, ..., 1) over all atoms with the given alphabet sizes.
    pub fn random(rng: &mut Stream, nx: usize, nz: usize, ny: usize) -> Result<Self> {
        Self::new(nx, nz, ny, rng.dirichlet_ones(nx * nz * ny))
    }

    /// Random alphabet sizes in `1..=cap` (at least 2 labels), then a
    /// Dirichlet(1, ..., 1) joint.
    pub fn random_capped(rng: &mut Stream, cap: usize) -> Result<Self> {
        let nx = 1 + rng.below(cap);
        let nz = 1 + rng.below(cap);
        let ny = 2 + rng.below(cap.max(2) - 1);
        Self::random(rng, nx, nz, ny)
    }

    /// Attaches a numeric value to every label, for regression quantities.
    pub fn with_y_values(mut self, values: Vec<f64>, range: YRange) -> Result<Self> {
        if values.len() != self.ny() {
            return Err(Error::structural(format!(
                "{} y_values for {} labels",
                values.len(),
                self.ny()
            )));
        }
        let (lo, hi) = range.bounds();
        if let Some(v) = values.iter().find(|v| !(**v >= lo && **v <= hi)) {
            return Err(Error::structural(format!(
                "y value {v} outside declared range [{lo}, {hi}]"
            )));
        }
        self.y_values = Some(values);
        self.y_range = Some(range);
        Ok(self)
    }

    pub fn validate(&self, cap: usize) -> Result<()> {
        let [nx, nz, ny] = self.cardinalities;
        for (name, n) in [("X", nx), ("Z", nz), ("Y", ny)] {
            if n == 0 || n > cap {
                return Err(Error::structural(format!(
                    "|{name}| = {n} outside 1..={cap}"
                )));
            }
        }
        if self.probs.len() != nx * nz * ny {
            return Err(Error::structural(format!(
                "{} probabilities for {}x{}x{} joint",
                self.probs.len(),
                nx,
                nz,
                ny
            )));
        }
        if let Some(p) = self.probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::structural(format!("invalid probability {p}")));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::structural(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        match (&self.y_values, self.y_range) {
            (Some(v), Some(r)) => {
                let (lo, hi) = r.bounds();
                if v.len() != ny || v.iter().any(|y| !(*y >= lo && *y <= hi)) {
                    return Err(Error::structural("y_values inconsistent with |Y| or range"));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::structural(
                    "y_values and y_range must be given together",
                ))
            }
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        self.cardinalities[0]
    }

    pub fn nz(&self) -> usize {
        self.cardinalities[1]
    }

    pub fn ny(&self) -> usize {
        self.cardinalities[2]
    }

    pub fn y_values(&self) -> Option<&[f64]> {
        self.y_values.as_deref()
    }

    pub fn y_range(&self) -> Option<YRange> {
        self.y_range
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn p(&self, x: usize, z: usize, y: usize) -> f64 {
        let [_, nz, ny] = self.cardinalities;
        self.probs[(x * nz + z) * ny + y]
    }

    /// Iterates `(x, z, y, p)` over all atoms.
    pub fn atoms(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let [_, nz, ny] = self.cardinalities;
        self.probs.iter().enumerate().map(move |(i, &p)| {
            let y = i % ny;
            let z = (i / ny) % nz;
            let x = i / (ny * nz);
            (x, z, y, p)
        })
    }

    /// Marginal over `vars`, indexed with x most significant, then z, then y.
    pub fn marginal(&self, vars: Vars) -> Vec<f64> {
        let [nx, nz, ny] = self.cardinalities;
        let size = |v: Vars, n: usize| if vars.contains(v) { n } else { 1 };
        let (sx, sz, sy) = (size(Vars::X, nx), size(Vars::Z, nz), size(Vars::Y, ny));
        let mut out = vec![0.0; sx * sz * sy];
        for (x, z, y, p) in self.atoms() {
            let xi = if vars.contains(Vars::X) { x } else { 0 };
            let zi = if vars.contains(Vars::Z) { z } else { 0 };
            let yi = if vars.contains(Vars::Y) { y } else { 0 };
            out[(xi * sz + zi) * sy + yi] += p;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: DiscreteJoint = serde_json::from_str(text)?;
        j.validate(DEFAULT_CARDINALITY_CAP)?;
        Ok(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_mass_and_shapes() {
        assert!(DiscreteJoint::new(1, 1, 2, vec![0.5, 0.4]).is_err());
        assert!(DiscreteJoint::new(1, 1, 2, vec![1.5, -0.5]).is_err());
        assert!(DiscreteJoint::new(1, 1, 2, vec![1.0]).is_err());
        assert!(DiscreteJoint::new(17, 1, 1, vec![1.0 / 17.0; 17]).is_err());
        let j = DiscreteJoint::new(1, 1, 2, vec![0.5, 0.5]).unwrap();
        assert!(j
            .clone()
            .with_y_values(vec![0.0, 2.0], YRange::Unit)
            .is_err());
        assert!(j.with_y_values(vec![-1.0, 1.0], YRange::Symmetric).is_ok());
    }

    #[test]
    fn marginals_sum_over_dropped_axes() {
        let j = DiscreteJoint::from_fn(2, 3, 2, |x, z, y| (1 + x + 2 * z + 3 * y) as f64).unwrap();
        let px = j.marginal(Vars::X);
        assert_eq!(px.len(), 2);
        assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let pzy = j.marginal(Vars::Z | Vars::Y);
        assert_eq!(pzy.len(), 6);
        let expect: f64 = (0..2).map(|x| j.p(x, 1, 0)).sum();
        assert!((pzy[2] - expect).abs() < 1e-15);
        assert_eq!(j.marginal(Vars::NONE), vec![1.0]);
    }

    #[test]
    fn json_round_trip() {
        let j = DiscreteJoint::from_fn(2, 2, 2, |x, z, y| ((x ^ z) == y) as u8 as f64)
            .unwrap()
            .with_y_values(vec![-1.0, 1.0], YRange::Symmetric)
            .unwrap();
        let back = DiscreteJoint::from_json(&j.to_json().unwrap()).unwrap();
        assert_eq!(back, j);
    }
}
