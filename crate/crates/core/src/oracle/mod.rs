//! Exact information theory on small discrete joints P(X, Z, Y).
//!
//! All logarithms are natural. X and Z are the two modalities, Y the label.

mod bounds;
mod info;
mod joint;

pub use bounds::{
    bayes_error_classification, bayes_error_regression, regression_gap_direct, verify_bounds,
    verify_bounds_missing, BoundCheck, BoundReport, RegressionCheck, BOUND_SLACK,
};
pub use info::{
    complementary_info, conditional_entropy, entropy, interaction_info, mutual_info,
    CLAMP_TOLERANCE,
};
pub use joint::{DiscreteJoint, Modality, Vars, YRange, DEFAULT_CARDINALITY_CAP, MASS_TOLERANCE};
