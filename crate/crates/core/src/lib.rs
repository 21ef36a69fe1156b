//! Modality complementarity toolkit.
//!
//! - [`oracle`]: exact entropies, mutual information and Bayes errors on
//!   small discrete joints, plus bound checks relating them.
//! - [`datagen`]: seeded synthetic multimodal datasets whose complementarity
//!   is controlled by a single parameter.
//! - [`mine`]: Donsker–Varadhan neural estimation of mutual information.
//! - [`complementarity`]: composes MI estimates into complementarity Γ and
//!   the normalized metrics.
//! - [`harness`]: late-fusion classifiers, five training strategies and
//!   zero-fill missing-modality evaluation.
//! - [`nn`] / [`linalg`]: the dense MLP machinery everything trains on.

pub mod complementarity;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mine;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::Matrix;
