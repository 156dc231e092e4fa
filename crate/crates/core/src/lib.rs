//! Classifier-agnostic robustness bounds for data drawn from smooth
//! generative models, plus the attack and Monte Carlo machinery used to
//! compare real classifiers against them.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod bounds;
pub mod error;
pub mod format;
pub mod gaussian;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod modulus;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub use gaussian::Probability;
