//! Differentially private adaptive gradient descent (DP GD, DP RMSprop, DP Adam)
//! with a moments accountant for the (subsampled) Gaussian mechanism, closed-form
//! bound calculators, and the experiments that check them at desk scale.
//!
//! The crate is organized as:
//!
//! - [`accountant`]: privacy loss of `T` Gaussian releases and noise calibration.
//! - [`oracle`]: loss models, clipping, empirical and population gradients, data.
//! - [`optimizer`]: the adaptive DP loop and its three averaging rules.
//! - [`theory`]: concentration radii and rate expressions.
//! - [`harness`]: concentration, scaling, lower-bound and training experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod oracle;
pub mod rng;
pub mod theory;
pub mod vector;

pub use error::{Error, Result};
