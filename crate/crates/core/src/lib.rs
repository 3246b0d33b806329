//! Causal mediation analysis with hidden confounders recovered from proxies.
//!
//! The crate is organised around a small pipeline:
//!
//! * [`dataset`] loads, encodes, standardizes and splits `(X, T, M, Y)` tables.
//! * [`dgp`] generates benchmark data with known direct and indirect effects.
//! * [`cmavae`] is the variational latent-variable model with treatment-gated heads.
//! * [`effects`] turns a trained model into ACME / ACDE / ATE estimates.
//! * [`baselines`] holds the linear structural-equation estimators and the
//!   fairness classifier.
//! * [`harness`] runs configured experiment grids and persists their outputs.

pub mod baselines;
pub mod cmavae;
pub mod dataset;
pub mod dgp;
pub mod effects;
mod error;
pub mod harness;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
