//! Exact local post-hoc explanations (gradients, interventional SHAP, anchors,
//! counterfactuals) on tractable function classes, together with the machinery
//! to decide whether an explanation is informative: paired estimates of the
//! Rademacher complexity of the prediction-consistent class versus the
//! explanation-consistent class.
//!
//! The crate is organised around five subsystems:
//!
//! * [`geometry`] — points, axis-aligned boxes, grids and the two supported
//!   sampling distributions, with exact box masses.
//! * [`models`] — concrete decision functions (grid functions, axis-parallel
//!   trees, linear models, GAMs of trees, polynomials) with exact evaluation,
//!   exact expectations and exact interventional value functions.
//! * [`explainers`] — the explanation algorithms themselves plus brute-force
//!   oracles used for cross-checking.
//! * [`rademacher`] — constraint sets, per-class sup-correlation solvers,
//!   Monte-Carlo estimators and gap reports.
//! * [`scenarios`] — a registry mapping each studied setting to a runnable
//!   configuration with a recorded expected verdict.

pub mod error;
pub mod explainers;
pub mod geometry;
pub mod manifest;
pub mod models;
pub mod oracles;
pub mod rademacher;
pub mod scenarios;

pub use error::{Error, Result};
