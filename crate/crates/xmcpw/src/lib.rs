//! Propensity-weighted one-vs-rest linear classification for extreme
//! multi-label problems with missing labels.
//!
//! Large multi-label datasets are annotated incompletely, and the chance
//! that a relevant label is missing grows for rare (tail) labels. This
//! crate provides the pieces needed to train and evaluate linear
//! classifiers that correct for that bias:
//!
//! * [`loss`] — pointwise losses in plain, unbiased and convex re-weighted
//!   forms, and the positive-class weighting schemes derived from them;
//! * [`propensity`] — the empirical model mapping label frequencies to
//!   observation probabilities;
//! * [`data`] — the benchmark sparse text format, preprocessing and
//!   power-law label statistics;
//! * [`solver`] — a trust-region Newton-CG solver for the per-label
//!   weighted binary subproblem;
//! * [`ovr`] — parallel one-vs-rest training, model persistence, pruning
//!   and top-k prediction;
//! * [`metrics`] — vanilla and propensity-scored ranking metrics;
//! * [`sim`] — missing-label simulation and exact verification of the
//!   unbiasedness identity;
//! * [`cli`] — the `xmcpw` command-line front end.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`);
//! concrete `f64`/`f32` aliases for the main types are exported below.

pub mod cli;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod ovr;
pub mod propensity;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` dataset (the CLI default precision).
pub type Dataset64 = data::SparseDataset<f64>;
/// `f32` dataset.
pub type Dataset32 = data::SparseDataset<f32>;
/// `f64` propensity model.
pub type PropensityModel64 = propensity::PropensityModel<f64>;
/// `f32` propensity model.
pub type PropensityModel32 = propensity::PropensityModel<f32>;
/// `f64` loss specification.
pub type LossSpec64 = loss::LossSpec<f64>;
/// `f32` loss specification.
pub type LossSpec32 = loss::LossSpec<f32>;
/// `f64` one-vs-rest model.
pub type OvrModel64 = ovr::OvrModel<f64>;
/// `f32` one-vs-rest model.
pub type OvrModel32 = ovr::OvrModel<f32>;
/// `f64` top-k predictions.
pub type TopK64 = ovr::TopK<f64>;
/// `f32` top-k predictions.
pub type TopK32 = ovr::TopK<f32>;
