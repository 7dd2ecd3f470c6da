//! Discover input-dependent miscalibration from `(embedding, confidence,
//! outcome)` triples.
//!
//! A representation network is trained so that kernel-smoothing residuals
//! `y - f` in its output space exposes regions of systematic over- and
//! underconfidence. The resulting field can be audited (regime slices,
//! worst-slice gaps, bootstrap intervals, permutation nulls) and used to
//! correct confidences locally.

pub mod audit;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod error;
pub mod field;
pub mod geometry;
pub mod metrics;
pub mod optim;
pub mod parallel;
pub mod recal;
pub mod rng;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
