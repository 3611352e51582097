//! Belief-manifold toolkit: integer time series, output-distribution metrics,
//! linear field probes, field geometry, geometry-aware steering and a Bayesian
//! ideal observer, plus a synthetic oracle world that stands in for a language
//! model so every geometric claim can be checked end to end.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataio;
pub mod embedding;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod observer;
pub mod probes;
pub mod seriesgen;
pub mod steering;
pub mod synth;

pub use error::{Error, Result};
