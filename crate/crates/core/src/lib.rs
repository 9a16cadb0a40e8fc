//! Simulation and autocorrelation-robust inference for binary-choice models of
//! social interactions on a single spatially embedded network.
//!
//! The crate provides: network generation under increasing-domain scaling
//! ([`netgen`]), graph algorithms ([`graph`]), dynamic/static outcome
//! simulation and network moments ([`simsocial`]), pseudo-ML estimation
//! ([`estim`]), spatial/network/generalized HAC variance estimators ([`hac`]),
//! and a Monte Carlo harness ([`mc`]).
//!
//! Built with the default `parallel` feature the data-parallel loops run on
//! rayon; `--no-default-features` selects a sequential fallback producing
//! identical output.

// negated comparisons in validation guards are deliberate: NaN must fail them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estim;
pub mod graph;
pub(crate) mod grid;
pub mod hac;
pub mod kernel;
pub mod mc;
pub mod netgen;
pub mod par;
pub mod rng;
pub mod simsocial;
pub mod types;

pub use error::{CoreError, Result};
pub use kernel::Kernel;
pub use rng::RngSpec;
pub use types::{Panel, SpatialGraph};
