//! Stability certificates for the interconnection of two input-to-state
//! stable (ISS) subsystems whose small-gain condition only holds on a
//! sequence of intervals.
//!
//! The crate combines three kinds of evidence:
//!
//! - [`scalar_fn`]: comparison functions, their composition and inversion,
//!   and the sign scan that locates the intervals where
//!   `γ12(γ21(s)) < s` holds.
//! - [`iss_model`]: the interconnected system, grid checks of the
//!   ISS-Lyapunov implication, and the sublevel regions `A_k`, `B_k`
//!   pushed together by the interval-wise small-gain argument.
//! - [`density`]: `div(ρf)` and the density-propagation check used on the
//!   gaps between small-gain intervals.
//!
//! [`example_system`] implements the two-subsystem `tanh`/`sin²` example
//! together with its floating-point saturation model, and [`sim`]
//! integrates trajectories to estimate the almost-ISS behaviour
//! empirically. Every certificate is relative to a sampling grid; reports
//! record the grid they were computed on.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod example_system;
pub mod grid;
pub mod iss_model;
pub mod output;
pub mod scalar_fn;
pub mod sim;
pub mod svg;

pub use error::{Error, Result};
pub use scalar_fn::{compose, find_sgc_intervals, invert_on_interval, is_class_k, ScalarFn, SgcAnalysis};

/// Version tag written into every JSON document the CLI emits.
pub const SCHEMA_VERSION: u32 = 1;
