//! Expected local time of stopped Brownian motion.
//!
//! The crate provides, for a standard Brownian motion stopped at an
//! integrable stopping time with final variance sigma^2:
//!
//! - the sharp upper bound sqrt(sigma^2 + x^2) - |x| on expected local time
//!   at any level x, in a numerically stable form ([`bounds`]);
//! - the stopping rules attaining it and the two-stage construction behind
//!   them ([`stopping`]);
//! - exact evaluation of expected local time from the terminal law alone
//!   ([`localtime`], [`distributions`]);
//! - Chacon-Walsh interval embeddings of arbitrary mean-zero finite-support
//!   laws, with exact-rational verification ([`embedding`]);
//! - a seeded, reproducible Monte Carlo harness that checks the closed forms
//!   empirically ([`brownian`], [`harness`], [`acceptance`]).
//!
//! The math layers are generic over the scalar type through [`Scalar`];
//! everything user-facing runs at [`Real`] = `f64`.

// Validation sites use `!(v > 0)` so NaN fails closed; the suggested
// rewrite loses that property.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod bounds;
pub mod brownian;
pub mod distributions;
pub mod embedding;
pub mod harness;
pub mod localtime;
pub mod scalar;
pub mod stats;
pub mod stopping;

pub use scalar::Scalar;

/// Scalar type used by the harness and CLI.
pub type Real = f64;

/// Terminal law at the default scalar.
pub type Law = distributions::TerminalDistribution<Real>;

/// Stopping rule at the default scalar.
pub type Rule = stopping::StoppingRule<Real>;
