//! Bias auditing as a point-to-subspace query on discrete measures.
//!
//! A subgroup's normalized joint histogram is tested against a band of
//! half-width `delta` around a reference histogram in the supremum norm,
//! either by scanning all `N` joint bins or by scanning a uniform random
//! subset of them with a PAC sample budget. Discrete optimal-transport
//! distances serve as a baseline, and a Monte-Carlo harness measures the
//! one-sided error of both approaches against sample size.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod histogram;
pub mod pac;
pub mod query;
pub mod synthetic;
pub mod transport;

pub use error::{AuditError, Result};
