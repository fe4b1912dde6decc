//! Full counting statistics of defects created by slow quenches of a
//! fully-connected (Lipkin-Meshkov-Glick) spin model across its critical
//! point.
//!
//! Three routes are kept independent so they can check each other:
//!
//! - [`ermakov`]: the effective driven oscillator, integrated numerically;
//! - [`analytic`]: Bessel-function solutions at criticality and the
//!   negative binomial defect law;
//! - [`lmg`]: exact propagation in the maximal-spin sector for finite N.
//!
//! [`fcs`] turns a reflection coefficient into the excitation and work
//! distributions, and [`harness`] drives sweeps, CSV output and the
//! validation suite.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod ermakov;
pub mod fcs;
pub mod harness;
pub mod lmg;
pub mod ode;
pub mod protocol;
pub mod special;
pub mod tridiag;

pub use error::{Error, Result};
