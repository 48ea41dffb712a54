//! Entropy production of a scalar field in a one-dimensional cavity with an
//! oscillating mirror.
//!
//! Two pipelines are provided, each with an independent numerical oracle:
//!
//! * short time: first-order Bogoliubov coefficients and closed-form entropy
//!   ([`perturbative`]), checked against exact Fock-space evolution
//!   ([`fock`]);
//! * long time: slowly-varying-amplitude equations under parametric
//!   resonance ([`resonance`]) feeding single-mode Gaussian statistics
//!   ([`gaussian`]), checked against the full mode-function equations
//!   ([`field`]).
//!
//! Units: unless stated otherwise `L0 = pi`, so the fundamental frequency is
//! one and `tau = eps T / 2`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cavity;
pub mod error;
pub mod expm;
pub mod field;
pub mod fock;
pub mod gaussian;
pub mod ode;
pub mod perturbative;
pub mod quadrature;
pub mod resonance;

pub use error::{DceError, Result};

/// `x ln x` with the continuous extension `0 ln 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}
