//! Short-time pipeline: first-order Bogoliubov coefficients, particle number
//! and diagonal entropy for the harmonic trajectory.

use std::f64::consts::PI;

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::cavity::{coefficients_with_phases, CouplingTables, InstantaneousSpectrum};
use crate::error::{DceError, Result};
use crate::quadrature;
use crate::xlogx;

/// `tau` above which the leading-order formulas are flagged.
pub const TAU_WARN: f64 = 0.3;

/// `|beta_kj(tau)|` for `l(t) = sin(p t)`.
///
/// The resonant branch (`p = k + j`) grows linearly; every other pair returns
/// the bounded oscillatory amplitude.
pub fn beta_resonant_magnitude(k: usize, j: usize, p: u32, tau: f64, epsilon: f64) -> f64 {
    let s = k + j;
    let root = ((k * j) as f64).sqrt();
    if p as usize == s {
        return root * tau;
    }
    let pf = p as f64;
    let sf = s as f64;
    (2.0 * root * epsilon * pf / (pf * pf - sf * sf) * (2.0 * sf * tau / epsilon).sin()).abs()
}

/// `N(tau) = p (p^2 - 1) tau^2 / 6`.
pub fn particle_number(p: u32, tau: f64) -> f64 {
    if tau > TAU_WARN {
        warn!("tau = {tau} exceeds {TAU_WARN}; the short-time particle number is unreliable");
    }
    let pf = p as f64;
    pf * (pf * pf - 1.0) * tau * tau / 6.0
}

/// `v(p) = sum_{k=1}^{p-1} (p-k) k ln((p-k) k)`.
pub fn v_sum(p: u32) -> f64 {
    (1..p).map(|k| xlogx(((p - k) * k) as f64)).sum()
}

/// Leading-order diagonal entropy of the resonant pair set.
pub fn diagonal_entropy_closed_form(p: u32, tau: f64) -> Result<f64> {
    let n = particle_number(p, tau);
    if n == 0.0 {
        return Ok(0.0);
    }
    if n >= 2.0 {
        return Err(DceError::Regime(format!("N = {n} >= 2 at p = {p}, tau = {tau}")));
    }
    let pf = p as f64;
    let c = pf * (pf * pf - 1.0) / 6.0;
    Ok(0.5 * n * (1.0 - (0.5 * n).ln() + c.ln() - v_sum(p) / c))
}

/// Entropy and particle number of a set of pair amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub tau: f64,
    pub p: u32,
    pub n: f64,
    pub s_d: f64,
    /// Nonzero `(k, j, |beta_kj|^2)`, 1-based.
    pub per_pair_terms: Vec<(usize, usize, f64)>,
}

/// General second-order entropy from a matrix of `|beta_kj|` (0-based
/// storage, entry `(k-1, j-1)`).
pub fn diagonal_entropy_general(beta_magnitudes: &DMatrix<f64>) -> Result<EntropyReport> {
    let mut n = 0.0;
    let mut sum = 0.0;
    let mut terms = Vec::new();
    for c in 0..beta_magnitudes.ncols() {
        for r in 0..beta_magnitudes.nrows() {
            let b = beta_magnitudes[(r, c)];
            if b < 0.0 || !b.is_finite() {
                return Err(DceError::InvalidState(format!("|beta| entry ({}, {}) = {b}", r + 1, c + 1)));
            }
            let b2 = b * b;
            if b2 > 0.0 {
                terms.push((r + 1, c + 1, b2));
            }
            n += b2;
            sum += xlogx(0.5 * b2);
        }
    }
    if 0.5 * n >= 1.0 {
        return Err(DceError::Regime(format!("N / 2 = {} >= 1; outside perturbative regime", 0.5 * n)));
    }
    let s_d = -xlogx(1.0 - 0.5 * n) - sum;
    Ok(EntropyReport { tau: f64::NAN, p: 0, n, s_d, per_pair_terms: terms })
}

/// `|beta_kj|` table for `k, j <= k_max`; off-resonant pairs are included only
/// when `include_off_resonant` is set.
pub fn beta_table(p: u32, tau: f64, epsilon: f64, k_max: usize, include_off_resonant: bool) -> DMatrix<f64> {
    DMatrix::from_fn(k_max, k_max, |r, c| {
        let (k, j) = (r + 1, c + 1);
        if k + j == p as usize || include_off_resonant {
            beta_resonant_magnitude(k, j, p, tau, epsilon)
        } else {
            0.0
        }
    })
}

/// Entropy report for the resonant pair set at `(p, tau)`.
pub fn resonant_entropy_report(p: u32, tau: f64) -> Result<EntropyReport> {
    let k_max = (p as usize).saturating_sub(1).max(1);
    let mut r = diagonal_entropy_general(&beta_table(p, tau, 1.0, k_max, false))?;
    r.tau = tau;
    r.p = p;
    Ok(r)
}

/// Default cutoff for quadrature cross-checks.
pub fn default_k_max(p: u32) -> usize {
    (2 * p as usize).max(16)
}

/// First-order coefficients `alpha~ = int A`, `beta = int B` at the stop time.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbativeBogoliubov {
    pub tau: f64,
    pub p: u32,
    pub k_max: usize,
    /// 0-based storage, entry `(k-1, j-1)`.
    pub alpha_tilde: DMatrix<Complex64>,
    pub beta: DMatrix<Complex64>,
}

impl PerturbativeBogoliubov {
    pub fn particle_number(&self) -> f64 {
        self.beta.iter().map(|b| b.norm_sqr()).sum()
    }

    pub fn beta_magnitudes(&self) -> DMatrix<f64> {
        self.beta.map(|b| b.norm())
    }
}

/// Integrates `A_kj` and `B_kj` over `[0, T]` by adaptive quadrature.
pub fn first_order_coefficients(
    tables: &CouplingTables,
    spectrum: &InstantaneousSpectrum,
    k_max: usize,
    tol: f64,
) -> Result<PerturbativeBogoliubov> {
    if k_max > tables.k_max {
        return Err(DceError::config(format!("k_max = {k_max} exceeds table cutoff {}", tables.k_max)));
    }
    let tr = spectrum.trajectory;
    let t_end = tr.duration;
    let fastest = 2.0 * k_max as f64 * spectrum.omega_in(1) + tr.drive_frequency();
    let panels = ((fastest * t_end / (2.0 * PI)).ceil() as usize).max(1);
    let mut alpha = DMatrix::from_element(k_max, k_max, Complex64::new(0.0, 0.0));
    let mut beta = alpha.clone();
    for k in 1..=k_max {
        for j in k..=k_max {
            let ia = quadrature::integrate_complex(
                |t| {
                    let (a, _) =
                        coefficients_with_phases(tables, k, j, spectrum.lambda(t), spectrum.phase(k, t), spectrum.phase(j, t));
                    a
                },
                0.0,
                t_end,
                tol,
                tol,
                panels,
            );
            let ib = quadrature::integrate_complex(
                |t| {
                    let (_, b) =
                        coefficients_with_phases(tables, k, j, spectrum.lambda(t), spectrum.phase(k, t), spectrum.phase(j, t));
                    b
                },
                0.0,
                t_end,
                tol,
                tol,
                panels,
            );
            alpha[(k - 1, j - 1)] = ia;
            alpha[(j - 1, k - 1)] = -ia.conj();
            beta[(k - 1, j - 1)] = ib;
            beta[(j - 1, k - 1)] = ib;
        }
    }
    let tau = if tr.epsilon > 0.0 { tr.tau() } else { 0.0 };
    Ok(PerturbativeBogoliubov { tau, p: tr.p, k_max, alpha_tilde: alpha, beta })
}
