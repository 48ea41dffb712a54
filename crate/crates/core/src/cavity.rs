//! Cavity geometry, harmonic mirror trajectory, instantaneous spectrum and
//! the coupling coefficients shared by every pipeline.
//!
//! Mode indices are 1-based in every public signature.

use std::f64::consts::PI;

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{DceError, Result};
use crate::quadrature;

/// Largest amplitude accepted by the constructors.
pub const EPSILON_MAX: f64 = 0.1;
/// Amplitudes above this trigger a small-amplitude warning.
pub const EPSILON_WARN: f64 = 0.01;

/// Harmonic boundary motion `L(t) = L0 (1 + eps sin(p w1 t))` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorTrajectory {
    pub l0: f64,
    pub epsilon: f64,
    pub p: u32,
    pub duration: f64,
}

impl MirrorTrajectory {
    pub fn new(l0: f64, epsilon: f64, p: u32, duration: f64) -> Result<Self> {
        if !(l0 > 0.0 && l0.is_finite()) {
            return Err(DceError::config(format!("L0 must be positive, got {l0}")));
        }
        if !(0.0..=EPSILON_MAX).contains(&epsilon) {
            return Err(DceError::config(format!("epsilon must lie in [0, {EPSILON_MAX}], got {epsilon}")));
        }
        if epsilon > EPSILON_WARN {
            warn!("epsilon = {epsilon} is above {EPSILON_WARN}; small-amplitude results lose accuracy");
        }
        if p == 0 {
            return Err(DceError::config("harmonic index p must be at least 1"));
        }
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(DceError::config(format!("duration must be non-negative, got {duration}")));
        }
        Ok(MirrorTrajectory { l0, epsilon, p, duration })
    }

    /// Trajectory in natural units (`L0 = pi`, so `w1 = 1`) stopped at the
    /// dimensionless time `tau = eps w1 T / 2`.
    pub fn from_tau(epsilon: f64, p: u32, tau: f64) -> Result<Self> {
        if epsilon <= 0.0 {
            return Err(DceError::config("tau parametrization needs epsilon > 0"));
        }
        if !(tau >= 0.0) {
            return Err(DceError::config(format!("tau must be non-negative, got {tau}")));
        }
        MirrorTrajectory::new(PI, epsilon, p, 2.0 * tau / epsilon)
    }

    /// Fundamental frequency `w1 = pi / L0`.
    pub fn omega1(&self) -> f64 {
        PI / self.l0
    }

    pub fn drive_frequency(&self) -> f64 {
        self.p as f64 * self.omega1()
    }

    pub fn tau(&self) -> f64 {
        0.5 * self.epsilon * self.omega1() * self.duration
    }

    pub fn tau_to_time(&self, tau: f64) -> f64 {
        2.0 * tau / (self.epsilon * self.omega1())
    }

    pub fn length(&self, t: f64) -> f64 {
        self.l0 * (1.0 + self.epsilon * (self.drive_frequency() * t).sin())
    }

    /// `lambda = L'/L`.
    pub fn lambda(&self, t: f64) -> f64 {
        let a = self.drive_frequency();
        let x = a * t;
        self.epsilon * a * x.cos() / (1.0 + self.epsilon * x.sin())
    }

    /// Analytic time derivative of [`lambda`](Self::lambda).
    pub fn lambda_dot(&self, t: f64) -> f64 {
        let a = self.drive_frequency();
        let x = a * t;
        let d = 1.0 + self.epsilon * x.sin();
        -self.epsilon * a * a * (x.sin() + self.epsilon) / (d * d)
    }

    /// Number of drive periods completed at the stop time.
    pub fn cycles(&self) -> f64 {
        self.drive_frequency() * self.duration / (2.0 * PI)
    }

    /// True when `p w1 T` is a positive multiple of `2 pi` (to relative `1e-9`).
    pub fn is_complete_cycles(&self) -> bool {
        let c = self.cycles();
        c >= 0.5 && (c - c.round()).abs() <= 1e-9 * c
    }
}

/// Snap `tau` onto the lattice of complete drive cycles, `tau = eps pi m / p`
/// in natural units. Returns `(m, tau_m)` with `m >= 1` chosen as the nearest
/// lattice point.
pub fn complete_cycle_tau(epsilon: f64, p: u32, tau: f64) -> (u64, f64) {
    let step = epsilon * PI / p as f64;
    let m = ((tau / step).round() as u64).max(1);
    (m, step * m as f64)
}

/// Largest lattice point not exceeding `tau` (at least one cycle).
pub fn complete_cycle_tau_floor(epsilon: f64, p: u32, tau: f64) -> (u64, f64) {
    let step = epsilon * PI / p as f64;
    let m = ((tau / step + 1e-9).floor() as u64).max(1);
    (m, step * m as f64)
}

/// Snap `tau` to a whole number of periods of the fundamental mode,
/// `tau = eps pi n` (nearest, `n >= 1`). Off-resonant pair amplitudes
/// oscillate as `sin((k + j) tau / eps)` and vanish only on this lattice, so
/// comparisons against resonant-only formulas should use it.
pub fn fundamental_period_tau(epsilon: f64, tau: f64) -> (u64, f64) {
    complete_cycle_tau(epsilon, 1, tau)
}

/// Largest point of the fundamental-period lattice not exceeding `tau`.
pub fn fundamental_period_tau_floor(epsilon: f64, tau: f64) -> (u64, f64) {
    complete_cycle_tau_floor(epsilon, 1, tau)
}

/// `w_k(t)`, `Omega_k(t)` and `lambda(t)` for a given trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstantaneousSpectrum {
    pub trajectory: MirrorTrajectory,
}

impl InstantaneousSpectrum {
    pub fn new(trajectory: MirrorTrajectory) -> Self {
        InstantaneousSpectrum { trajectory }
    }

    pub fn omega(&self, k: usize, t: f64) -> f64 {
        k as f64 * PI / self.trajectory.length(t)
    }

    /// Frequency of mode `k` with the mirror at rest at `L0`.
    pub fn omega_in(&self, k: usize) -> f64 {
        k as f64 * PI / self.trajectory.l0
    }

    pub fn lambda(&self, t: f64) -> f64 {
        self.trajectory.lambda(t)
    }

    pub fn lambda_dot(&self, t: f64) -> f64 {
        self.trajectory.lambda_dot(t)
    }

    /// Accumulated phase `Omega_k(t)` from the closed-form antiderivative of
    /// `1 / (1 + eps sin x)`.
    pub fn phase(&self, k: usize, t: f64) -> f64 {
        let tr = &self.trajectory;
        let wk = self.omega_in(k);
        if tr.epsilon == 0.0 {
            return wk * t;
        }
        let a = tr.drive_frequency();
        wk * unit_phase(tr.epsilon, a * t) / a
    }

    /// `Omega_k(t)` by adaptive quadrature of `w_k`. Independent of
    /// [`phase`](Self::phase); used to cross-check it.
    pub fn phase_by_quadrature(&self, k: usize, t: f64, tol: f64) -> f64 {
        let periods = (self.trajectory.drive_frequency() * t / (2.0 * PI)).ceil().max(1.0) as usize;
        quadrature::integrate(|s| self.omega(k, s), 0.0, t, tol, tol, periods)
    }
}

/// `G(x) = int_0^x ds / (1 + eps sin s)` for `0 <= eps < 1`.
fn unit_phase(eps: f64, x: f64) -> f64 {
    let s = (1.0 - eps * eps).sqrt();
    let f = |th: f64| 2.0 / s * (((0.5 * th).tan() + eps) / s).atan();
    let n = (x / (2.0 * PI)).round();
    let r = x - 2.0 * PI * n;
    f(r) - f(0.0) + n * 2.0 * PI / s
}

/// Closed-form coupling `g_jk = (-1)^(j-k) 2kj / (j^2 - k^2)`, zero on the
/// diagonal.
pub fn g_closed_form(j: usize, k: usize) -> f64 {
    if j == k {
        return 0.0;
    }
    let (jf, kf) = (j as f64, k as f64);
    let sign = if (j + k).is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * 2.0 * kf * jf / (jf * jf - kf * kf)
}

/// Truncated `g` and `h` tables.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTables {
    pub k_max: usize,
    pub l_sum_max: usize,
    g: DMatrix<f64>,
    h: DMatrix<f64>,
}

impl CouplingTables {
    pub fn g(&self, j: usize, k: usize) -> f64 {
        self.g[(j - 1, k - 1)]
    }

    pub fn h(&self, j: usize, k: usize) -> f64 {
        self.h[(j - 1, k - 1)]
    }

    /// 0-based `k_max x k_max` view of `g`.
    pub fn g_matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn h_matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

/// Builds `g` and `h = sum_l g_jl g_kl` (summed over `1..=l_sum_max`).
pub fn build_coupling_tables(k_max: usize, l_sum_max: usize) -> Result<CouplingTables> {
    if k_max == 0 {
        return Err(DceError::config("k_max must be at least 1"));
    }
    if l_sum_max < 4 * k_max {
        return Err(DceError::config(format!("l_sum_max = {l_sum_max} must be at least 4 * k_max = {}", 4 * k_max)));
    }
    let g = DMatrix::from_fn(k_max, k_max, |r, c| g_closed_form(r + 1, c + 1));
    let mut h = DMatrix::zeros(k_max, k_max);
    for j in 1..=k_max {
        for k in j..=k_max {
            // Smallest terms first.
            let s: f64 = (1..=l_sum_max).rev().map(|l| g_closed_form(j, l) * g_closed_form(k, l)).sum();
            h[(j - 1, k - 1)] = s;
            h[(k - 1, j - 1)] = s;
        }
    }
    Ok(CouplingTables { k_max, l_sum_max, g, h })
}

fn check_index(tables: &CouplingTables, k: usize, j: usize) {
    assert!(
        (1..=tables.k_max).contains(&k) && (1..=tables.k_max).contains(&j),
        "mode index ({k}, {j}) outside 1..={}",
        tables.k_max
    );
}

/// `mu_kj(t) = -(sqrt(j/k) g_jk + delta_jk / 2) lambda(t)`.
pub fn mu_coefficient(tables: &CouplingTables, spectrum: &InstantaneousSpectrum, k: usize, j: usize, t: f64) -> f64 {
    check_index(tables, k, j);
    mu_from_lambda(tables, k, j, spectrum.lambda(t))
}

fn mu_from_lambda(tables: &CouplingTables, k: usize, j: usize, lambda: f64) -> f64 {
    let delta = if k == j { 0.5 } else { 0.0 };
    -((j as f64 / k as f64).sqrt() * tables.g(j, k) + delta) * lambda
}

/// Effective-Hamiltonian coefficients `(A_kj, B_kj)` at time `t`.
pub fn hamiltonian_coefficients(
    tables: &CouplingTables,
    spectrum: &InstantaneousSpectrum,
    k: usize,
    j: usize,
    t: f64,
) -> (Complex64, Complex64) {
    check_index(tables, k, j);
    let lam = spectrum.lambda(t);
    coefficients_with_phases(tables, k, j, lam, spectrum.phase(k, t), spectrum.phase(j, t))
}

/// Same as [`hamiltonian_coefficients`] with externally supplied `lambda` and
/// phases `Omega_k`, `Omega_j`.
pub fn coefficients_with_phases(
    tables: &CouplingTables,
    k: usize,
    j: usize,
    lambda: f64,
    phase_k: f64,
    phase_j: f64,
) -> (Complex64, Complex64) {
    let mkj = mu_from_lambda(tables, k, j, lambda);
    let mjk = mu_from_lambda(tables, j, k, lambda);
    let a = if k == j {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::from_polar(0.5 * (mkj - mjk), -(phase_k - phase_j))
    };
    let b = Complex64::from_polar(0.5 * (mkj + mjk), -(phase_k + phase_j));
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn harmonic(eps: f64, p: u32) -> InstantaneousSpectrum {
        InstantaneousSpectrum::new(MirrorTrajectory::new(PI, eps, p, 100.0).unwrap())
    }

    #[test]
    fn g_examples() {
        assert_relative_eq!(g_closed_form(2, 1), -4.0 / 3.0, epsilon = 1e-15);
        assert_eq!(g_closed_form(3, 3), 0.0);
        let t = build_coupling_tables(6, 60).unwrap();
        for j in 1..=6 {
            assert_eq!(t.g(j, j), 0.0);
            for k in 1..=6 {
                assert_eq!(t.g(j, k), -t.g(k, j));
            }
        }
    }

    #[test]
    fn h_matches_brute_force_and_is_symmetric() {
        let t = build_coupling_tables(4, 40).unwrap();
        for j in 1..=4 {
            for k in 1..=4 {
                let mut s = 0.0;
                for l in 1..=40 {
                    s += g_closed_form(j, l) * g_closed_form(k, l);
                }
                assert_relative_eq!(t.h(j, k), s, max_relative = 1e-13);
                assert_eq!(t.h(j, k), t.h(k, j));
            }
        }
        // first three terms of h_11
        let partial: f64 = (2..=4).map(|l| g_closed_form(1, l).powi(2)).sum();
        assert_relative_eq!(partial, 16.0 / 9.0 + 9.0 / 16.0 + 64.0 / 225.0, epsilon = 1e-14);
    }

    #[test]
    fn h_tail_shrinks_like_one_over_cutoff() {
        let reference = build_coupling_tables(2, 40_000).unwrap().h(1, 1);
        let mut prev = f64::INFINITY;
        for l in [20, 40, 80, 160] {
            let d = (reference - build_coupling_tables(2, l).unwrap().h(1, 1)).abs();
            assert!(d < prev);
            // g_1l^2 ~ 4/l^2, so the tail is ~ 4/l
            assert!((d * l as f64 - 4.0).abs() < 0.3, "l = {l}, l * tail = {}", d * l as f64);
            prev = d;
        }
    }

    #[test]
    fn cutoff_violation_is_config_error() {
        assert!(matches!(build_coupling_tables(4, 15), Err(DceError::Config(_))));
        assert!(matches!(build_coupling_tables(0, 15), Err(DceError::Config(_))));
    }

    #[test]
    fn trajectory_validation() {
        assert!(MirrorTrajectory::new(PI, 0.2, 2, 1.0).is_err());
        assert!(MirrorTrajectory::new(PI, 0.01, 0, 1.0).is_err());
        assert!(MirrorTrajectory::new(-1.0, 0.01, 2, 1.0).is_err());
        assert!(MirrorTrajectory::new(PI, 0.0, 2, 1.0).is_ok());
        let tr = MirrorTrajectory::from_tau(1e-3, 2, 0.05).unwrap();
        assert_relative_eq!(tr.tau(), 0.05, max_relative = 1e-14);
        assert_relative_eq!(tr.omega1(), 1.0);
    }

    #[test]
    fn lambda_dot_matches_finite_difference() {
        let tr = MirrorTrajectory::new(PI, 0.05, 3, 10.0).unwrap();
        for &t in &[0.0, 0.3, 1.7, 4.2] {
            let h = 1e-5;
            let fd = (tr.lambda(t + h) - tr.lambda(t - h)) / (2.0 * h);
            assert_relative_eq!(tr.lambda_dot(t), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn phase_closed_form_matches_quadrature() {
        for &(eps, p) in &[(1e-3, 2), (0.01, 3), (0.1, 5)] {
            let s = harmonic(eps, p);
            for &t in &[0.0, 0.4, PI / p as f64, 2.0, 17.3, 100.0] {
                for k in [1, 3, 7] {
                    let a = s.phase(k, t);
                    let b = s.phase_by_quadrature(k, t, 1e-13);
                    assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300), "k={k} t={t}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn phase_static_limit_and_monotone() {
        let s = harmonic(0.0, 2);
        assert_eq!(s.phase(3, 2.5), 7.5);
        let s = harmonic(0.1, 2);
        let mut prev = -1.0;
        for i in 0..2000 {
            let v = s.phase(1, i as f64 * 0.01);
            assert!(v > prev);
            prev = v;
        }
        assert_eq!(s.phase(1, 0.0), 0.0);
    }

    #[test]
    fn mu_examples() {
        let eps = 1e-3;
        let s = harmonic(eps, 2);
        let t = build_coupling_tables(4, 40).unwrap();
        assert_relative_eq!(mu_coefficient(&t, &s, 1, 1, 0.0), -eps, max_relative = 1e-14);
        let expected = -(2.0f64).sqrt() * (-4.0 / 3.0) * 2.0 * eps;
        assert_relative_eq!(mu_coefficient(&t, &s, 1, 2, 0.0), expected, max_relative = 1e-14);
        let s0 = harmonic(0.0, 2);
        assert_eq!(mu_coefficient(&t, &s0, 2, 3, 1.3), 0.0);
    }

    #[test]
    fn coefficient_structure() {
        let s = harmonic(1e-2, 2);
        let t = build_coupling_tables(4, 40).unwrap();
        for &time in &[0.0, 0.7, 3.1] {
            for k in 1..=4 {
                let (a, _) = hamiltonian_coefficients(&t, &s, k, k, time);
                assert_eq!(a, Complex64::new(0.0, 0.0));
                for j in 1..=4 {
                    let (akj, bkj) = hamiltonian_coefficients(&t, &s, k, j, time);
                    let (ajk, bjk) = hamiltonian_coefficients(&t, &s, j, k, time);
                    // A is anti-Hermitian in (k, j), B symmetric
                    assert!((akj + ajk.conj()).norm() < 1e-15);
                    assert!((bkj - bjk).norm() < 1e-15);
                }
            }
        }
        let s0 = harmonic(0.0, 2);
        let (a, b) = hamiltonian_coefficients(&t, &s0, 1, 2, 0.5);
        assert_eq!((a.norm(), b.norm()), (0.0, 0.0));
    }

    #[test]
    fn coefficients_with_quadrature_phase_agree() {
        let s = harmonic(1e-2, 2);
        let t = build_coupling_tables(4, 40).unwrap();
        let time = 13.7;
        let (a, b) = hamiltonian_coefficients(&t, &s, 1, 3, time);
        let (k, j) = (1, 3);
        let mkj = -((j as f64 / k as f64).sqrt() * g_closed_form(j, k)) * s.lambda(time);
        let mjk = -((k as f64 / j as f64).sqrt() * g_closed_form(k, j)) * s.lambda(time);
        let ok = s.phase_by_quadrature(k, time, 1e-13);
        let oj = s.phase_by_quadrature(j, time, 1e-13);
        let a2 = 0.5 * (mkj - mjk) * Complex64::new(0.0, -(ok - oj)).exp();
        let b2 = 0.5 * (mkj + mjk) * Complex64::new(0.0, -(ok + oj)).exp();
        assert!((a - a2).norm() < 1e-12 * a.norm().max(1e-300));
        assert!((b - b2).norm() < 1e-12 * b.norm().max(1e-12));
    }

    #[test]
    fn complete_cycle_snapping() {
        let (m, tau) = complete_cycle_tau(1e-3, 2, 0.02);
        assert_eq!(m, 13);
        assert_relative_eq!(tau, 13.0 * PI * 1e-3 / 2.0);
        assert!(MirrorTrajectory::from_tau(1e-3, 2, tau).unwrap().is_complete_cycles());
        let (m, _) = complete_cycle_tau_floor(1e-3, 2, 0.05);
        assert_eq!(m, 31);
        assert!(!MirrorTrajectory::from_tau(1e-3, 2, 0.02).unwrap().is_complete_cycles());
    }
}
