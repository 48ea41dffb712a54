//! Exact mode-function oracle: integrates the coupled equations for the
//! instantaneous-basis amplitudes `Q_j^(k)(t)` and extracts Bogoliubov
//! coefficients once the mirror is back at `L0`.
//!
//! Equation of motion (`lambda = L'/L`):
//!
//! ```text
//! Q''_n + w_n(t)^2 Q_n = -2 lambda sum_j g_nj Q'_j - lambda' sum_j g_nj Q_j + lambda^2 sum_j h_nj Q_j
//! ```
//!
//! The canonical momentum `P = Q' + lambda g Q` is continuous where the
//! mirror velocity jumps (start and stop of the motion), which fixes
//! `Q'(0+)` and the momentum used for extraction at `T`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::cavity::{CouplingTables, InstantaneousSpectrum, MirrorTrajectory};
use crate::error::{DceError, Result};

/// Default number of modes for oracle runs.
pub const DEFAULT_K_MAX: usize = 16;
/// Points per period of the fastest retained mode.
pub const POINTS_PER_PERIOD: f64 = 20.0;

/// Mode functions at time `t`: column `k` is the solution started in mode `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFunctionState {
    pub t: f64,
    pub k_max: usize,
    /// `q[(j-1, k-1)] = Q_j^(k)`.
    pub q: DMatrix<Complex64>,
    /// Left-limit time derivative at `t`.
    pub qdot: DMatrix<Complex64>,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Variant {
    /// Drop every coupling term and hold the frequencies at their initial
    /// values; used to check the integrator against free evolution.
    frozen: bool,
}

/// Integrates from the vacuum mode functions to `T = trajectory.duration`.
pub fn integrate_modes(
    trajectory: &MirrorTrajectory,
    tables: &CouplingTables,
    k_max: usize,
    tol: f64,
) -> Result<ModeFunctionState> {
    integrate_variant(trajectory, tables, k_max, tol, Variant::default())
}

fn integrate_variant(
    trajectory: &MirrorTrajectory,
    tables: &CouplingTables,
    k_max: usize,
    tol: f64,
    variant: Variant,
) -> Result<ModeFunctionState> {
    if k_max == 0 || k_max > tables.k_max {
        return Err(DceError::config(format!("field k_max = {k_max} must lie in 1..={}", tables.k_max)));
    }
    if !(tol > 0.0 && tol <= 1e-8) {
        return Err(DceError::config(format!("field tolerance {tol} must be in (0, 1e-8]")));
    }
    let sys = System::new(trajectory, tables, k_max, variant);
    let t_end = trajectory.duration;
    let kk = k_max;
    let y0 = sys.initial();
    if t_end == 0.0 {
        return Ok(sys.unpack(0.0, &y0, 0));
    }

    // L(t) is periodic, so the flow over T is (remainder) o (one period)^q.
    let period = 2.0 * PI / trajectory.drive_frequency();
    let q = (t_end / period + 1e-9).floor() as u64;
    let rem = (t_end - q as f64 * period).max(0.0);
    let mut total_steps = 0;
    let mut flow = DMatrix::identity(2 * kk, 2 * kk);
    if q > 0 {
        let (one, n) = sys.transfer(0.0, period, 0.5 * tol / q as f64)?;
        flow = matrix_power(&one, q);
        total_steps += n;
    }
    if rem > 1e-12 * period {
        let (last, n) = sys.transfer(0.0, rem, 0.5 * tol)?;
        flow = last * flow;
        total_steps += n;
    }
    Ok(sys.unpack(t_end, &(flow * y0), total_steps))
}

fn matrix_power(m: &DMatrix<f64>, mut e: u64) -> DMatrix<f64> {
    let mut base = m.clone();
    let mut acc = DMatrix::identity(m.nrows(), m.ncols());
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

const MAX_DOUBLINGS: u32 = 8;

/// Linear system `y' = M(t) y` for the stacked real solutions.
///
/// `y` is `2K x 2K`: rows `0..K` hold `Q`, rows `K..2K` hold `Q'`; column
/// `2k` is the real part and `2k + 1` the imaginary part of solution `k`.
struct System {
    tr: MirrorTrajectory,
    spec: InstantaneousSpectrum,
    kk: usize,
    g: DMatrix<f64>,
    h: DMatrix<f64>,
    omega_in: Vec<f64>,
    coupled: bool,
}

impl System {
    fn new(trajectory: &MirrorTrajectory, tables: &CouplingTables, kk: usize, variant: Variant) -> Self {
        let spec = InstantaneousSpectrum::new(*trajectory);
        System {
            tr: *trajectory,
            spec,
            kk,
            g: tables.g_matrix().view((0, 0), (kk, kk)).into_owned(),
            h: tables.h_matrix().view((0, 0), (kk, kk)).into_owned(),
            omega_in: (1..=kk).map(|k| spec.omega_in(k)).collect(),
            coupled: !variant.frozen,
        }
    }

    /// `Q(0) = I`, `Q'(0+) = -i w_k delta - lambda(0) g` (momentum continuity).
    fn initial(&self) -> DMatrix<f64> {
        let kk = self.kk;
        let lam0 = if self.coupled { self.spec.lambda(0.0) } else { 0.0 };
        let mut y = DMatrix::zeros(2 * kk, 2 * kk);
        for k in 0..kk {
            y[(k, 2 * k)] = 1.0;
            for j in 0..kk {
                y[(kk + j, 2 * k)] = -lam0 * self.g[(j, k)];
            }
            y[(kk + k, 2 * k + 1)] = -self.omega_in[k];
        }
        y
    }

    fn generator(&self, t: f64) -> DMatrix<f64> {
        let kk = self.kk;
        let mut m = DMatrix::zeros(2 * kk, 2 * kk);
        let (lam, lam_dot, inv_len) = if self.coupled {
            let x = self.tr.drive_frequency() * t;
            (self.spec.lambda(t), self.spec.lambda_dot(t), 1.0 / (1.0 + self.tr.epsilon * x.sin()))
        } else {
            (0.0, 0.0, 1.0)
        };
        for n in 0..kk {
            m[(n, kk + n)] = 1.0;
            let w = self.omega_in[n] * inv_len;
            m[(kk + n, n)] -= w * w;
            if self.coupled {
                for j in 0..kk {
                    m[(kk + n, j)] += -lam_dot * self.g[(n, j)] + lam * lam * self.h[(n, j)];
                    m[(kk + n, kk + j)] = -2.0 * lam * self.g[(n, j)];
                }
            }
        }
        m
    }

    /// Transfer matrix over `[t0, t1]`, halving the step until two successive
    /// results agree to `tol`.
    fn transfer(&self, t0: f64, t1: f64, tol: f64) -> Result<(DMatrix<f64>, usize)> {
        let w_fast = self.omega_in[self.kk - 1] / (1.0 - self.tr.epsilon);
        let h_cap = 2.0 * PI / (w_fast * POINTS_PER_PERIOD);
        let id = DMatrix::identity(2 * self.kk, 2 * self.kk);
        let mut steps = ((t1 - t0) / h_cap).ceil().max(1.0) as usize;
        let mut coarse = self.run(&id, t0, t1, steps)?;
        for _ in 0..MAX_DOUBLINGS {
            let fine = self.run(&id, t0, t1, 2 * steps)?;
            let diff = (&fine - &coarse).amax();
            // sixth-order scheme: error of the fine run ~ diff / (2^6 - 1)
            if diff / 63.0 <= tol {
                return Ok((fine, 2 * steps));
            }
            steps *= 2;
            coarse = fine;
        }
        Err(DceError::Integration {
            reached: t0,
            reason: format!("step doubling did not reach tol {tol:e} with {steps} steps; reduce k_max or loosen tol"),
        })
    }

    /// Fixed-step three-stage Gauss-Legendre collocation. The scheme is
    /// symplectic, so the Wronskian (and with it Bogoliubov unitarity) is
    /// conserved up to round-off for any step size.
    fn run(&self, y0: &DMatrix<f64>, t_start: f64, t_end: f64, steps: usize) -> Result<DMatrix<f64>> {
        let n = y0.nrows();
        let h = (t_end - t_start) / steps as f64;
        let r15 = 15f64.sqrt();
        let c = [0.5 - r15 / 10.0, 0.5, 0.5 + r15 / 10.0];
        let a = [
            [5.0 / 36.0, 2.0 / 9.0 - r15 / 15.0, 5.0 / 36.0 - r15 / 30.0],
            [5.0 / 36.0 + r15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - r15 / 24.0],
            [5.0 / 36.0 + r15 / 30.0, 2.0 / 9.0 + r15 / 15.0, 5.0 / 36.0],
        ];
        let b = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0];
        let mut y = y0.clone();
        let mut big = DMatrix::zeros(3 * n, 3 * n);
        let mut rhs = DMatrix::zeros(3 * n, y.ncols());
        for s in 0..steps {
            let t0 = t_start + s as f64 * h;
            let ms: Vec<DMatrix<f64>> = c.iter().map(|ci| self.generator(t0 + ci * h)).collect();
            // (I - h (A x I) blockdiag M) K = blockdiag(M) [y; y; y], stage unknowns K_i
            big.fill(0.0);
            for i in 0..3 {
                for r in 0..n {
                    big[(i * n + r, i * n + r)] = 1.0;
                }
                for j in 0..3 {
                    let f = -h * a[i][j];
                    let mut blk = big.view_mut((i * n, j * n), (n, n));
                    blk += &ms[i] * f;
                }
                let my = &ms[i] * &y;
                rhs.view_mut((i * n, 0), (n, y.ncols())).copy_from(&my);
            }
            let lu = big.clone().lu();
            let k = lu.solve(&rhs).ok_or_else(|| DceError::Integration {
                reached: t0,
                reason: "singular collocation system".into(),
            })?;
            for i in 0..3 {
                y += k.view((i * n, 0), (n, y.ncols())) * (h * b[i]);
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(DceError::Integration { reached: t_end, reason: "non-finite mode functions".into() });
        }
        Ok(y)
    }

    fn unpack(&self, t: f64, y: &DMatrix<f64>, steps: usize) -> ModeFunctionState {
        let kk = self.kk;
        let mut q = DMatrix::from_element(kk, kk, Complex64::new(0.0, 0.0));
        let mut qdot = q.clone();
        for k in 0..kk {
            for j in 0..kk {
                q[(j, k)] = Complex64::new(y[(j, 2 * k)], y[(j, 2 * k + 1)]);
                qdot[(j, k)] = Complex64::new(y[(kk + j, 2 * k)], y[(kk + j, 2 * k + 1)]);
            }
        }
        ModeFunctionState { t, k_max: kk, q, qdot, steps }
    }
}

/// Bogoliubov coefficients from the exact mode functions.
///
/// Index convention matches [`crate::resonance`]: `alpha[(k-1, j-1)]` is
/// `alpha_kj` with `k` the initial (in) mode and `j` the final (out) mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBogoliubov {
    pub t: f64,
    pub alpha: DMatrix<Complex64>,
    pub beta: DMatrix<Complex64>,
}

impl FieldBogoliubov {
    pub fn particle_number(&self) -> f64 {
        self.beta.iter().map(|b| b.norm_sqr()).sum()
    }

    /// Largest deviation of `sum_k (|alpha_km|^2 - |beta_km|^2)` from one over
    /// out-modes `m <= m_max`.
    pub fn unitarity_defect_out(&self, m_max: usize) -> f64 {
        (0..m_max.min(self.alpha.ncols()))
            .map(|m| {
                let s: f64 =
                    (0..self.alpha.nrows()).map(|k| self.alpha[(k, m)].norm_sqr() - self.beta[(k, m)].norm_sqr()).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Same over in-modes: `sum_j (|alpha_kj|^2 - |beta_kj|^2)`.
    pub fn unitarity_defect_in(&self, k_max: usize) -> f64 {
        (0..k_max.min(self.alpha.nrows()))
            .map(|k| {
                let s: f64 =
                    (0..self.alpha.ncols()).map(|j| self.alpha[(k, j)].norm_sqr() - self.beta[(k, j)].norm_sqr()).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Matches `Q` and the canonical momentum at `T` to free oscillations with
/// the rest frequencies `w_j = j pi / L0`.
pub fn extract_bogoliubov(
    state: &ModeFunctionState,
    trajectory: &MirrorTrajectory,
    tables: &CouplingTables,
) -> Result<FieldBogoliubov> {
    let l_t = trajectory.length(state.t);
    if (l_t - trajectory.l0).abs() > 1e-9 * trajectory.l0 {
        return Err(DceError::ExtractionInvalid(format!(
            "mirror at L(T) = {l_t} differs from L0 = {}; stop after complete cycles",
            trajectory.l0
        )));
    }
    let spec = InstantaneousSpectrum::new(*trajectory);
    let kk = state.k_max;
    let lam = spec.lambda(state.t);
    let g = tables.g_matrix().view((0, 0), (kk, kk)).into_owned().map(|x| Complex64::new(x, 0.0));
    let p = &state.qdot + &g * &state.q * Complex64::new(lam, 0.0);
    let mut alpha = DMatrix::from_element(kk, kk, Complex64::new(0.0, 0.0));
    let mut beta = alpha.clone();
    let t = state.t;
    for k in 0..kk {
        let wk = spec.omega_in(k + 1);
        for j in 0..kk {
            let wj = spec.omega_in(j + 1);
            let pref = 0.5 * (wj / wk).sqrt();
            let qj = state.q[(j, k)];
            let pj = p[(j, k)] * Complex64::new(0.0, 1.0 / wj);
            alpha[(k, j)] = Complex64::from_polar(pref, wj * t) * (qj + pj);
            beta[(k, j)] = Complex64::from_polar(pref, -wj * t) * (qj - pj);
        }
    }
    if alpha.iter().chain(beta.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DceError::ExtractionInvalid("non-finite coefficients".into()));
    }
    Ok(FieldBogoliubov { t, alpha, beta })
}
