//! Single-mode Gaussian statistics: quadrature variances, Fock populations,
//! diagonal and Renyi-2 entropies.
//!
//! Quadrature convention: `sigma_q = 1/2 sum_k (alpha_km + beta_km)^2` and
//! `sigma_p = 1/2 sum_k (alpha_km - beta_km)^2` for the odd-mode coefficients
//! produced by [`crate::resonance`]. With these signs the rate equations are
//! `d sigma_q / d tau = -(alpha_1m + beta_1m)^2` and
//! `d sigma_p / d tau = +(alpha_1m - beta_1m)^2`, `sigma_q` is the squeezed
//! quadrature and `beta_11 ~ -tau` at short time.

use log::warn;

use crate::error::{DceError, Result};
use crate::resonance::{BogoliubovState, ResonanceTrajectory};
use crate::xlogx;

/// Slack allowed on the uncertainty bound `det >= 1/4`.
pub const UNCERTAINTY_SLACK: f64 = 1e-12;

/// Second moments of one mode's quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCovariance {
    pub m: usize,
    pub tau: f64,
    pub sigma_q: f64,
    pub sigma_p: f64,
    pub sigma_qp: f64,
}

impl ModeCovariance {
    pub fn new(m: usize, tau: f64, sigma_q: f64, sigma_p: f64) -> Result<Self> {
        let c = ModeCovariance { m, tau, sigma_q, sigma_p, sigma_qp: 0.0 };
        c.check()?;
        Ok(c)
    }

    pub fn vacuum(m: usize) -> Self {
        ModeCovariance { m, tau: 0.0, sigma_q: 0.5, sigma_p: 0.5, sigma_qp: 0.0 }
    }

    pub fn det(&self) -> f64 {
        self.sigma_q * self.sigma_p - self.sigma_qp * self.sigma_qp
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma_q > 0.0 && self.sigma_p > 0.0) || self.det() < 0.25 - UNCERTAINTY_SLACK {
            return Err(DceError::InvalidState(format!(
                "covariance (m = {}, tau = {}) violates the uncertainty bound: sigma_q = {}, sigma_p = {}",
                self.m, self.tau, self.sigma_q, self.sigma_p
            )));
        }
        Ok(())
    }

    /// Mean quanta `N_m = (sigma_q + sigma_p)/2 - 1/2`.
    pub fn particle_number(&self) -> f64 {
        0.5 * (self.sigma_q + self.sigma_p) - 0.5
    }
}

/// Direct summation over the retained rows of column `m`, including the
/// budget absorbed by the closure layer.
pub fn variances_from_bogoliubov(state: &BogoliubovState, m: usize) -> Result<ModeCovariance> {
    if m.is_multiple_of(2) || m > 2 * state.k_max - 1 {
        return Err(DceError::config(format!("mode {m} is not a retained odd mode")));
    }
    let c = state
        .column_position(m)
        .ok_or_else(|| DceError::config(format!("column {m} was not integrated")))?;
    let (mut q, mut p) = (0.0, 0.0);
    let (mut q_top, mut p_top) = (0.0, 0.0);
    let top = state.k_max - (state.k_max / 8).max(1);
    for i in 0..state.k_max {
        let a = state.alpha[(i, c)];
        let b = state.beta[(i, c)];
        let (u2, v2) = ((a + b) * (a + b), (a - b) * (a - b));
        q += u2;
        p += v2;
        if i >= top {
            q_top += u2;
            p_top += v2;
        }
    }
    let [aq, ap, _] = state.absorbed[c];
    let sigma_q = 0.5 * q + aq;
    let sigma_p = 0.5 * p + ap;
    if 0.5 * q_top > 0.01 * sigma_q || 0.5 * p_top > 0.01 * sigma_p {
        warn!("mode {m} at tau = {}: more than 1% of the variance sits in the top rows; raise k_max", state.tau);
    }
    ModeCovariance::new(m, state.tau, sigma_q, sigma_p)
}

/// Variances from the rate equations, integrated along the first row of the
/// trajectory, at every stored sample.
pub fn variances_by_ode(trajectory: &ResonanceTrajectory, m: usize) -> Result<Vec<ModeCovariance>> {
    let c = trajectory
        .samples
        .first()
        .and_then(|s| s.column_position(m))
        .ok_or_else(|| DceError::config(format!("column {m} was not integrated")))?;
    trajectory
        .samples
        .iter()
        .zip(&trajectory.rate_integrals)
        .map(|(s, r)| ModeCovariance::new(m, s.tau, 0.5 - r[c].0, 0.5 + r[c].1))
        .collect()
}

/// How many populations to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NCut {
    Fixed(usize),
    /// Grow until five consecutive populations are below `1e-14` and the
    /// geometric tail bound is below `1e-10`.
    Adaptive,
}

/// Hard stop for [`NCut::Adaptive`].
pub const N_CUT_LIMIT: usize = 5_000_000;

/// Diagonal Fock populations of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePopulations {
    pub m: usize,
    pub tau: f64,
    pub probs: Vec<f64>,
    /// Upper estimate of the probability beyond the last entry.
    pub tail_bound: f64,
    /// Decay ratio used for the tail estimate.
    pub ratio: f64,
}

impl ModePopulations {
    pub fn n_cut(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Populations `rho^(n)` from a three-term recurrence that stays real in the
/// squeezed regime.
///
/// With `w = (2 sq + 1)(2 sp + 1)`, `u = (2 sq - 1)(2 sp - 1)` and
/// `b = 4 sq sp - 1`, the scaled sequence `t_n` obeys
/// `(n+1) t_{n+1} = (2n+1)(b/w) t_n - n (u/w) t_{n-1}` with `t_0 = 1`,
/// `t_1 = b/w`, and `rho^(n) = 2 t_n / sqrt(w)`.
pub fn populations(cov: &ModeCovariance, n_cut: NCut) -> Result<ModePopulations> {
    cov.check()?;
    let (sq, sp) = (cov.sigma_q, cov.sigma_p);
    let w = (2.0 * sq + 1.0) * (2.0 * sp + 1.0);
    let u = (2.0 * sq - 1.0) * (2.0 * sp - 1.0);
    let b = 4.0 * sq * sp - 1.0;
    let bw = b / w;
    let uw = u / w;
    let pref = 2.0 / w.sqrt();
    // largest characteristic root, using b^2 - u w = 4 (sq - sp)^2
    let ratio = ((b + 2.0 * (sq - sp).abs()) / w).clamp(0.0, 1.0 - 1e-300);

    let limit = match n_cut {
        NCut::Fixed(n) => n,
        NCut::Adaptive => N_CUT_LIMIT,
    };
    let mut probs = Vec::with_capacity(64);
    let (mut t_prev, mut t) = (0.0, 1.0);
    let mut small_run = 0;
    let mut n = 0usize;
    loop {
        probs.push(pref * t);
        let rho = probs[n];
        if rho < -1e-15 {
            return Err(DceError::InvalidState(format!("negative population {rho} at n = {n}")));
        }
        if rho.abs() < 1e-14 {
            small_run += 1;
        } else {
            small_run = 0;
        }
        let last_two = if n > 0 { rho.abs().max(probs[n - 1].abs()) } else { rho.abs() };
        let tail = if ratio > 0.0 { last_two * ratio / (1.0 - ratio) } else { 0.0 };
        let done = match n_cut {
            NCut::Fixed(_) => n >= limit,
            NCut::Adaptive => (small_run >= 5 && tail < 1e-10) || (ratio == 0.0 && n >= 1),
        };
        if done {
            let probs = probs.into_iter().map(|x| x.max(0.0)).collect();
            return Ok(ModePopulations { m: cov.m, tau: cov.tau, probs, tail_bound: tail, ratio });
        }
        if n >= limit {
            return Err(DceError::Cutoff { n_cut: n, tail });
        }
        let nf = n as f64;
        let t_next = if n == 0 { bw } else { ((2.0 * nf + 1.0) * bw * t - nf * uw * t_prev) / (nf + 1.0) };
        t_prev = t;
        t = t_next;
        n += 1;
    }
}

/// Diagonal entropy with an estimate of the truncated tail's contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEntropy {
    pub s_d: f64,
    pub tail_bound: f64,
}

/// `-sum rho ln rho`; fails if the tail estimate exceeds `1e-6`.
pub fn mode_diagonal_entropy(pop: &ModePopulations) -> Result<ModeEntropy> {
    let s_d = -pop.probs.iter().map(|&p| xlogx(p)).sum::<f64>();
    let n = pop.probs.len();
    let last = pop.probs[n.saturating_sub(2)..].iter().cloned().fold(0.0, f64::max);
    let r = pop.ratio;
    let tail_bound = if last > 0.0 && r > 0.0 {
        // geometric continuation rho_n r^j, j >= 1
        let a = r / (1.0 - r);
        -xlogx(last) * a - last * r.ln() * a / (1.0 - r)
    } else {
        0.0
    };
    if tail_bound > 1e-6 {
        return Err(DceError::Cutoff { n_cut: n.saturating_sub(1), tail: tail_bound });
    }
    Ok(ModeEntropy { s_d, tail_bound })
}

/// `S_R = 1/2 ln det Sigma`, reported without removing the vacuum offset
/// `-ln 2`.
pub fn renyi2_entropy(cov: &ModeCovariance) -> Result<f64> {
    cov.check()?;
    Ok(0.5 * cov.det().ln())
}

/// Long-time coefficients `C^(n)` and their entropy sum.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticCoefficients {
    pub t_m: f64,
    pub c: Vec<f64>,
    /// `-sum_n C ln C` up to the cutoff; grows without bound with `n_cut`.
    pub script_s: f64,
}

/// `C^(n) = c_n / sqrt(1 + T)` with `c_0 = 1`, `c_1 = 1/(1+T)`,
/// `(n+1) c_{n+1} = (2n+1)/(1+T) c_n - n (1-T)/(1+T) c_{n-1}` and
/// `T = 1/(2 sigma_q)`.
pub fn asymptotic_coefficients(cov: &ModeCovariance, n_cut: usize) -> AsymptoticCoefficients {
    let t_m = 1.0 / (2.0 * cov.sigma_q);
    let a = 1.0 / (1.0 + t_m);
    let q = (1.0 - t_m) / (1.0 + t_m);
    let norm = (1.0 + t_m).sqrt();
    let mut c = Vec::with_capacity(n_cut + 1);
    let (mut prev, mut cur) = (0.0, 1.0);
    for n in 0..=n_cut {
        c.push(cur / norm);
        let nf = n as f64;
        let next = if n == 0 { a } else { ((2.0 * nf + 1.0) * a * cur - nf * q * prev) / (nf + 1.0) };
        prev = cur;
        cur = next;
    }
    let script_s = -c.iter().map(|&x| xlogx(x)).sum::<f64>();
    AsymptoticCoefficients { t_m, c, script_s }
}

/// Everything reported for one mode at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub cov: ModeCovariance,
    pub n_m: f64,
    pub s_d: f64,
    pub s_r2: f64,
    pub n_cut: usize,
    pub total_probability: f64,
    pub tail_bound: f64,
}

pub fn summarize(cov: &ModeCovariance) -> Result<ModeSummary> {
    let pop = populations(cov, NCut::Adaptive)?;
    let ent = mode_diagonal_entropy(&pop)?;
    Ok(ModeSummary {
        cov: *cov,
        n_m: cov.particle_number(),
        s_d: ent.s_d,
        s_r2: renyi2_entropy(cov)?,
        n_cut: pop.n_cut(),
        total_probability: pop.total(),
        tail_bound: pop.tail_bound,
    })
}
