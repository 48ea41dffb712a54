//! Slowly-varying-amplitude equations for the Bogoliubov coefficients under
//! parametric resonance (`p = 2`), restricted to odd modes.
//!
//! Rows are indexed by the odd mode `k = 1, 3, 5, ...`; every column `j` is an
//! independent solution of the same linear system, started from
//! `alpha_kj = delta_kj`, `beta_kj = 0`.
//!
//! The infinite chain transports amplitude towards high `k` at a rate that
//! grows with `k`, so a hard cutoff eventually reflects it back. The default
//! closure is an absorbing layer over the top of the retained band; the
//! variance and unitarity budgets absorbed there are integrated alongside the
//! state so the truncated solution still closes the exact balance laws.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{DceError, Result};
use crate::ode::{self, DenseSegment, OdeOptions};

/// Boundary treatment of the truncated chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Closure {
    /// Modes beyond the cutoff couple to nothing.
    HardCutoff,
    /// Damping `gamma_k = strength * 4k * r^2` on both `alpha` and `beta`
    /// rows, with `r` ramping in `ln k` from the odd mode at position
    /// `start_fraction * k_max` to the last retained mode.
    Sponge { start_fraction: f64, strength: f64 },
}

impl Default for Closure {
    fn default() -> Self {
        Closure::Sponge { start_fraction: 0.25, strength: 0.5 }
    }
}

/// Settings for one integration.
#[derive(Debug, Clone, PartialEq)]
pub struct SvaConfig {
    /// Number of retained odd modes `K` (indices `1, 3, ..., 2K - 1`).
    pub k_max: usize,
    pub tol: f64,
    pub closure: Closure,
    /// Odd column indices to integrate; `None` for all `K`.
    pub columns: Option<Vec<usize>>,
}

impl Default for SvaConfig {
    fn default() -> Self {
        SvaConfig { k_max: 64, tol: 1e-9, closure: Closure::default(), columns: None }
    }
}

impl SvaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max < 2 {
            return Err(DceError::config("resonance k_max must be at least 2 odd modes"));
        }
        if !(1e-12..=1e-6).contains(&self.tol) {
            return Err(DceError::config(format!("resonance tol {} outside [1e-12, 1e-6]", self.tol)));
        }
        if let Closure::Sponge { start_fraction, strength } = self.closure {
            if !(0.0..1.0).contains(&start_fraction) || !(strength > 0.0) {
                return Err(DceError::config("sponge needs start_fraction in [0, 1) and positive strength"));
            }
        }
        if let Some(cols) = &self.columns {
            if cols.is_empty() {
                return Err(DceError::config("column list is empty"));
            }
            for &c in cols {
                if c % 2 == 0 || c > 2 * self.k_max - 1 {
                    return Err(DceError::config(format!("column {c} is not a retained odd mode")));
                }
            }
        }
        Ok(())
    }

    fn column_list(&self) -> Vec<usize> {
        self.columns.clone().unwrap_or_else(|| (0..self.k_max).map(|i| 2 * i + 1).collect())
    }
}

/// Damping profile for each retained odd mode.
pub fn damping_profile(k_max: usize, closure: Closure) -> Vec<f64> {
    match closure {
        Closure::HardCutoff => vec![0.0; k_max],
        Closure::Sponge { start_fraction, strength } => {
            let i_s = ((start_fraction * k_max as f64).floor() as usize).min(k_max - 1);
            let ks = (2 * i_s + 1) as f64;
            let kt = (2 * k_max - 1) as f64;
            (0..k_max)
                .map(|i| {
                    let k = (2 * i + 1) as f64;
                    if kt <= ks {
                        return 0.0;
                    }
                    let r = ((k.ln() - ks.ln()) / (kt.ln() - ks.ln())).clamp(0.0, 1.0);
                    strength * 4.0 * k * r * r
                })
                .collect()
        }
    }
}

/// Odd-mode Bogoliubov coefficients at one `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovState {
    pub tau: f64,
    /// Number of retained odd rows.
    pub k_max: usize,
    /// Odd column indices present, in storage order.
    pub columns: Vec<usize>,
    /// `alpha[(i, c)]` is `alpha_{2i+1, columns[c]}`.
    pub alpha: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    /// Per column: integrated absorbed `u^T G u`, `v^T G v` and `2 u^T G v`
    /// with `u = alpha + beta`, `v = alpha - beta`. Zero under a hard cutoff.
    pub absorbed: Vec<[f64; 3]>,
}

impl BogoliubovState {
    /// `alpha = I`, `beta = 0`.
    pub fn initial(k_max: usize, columns: &[usize]) -> Self {
        let n = columns.len();
        let mut alpha = DMatrix::zeros(k_max, n);
        for (c, &j) in columns.iter().enumerate() {
            alpha[((j - 1) / 2, c)] = 1.0;
        }
        BogoliubovState {
            tau: 0.0,
            k_max,
            columns: columns.to_vec(),
            alpha,
            beta: DMatrix::zeros(k_max, n),
            absorbed: vec![[0.0; 3]; n],
        }
    }

    pub fn column_position(&self, j: usize) -> Option<usize> {
        self.columns.iter().position(|&c| c == j)
    }

    fn entry(&self, m: &DMatrix<f64>, k: usize, j: usize) -> f64 {
        if k.is_multiple_of(2) || j.is_multiple_of(2) || k == 0 || k > 2 * self.k_max - 1 {
            return 0.0;
        }
        let c = self.column_position(j).unwrap_or_else(|| panic!("column {j} was not integrated"));
        m[((k - 1) / 2, c)]
    }

    /// `alpha_kj` for 1-based mode indices; even indices give exactly zero.
    pub fn alpha(&self, k: usize, j: usize) -> f64 {
        self.entry(&self.alpha, k, j)
    }

    pub fn beta(&self, k: usize, j: usize) -> f64 {
        self.entry(&self.beta, k, j)
    }

    /// `sum_k (alpha_km^2 - beta_km^2)` plus the absorbed share; exactly one
    /// for the continuous dynamics.
    pub fn unitarity(&self, m: usize) -> f64 {
        let c = self.column_position(m).expect("column not integrated");
        let s: f64 = (0..self.k_max).map(|i| self.alpha[(i, c)].powi(2) - self.beta[(i, c)].powi(2)).sum();
        s + self.absorbed[c][2]
    }
}

/// Derivative of a state under the hard-cutoff system.
pub fn sva_rhs(state: &BogoliubovState) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = state.k_max;
    let n = state.columns.len();
    let mut da = DMatrix::zeros(k, n);
    let mut db = DMatrix::zeros(k, n);
    let zeros = vec![0.0; k];
    for c in 0..n {
        let a: Vec<f64> = state.alpha.column(c).iter().copied().collect();
        let b: Vec<f64> = state.beta.column(c).iter().copied().collect();
        let mut oa = vec![0.0; k];
        let mut ob = vec![0.0; k];
        column_rhs(&a, &b, &zeros, &mut oa, &mut ob);
        da.set_column(c, &nalgebra::DVector::from_vec(oa));
        db.set_column(c, &nalgebra::DVector::from_vec(ob));
    }
    (da, db)
}

/// Chain coupling `sqrt(k (k + 2))` between rows `i` and `i + 1` (`k = 2i + 1`).
fn link(i: usize) -> f64 {
    let k = (2 * i + 1) as f64;
    (k * (k + 2.0)).sqrt()
}

fn column_rhs(a: &[f64], b: &[f64], gamma: &[f64], da: &mut [f64], db: &mut [f64]) {
    let k = a.len();
    for i in 0..k {
        let mut sa = -gamma[i] * a[i];
        let mut sb = -gamma[i] * b[i];
        if i > 0 {
            let c = link(i - 1);
            sa += c * a[i - 1];
            sb += c * b[i - 1];
        }
        if i + 1 < k {
            let c = link(i);
            sa -= c * a[i + 1];
            sb -= c * b[i + 1];
        }
        da[i] = sa;
        db[i] = sb;
    }
    da[0] -= b[0];
    db[0] -= a[0];
}

/// Result of [`integrate`]: full states at the requested samples plus dense
/// output and running rate integrals for the first row.
#[derive(Debug, Clone)]
pub struct ResonanceTrajectory {
    pub config: SvaConfig,
    pub samples: Vec<BogoliubovState>,
    /// Per column, per accepted step: dense output of `(alpha_1j, beta_1j)`.
    pub first_row: Vec<Vec<DenseSegment>>,
    /// At each sample and column: `(int (alpha_1m + beta_1m)^2, int (alpha_1m - beta_1m)^2)`.
    pub rate_integrals: Vec<Vec<(f64, f64)>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl ResonanceTrajectory {
    /// `(alpha_1m, beta_1m)` at any `tau` inside the integrated range.
    pub fn first_row_at(&self, m: usize, tau: f64) -> Option<(f64, f64)> {
        let c = self.config.column_list().iter().position(|&x| x == m)?;
        if tau == 0.0 {
            return Some((if m == 1 { 1.0 } else { 0.0 }, 0.0));
        }
        let segs = &self.first_row[c];
        let i = segs.partition_point(|s| s.t0 + s.h < tau);
        let seg = segs.get(i)?;
        Some((seg.eval_one(0, tau), seg.eval_one(1, tau)))
    }

    pub fn tau_end(&self) -> f64 {
        self.first_row.first().and_then(|c| c.last()).map(|s| s.t0 + s.h).unwrap_or(0.0)
    }
}

/// One column integrated on its own adaptive step sequence.
struct ColumnRun {
    /// `(alpha, beta, absorbed)` at each sample.
    states: Vec<(Vec<f64>, Vec<f64>, [f64; 3])>,
    first_row: Vec<DenseSegment>,
    rates: Vec<(f64, f64)>,
    stats: ode::OdeStats,
}

// 5-point Gauss-Legendre on [0, 1]; exact for the squared quartic interpolant.
const GL_X: [f64; 5] = [0.046_910_077_030_668, 0.230_765_344_947_158, 0.5, 0.769_234_655_052_842, 0.953_089_922_969_332];
const GL_W: [f64; 5] = [0.118_463_442_528_095, 0.239_314_335_249_683, 0.284_444_444_444_444, 0.239_314_335_249_683, 0.118_463_442_528_095];

/// `(int (a + b)^2, int (a - b)^2)` of the first-row interpolant over `[seg.t0, t]`.
fn rate_increment(seg: &DenseSegment, t: f64) -> (f64, f64) {
    let len = t - seg.t0;
    let (mut q, mut p) = (0.0, 0.0);
    if len > 0.0 {
        for (x, w) in GL_X.iter().zip(GL_W) {
            let tq = seg.t0 + x * len;
            let (a, b) = (seg.eval_one(0, tq), seg.eval_one(1, tq));
            q += w * len * (a + b) * (a + b);
            p += w * len * (a - b) * (a - b);
        }
    }
    (q, p)
}

fn integrate_column(config: &SvaConfig, gamma: &[f64], column: usize, tau_samples: &[f64]) -> Result<ColumnRun> {
    let kk = config.k_max;
    let stride = 2 * kk + 3;
    let mut y0 = vec![0.0; stride];
    y0[(column - 1) / 2] = 1.0;
    let rhs = |_: f64, y: &[f64], dy: &mut [f64]| {
        let (a, rest) = y.split_at(kk);
        let (b, _) = rest.split_at(kk);
        let (da, rest) = dy.split_at_mut(kk);
        let (db, acc) = rest.split_at_mut(kk);
        column_rhs(a, b, gamma, da, db);
        let (mut qq, mut pp, mut qp) = (0.0, 0.0, 0.0);
        for i in 0..kk {
            if gamma[i] != 0.0 {
                let u = a[i] + b[i];
                let v = a[i] - b[i];
                qq += gamma[i] * u * u;
                pp += gamma[i] * v * v;
                qp += 2.0 * gamma[i] * u * v;
            }
        }
        acc[0] = qq;
        acc[1] = pp;
        acc[2] = qp;
    };
    let split = |y: &[f64]| (y[..kk].to_vec(), y[kk..2 * kk].to_vec(), [y[2 * kk], y[2 * kk + 1], y[2 * kk + 2]]);

    let mut run = ColumnRun { states: Vec::new(), first_row: Vec::new(), rates: Vec::new(), stats: Default::default() };
    let mut next = 0;
    while next < tau_samples.len() && tau_samples[next] == 0.0 {
        run.states.push(split(&y0));
        run.rates.push((0.0, 0.0));
        next += 1;
    }
    let tau_end = tau_samples.last().copied().unwrap_or(0.0);
    if tau_end == 0.0 {
        return Ok(run);
    }
    let all: Vec<usize> = (0..stride).collect();
    let first = [0, kk];
    let mut running = (0.0, 0.0);
    let ColumnRun { states, first_row, rates, .. } = &mut run;
    let (_, stats) = ode::integrate(rhs, 0.0, tau_end, &y0, &OdeOptions::new(config.tol), &all, |seg, _| {
        let fr = seg.select(&first);
        let end = seg.t0 + seg.h;
        while next < tau_samples.len() && tau_samples[next] <= end * (1.0 + 1e-14) {
            let t = tau_samples[next].min(end);
            states.push(split(&seg.eval(t)));
            let part = rate_increment(&fr, t);
            rates.push((running.0 + part.0, running.1 + part.1));
            next += 1;
        }
        let inc = rate_increment(&fr, end);
        running.0 += inc.0;
        running.1 += inc.1;
        first_row.push(fr);
    })?;
    run.stats = stats;
    Ok(run)
}

/// Integrates the system from `tau = 0`, storing full states at each entry of
/// `tau_samples` (sorted, non-negative). Each column runs on its own step
/// sequence, so a column's result does not depend on which others are present.
pub fn integrate(config: &SvaConfig, tau_samples: &[f64]) -> Result<ResonanceTrajectory> {
    config.validate()?;
    if tau_samples.windows(2).any(|w| w[1] < w[0]) || tau_samples.iter().any(|t| !(*t >= 0.0)) {
        return Err(DceError::config("tau samples must be sorted and non-negative"));
    }
    let kk = config.k_max;
    let columns = config.column_list();
    let gamma = damping_profile(kk, config.closure);
    let runs = columns
        .iter()
        .map(|&c| integrate_column(config, &gamma, c, tau_samples))
        .collect::<Result<Vec<_>>>()?;

    let init = BogoliubovState::initial(kk, &columns);
    let mut samples = Vec::with_capacity(tau_samples.len());
    let mut rate_integrals = Vec::with_capacity(tau_samples.len());
    for (s, &tau) in tau_samples.iter().enumerate() {
        let mut st = init.clone();
        st.tau = tau;
        let mut rates = Vec::with_capacity(columns.len());
        for (c, run) in runs.iter().enumerate() {
            let (a, b, acc) = &run.states[s];
            for i in 0..kk {
                st.alpha[(i, c)] = a[i];
                st.beta[(i, c)] = b[i];
            }
            st.absorbed[c] = *acc;
            rates.push(run.rates[s]);
        }
        samples.push(st);
        rate_integrals.push(rates);
    }
    let accepted_steps = runs.iter().map(|r| r.stats.accepted).sum();
    let rejected_steps = runs.iter().map(|r| r.stats.rejected).sum();
    Ok(ResonanceTrajectory {
        config: config.clone(),
        samples,
        first_row: runs.into_iter().map(|r| r.first_row).collect(),
        rate_integrals,
        accepted_steps,
        rejected_steps,
    })
}

/// Short- and long-time reference coefficients for `m = 2 mu + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticReference {
    pub mu_index: usize,
    /// `J_mu = (2 mu)! / (2^mu (mu!)^2)`.
    pub j: f64,
    /// `K_mu = (-1)^mu sqrt(2 mu + 1) / (mu + 1)`.
    pub k: f64,
}

impl AsymptoticReference {
    pub fn new(mu: usize) -> Self {
        // ln (2mu)! - 2 ln mu! - mu ln 2
        let ln_j: f64 = (1..=mu).map(|i| ((mu + i) as f64).ln() - (i as f64).ln()).sum::<f64>() - mu as f64 * 2f64.ln();
        let sign = if mu.is_multiple_of(2) { 1.0 } else { -1.0 };
        AsymptoticReference { mu_index: mu, j: ln_j.exp(), k: sign * ((2 * mu + 1) as f64).sqrt() / (mu as f64 + 1.0) }
    }

    pub fn mode(&self) -> usize {
        2 * self.mu_index + 1
    }
}

/// Leading small-`tau` behaviour `(alpha_1m, beta_1m)`.
pub fn asymptotic_small_tau(mu: usize, tau: f64) -> (f64, f64) {
    let r = AsymptoticReference::new(mu);
    let kj = r.k * r.j;
    ((mu as f64 + 1.0) * kj * tau.powi(mu as i32), -kj * tau.powi(mu as i32 + 1))
}

/// Large-`tau` magnitude `(2/pi)(-1)^mu / sqrt(2 mu + 1)` of the first-row
/// coefficients. The integrated `beta_1m` approaches minus this value.
pub fn asymptotic_large_tau(mu: usize) -> (f64, f64) {
    let sign = if mu.is_multiple_of(2) { 1.0 } else { -1.0 };
    let v = 2.0 / PI * sign / ((2 * mu + 1) as f64).sqrt();
    (v, v)
}
