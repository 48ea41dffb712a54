//! Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! The integrator works on flat `f64` slices so that callers can pack
//! matrices of any shape into the state.

use crate::error::{DceError, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-size control parameters.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step; `f64::INFINITY` for none.
    pub h_max: f64,
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn new(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, h_max: f64::INFINITY, h_init: None, max_steps: 10_000_000 }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

/// Interpolation data for one accepted step, restricted to a chosen set of
/// components.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseSegment {
    /// Restrict to a subset of the stored components (positions within the
    /// stored set, not state indices).
    pub fn select(&self, positions: &[usize]) -> DenseSegment {
        let pick = |v: &Vec<f64>| positions.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        DenseSegment {
            t0: self.t0,
            h: self.h,
            rcont: [pick(&self.rcont[0]), pick(&self.rcont[1]), pick(&self.rcont[2]), pick(&self.rcont[3]), pick(&self.rcont[4])],
        }
    }

    /// Interpolated value of one stored component.
    pub fn eval_one(&self, position: usize, t: f64) -> f64 {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = |k: usize| self.rcont[k][position];
        r(0) + th * (r(1) + th1 * (r(2) + th * (r(3) + th1 * r(4))))
    }

    /// Interpolated value of the stored components at `t` in `[t0, t0 + h]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }
}

/// Accumulated statistics from one call to [`integrate`].
#[derive(Debug, Clone, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrate `dy/dt = f(t, y)` from `t0` to `t1` (`t1 > t0`).
///
/// `f(t, y, dy)` writes the derivative into `dy`. After every accepted step the
/// callback `on_step(segment, y_new)` is invoked; `segment` carries dense
/// output for components `dense[..]` (empty slice for none). Returns the
/// final state.
pub fn integrate<F, S>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    opts: &OdeOptions,
    dense: &[usize],
    mut on_step: S,
) -> Result<(Vec<f64>, OdeStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(&DenseSegment, &[f64]),
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    if t1 <= t0 || n == 0 {
        return Ok((y, stats));
    }
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    f(t0, &y, &mut k1);
    stats.evaluations += 1;

    let mut t = t0;
    let span = t1 - t0;
    let mut h = opts.h_init.unwrap_or_else(|| initial_step(&y, &k1, opts, span)).min(opts.h_max).min(span);
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(DceError::Integration { reached: t, reason: "step budget exhausted".into() });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(DceError::Integration { reached: t, reason: "step size underflow".into() });
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + h };
        f(t_new, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t_new, &ynew, &mut k7);
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sk) * (e / sk);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            return Err(DceError::Integration { reached: t, reason: "non-finite error estimate".into() });
        }

        if err <= 1.0 {
            stats.accepted += 1;
            if !dense.is_empty() {
                let mut rc: [Vec<f64>; 5] = Default::default();
                for r in rc.iter_mut() {
                    r.reserve_exact(dense.len());
                }
                for &i in dense {
                    let dy = ynew[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    rc[0].push(y[i]);
                    rc[1].push(dy);
                    rc[2].push(bspl);
                    rc[3].push(dy - h * k7[i] - bspl);
                    rc[4].push(
                        h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]),
                    );
                }
                on_step(&DenseSegment { t0: t, h, rcont: rc }, &ynew);
            } else {
                on_step(&DenseSegment { t0: t, h, rcont: Default::default() }, &ynew);
            }
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            if last {
                return Ok((y, stats));
            }
            // PI controller (Hairer's DOPRI5 defaults).
            let fac11 = err.max(1e-10).powf(0.17);
            let mut fac = fac11 / fac_old.powf(0.04) / 0.9;
            fac = fac.clamp(0.1, 10.0);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            h = h_new.min(opts.h_max);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac11 = err.powf(0.17);
            h /= (fac11 / 0.9).min(5.0);
            last_rejected = true;
        }
    }
}

fn initial_step(y: &[f64], f0: &[f64], opts: &OdeOptions, span: f64) -> f64 {
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..y.len() {
        let sk = opts.atol + opts.rtol * y[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y[i] / sk).powi(2);
    }
    let h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * (dny / dnf).sqrt() };
    h.min(span).max(1e-10 * span)
}
