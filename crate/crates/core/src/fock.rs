//! Truncated multimode Fock-space oracle for the effective Hamiltonian.
//!
//! The vacuum is propagated as a state vector; the density operator is only
//! formed for reporting.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::cavity::{coefficients_with_phases, CouplingTables, InstantaneousSpectrum};
use crate::error::{DceError, Result};
use crate::expm::{self, MatVec};
use crate::xlogx;

const I_HALF: Complex64 = Complex64 { re: 0.0, im: 0.5 };

/// Occupation-number basis with a cap on total quanta.
#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    pub mode_count: usize,
    pub max_total_quanta: usize,
    pub even_only: bool,
    states: Vec<Vec<u8>>,
    index_map: HashMap<Vec<u8>, usize>,
}

impl FockBasis {
    /// States with `sum n_i <= n_max`, ordered by total quanta and then
    /// lexicographically. With `even_only` only even totals are kept.
    pub fn new(mode_count: usize, max_total_quanta: usize, even_only: bool) -> Result<Self> {
        if mode_count == 0 {
            return Err(DceError::config("Fock basis needs at least one mode"));
        }
        if max_total_quanta > 255 {
            return Err(DceError::config("max_total_quanta must be below 256"));
        }
        let mut states = Vec::new();
        for total in 0..=max_total_quanta {
            if even_only && total % 2 == 1 {
                continue;
            }
            let mut layer = Vec::new();
            compositions(mode_count, total, &mut vec![0u8; mode_count], 0, &mut layer);
            layer.sort();
            states.extend(layer);
        }
        let index_map = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(FockBasis { mode_count, max_total_quanta, even_only, states, index_map })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i]
    }

    pub fn index_of(&self, occupation: &[u8]) -> Option<usize> {
        self.index_map.get(occupation).copied()
    }
}

fn compositions(modes: usize, remaining: usize, cur: &mut Vec<u8>, pos: usize, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == modes {
        cur[pos] = remaining as u8;
        out.push(cur.clone());
        return;
    }
    for n in 0..=remaining {
        cur[pos] = n as u8;
        compositions(modes, remaining - n, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    A,
    AConjT,
    BConj,
    BT,
}

#[derive(Debug, Clone, Copy)]
struct Triplet {
    slot: usize,
    pair: usize,
    kind: Kind,
    factor: f64,
}

/// Sparsity pattern of `H_eff` on a basis, with the operator matrix elements
/// precomputed so that only the time-dependent coefficients change.
#[derive(Debug, Clone)]
pub struct HamiltonianTemplate {
    dim: usize,
    modes: usize,
    pattern: Vec<(usize, usize)>,
    triplets: Vec<Triplet>,
}

impl HamiltonianTemplate {
    pub fn new(basis: &FockBasis) -> Self {
        let m = basis.mode_count;
        let mut slots: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pattern = Vec::new();
        let mut triplets = Vec::new();
        let mut push = |row: usize, col: usize, pair: usize, kind: Kind, factor: f64| {
            let slot = *slots.entry((row, col)).or_insert_with(|| {
                pattern.push((row, col));
                pattern.len() - 1
            });
            triplets.push(Triplet { slot, pair, kind, factor });
        };
        for (col, state) in basis.states().iter().enumerate() {
            for k in 0..m {
                for j in 0..m {
                    // pair index for coefficients A_kj, B_kj (k, j 0-based)
                    let pair = k * m + j;
                    // b_j^dag b_k
                    if state[k] > 0 {
                        let mut s = state.clone();
                        let mut f = (s[k] as f64).sqrt();
                        s[k] -= 1;
                        f *= (s[j] as f64 + 1.0).sqrt();
                        s[j] += 1;
                        if let Some(row) = basis.index_of(&s) {
                            push(row, col, pair, Kind::A, f);
                            push(col, row, pair, Kind::AConjT, f);
                        }
                    }
                    // b_j^dag b_k^dag
                    let mut s = state.clone();
                    let mut f = (s[k] as f64 + 1.0).sqrt();
                    s[k] += 1;
                    f *= (s[j] as f64 + 1.0).sqrt();
                    s[j] += 1;
                    if let Some(row) = basis.index_of(&s) {
                        push(row, col, pair, Kind::BConj, f);
                        push(col, row, pair, Kind::BT, f);
                    }
                }
            }
        }
        HamiltonianTemplate { dim: basis.dim(), modes: m, pattern, triplets }
    }

    pub fn nnz(&self) -> usize {
        self.pattern.len()
    }

    /// Coefficients `(A_kj, B_kj)` for all ordered pairs at time `t`, row-major
    /// in `(k, j)`.
    fn coefficients(&self, tables: &CouplingTables, spectrum: &InstantaneousSpectrum, t: f64) -> Vec<(Complex64, Complex64)> {
        let m = self.modes;
        let lam = spectrum.lambda(t);
        let phases: Vec<f64> = (1..=m).map(|k| spectrum.phase(k, t)).collect();
        let mut out = Vec::with_capacity(m * m);
        for k in 1..=m {
            for j in 1..=m {
                out.push(coefficients_with_phases(tables, k, j, lam, phases[k - 1], phases[j - 1]));
            }
        }
        out
    }

    /// Sparse `H_eff(t)`.
    pub fn evaluate(&self, tables: &CouplingTables, spectrum: &InstantaneousSpectrum, t: f64) -> SparseHermitian {
        let coef = self.coefficients(tables, spectrum, t);
        let mut vals = vec![Complex64::new(0.0, 0.0); self.pattern.len()];
        for tr in &self.triplets {
            let (a, b) = coef[tr.pair];
            let c = match tr.kind {
                Kind::A => I_HALF * a,
                Kind::AConjT => -I_HALF * a.conj(),
                Kind::BConj => I_HALF * b.conj(),
                Kind::BT => -I_HALF * b,
            };
            vals[tr.slot] += c * tr.factor;
        }
        SparseHermitian { dim: self.dim, pattern: self.pattern.clone(), vals }
    }
}

/// Hermitian matrix in coordinate form.
#[derive(Debug, Clone)]
pub struct SparseHermitian {
    dim: usize,
    pattern: Vec<(usize, usize)>,
    vals: Vec<Complex64>,
}

impl SparseHermitian {
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (&(r, c), v) in self.pattern.iter().zip(&self.vals) {
            m[(r, c)] += *v;
        }
        m
    }

    /// `a * self + b * other`; both must come from the same template.
    fn combine(&self, a: f64, other: &SparseHermitian, b: f64) -> SparseHermitian {
        let vals = self.vals.iter().zip(&other.vals).map(|(x, y)| x * a + y * b).collect();
        SparseHermitian { dim: self.dim, pattern: self.pattern.clone(), vals }
    }
}

impl MatVec for SparseHermitian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        for o in out.iter_mut() {
            *o = Complex64::new(0.0, 0.0);
        }
        for (&(r, c), val) in self.pattern.iter().zip(&self.vals) {
            out[r] += val * v[c];
        }
    }

    fn norm_bound(&self) -> f64 {
        let mut cols = vec![0.0; self.dim];
        for (&(_, c), v) in self.pattern.iter().zip(&self.vals) {
            cols[c] += v.norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }
}

/// Dense `H_eff(t)` on `basis`.
pub fn build_effective_hamiltonian(
    tables: &CouplingTables,
    spectrum: &InstantaneousSpectrum,
    basis: &FockBasis,
    t: f64,
) -> Result<DMatrix<Complex64>> {
    check_basis(tables, basis)?;
    Ok(HamiltonianTemplate::new(basis).evaluate(tables, spectrum, t).to_dense())
}

fn check_basis(tables: &CouplingTables, basis: &FockBasis) -> Result<()> {
    if basis.mode_count > tables.k_max {
        return Err(DceError::config(format!(
            "basis has {} modes but coupling tables stop at k_max = {}",
            basis.mode_count, tables.k_max
        )));
    }
    Ok(())
}

/// Time-stepping scheme for the piecewise propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagator {
    /// `exp(-i H(t + dt/2) dt)`; second order.
    Midpoint,
    /// Fourth-order commutator-free Magnus step with two Gauss nodes.
    Magnus4,
}

impl Propagator {
    fn order(self) -> i32 {
        match self {
            Propagator::Midpoint => 2,
            Propagator::Magnus4 => 4,
        }
    }
}

/// Options for [`evolve_vacuum`].
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub steps: usize,
    /// Target for the step-doubling error estimate (2-norm of the state).
    pub tol: f64,
    pub propagator: Propagator,
    pub max_doublings: u32,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { steps: 64, tol: 1e-9, propagator: Propagator::Magnus4, max_doublings: 14 }
    }
}

/// Propagate `psi` over `[0, t_end]` with `steps` equal steps.
pub fn propagate(
    template: &HamiltonianTemplate,
    tables: &CouplingTables,
    spectrum: &InstantaneousSpectrum,
    psi: &mut [Complex64],
    t_end: f64,
    steps: usize,
    propagator: Propagator,
) {
    if t_end == 0.0 || steps == 0 {
        return;
    }
    let dt = t_end / steps as f64;
    let r3 = 3f64.sqrt();
    let (c1, c2) = (0.5 - r3 / 6.0, 0.5 + r3 / 6.0);
    let (a1, a2) = ((3.0 - 2.0 * r3) / 12.0, (3.0 + 2.0 * r3) / 12.0);
    for i in 0..steps {
        let t0 = i as f64 * dt;
        match propagator {
            Propagator::Midpoint => {
                let h = template.evaluate(tables, spectrum, t0 + 0.5 * dt);
                expm::apply_unitary(&h, dt, psi);
            }
            Propagator::Magnus4 => {
                let h1 = template.evaluate(tables, spectrum, t0 + c1 * dt);
                let h2 = template.evaluate(tables, spectrum, t0 + c2 * dt);
                // rightmost factor acts first
                expm::apply_unitary(&h1.combine(a2, &h2, a1), dt, psi);
                expm::apply_unitary(&h1.combine(a1, &h2, a2), dt, psi);
            }
        }
    }
}

/// Density operator on a Fock basis, kept together with the pure state it
/// was built from.
#[derive(Debug, Clone)]
pub struct FockDensityOperator {
    pub basis: FockBasis,
    pub matrix: DMatrix<Complex64>,
    /// Step-doubling error estimate of the propagated state.
    pub error_estimate: f64,
    pub steps: usize,
}

impl FockDensityOperator {
    pub fn from_pure(basis: FockBasis, psi: &[Complex64]) -> Self {
        let v = DVector::from_column_slice(psi);
        let matrix = &v * v.adjoint();
        FockDensityOperator { basis, matrix, error_estimate: 0.0, steps: 0 }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }
}

/// Propagates the vacuum to `t_end`, doubling the step count until the
/// Richardson estimate meets `opts.tol`.
pub fn evolve_vacuum(
    tables: &CouplingTables,
    spectrum: &InstantaneousSpectrum,
    basis: &FockBasis,
    t_end: f64,
    opts: &EvolveOptions,
) -> Result<FockDensityOperator> {
    check_basis(tables, basis)?;
    let template = HamiltonianTemplate::new(basis);
    let mut vacuum = vec![Complex64::new(0.0, 0.0); basis.dim()];
    vacuum[0] = Complex64::new(1.0, 0.0);
    if t_end == 0.0 || spectrum.trajectory.epsilon == 0.0 {
        return Ok(FockDensityOperator::from_pure(basis.clone(), &vacuum));
    }

    // keep ||H|| dt <= 0.1; |lambda| <= eps p w1 / (1 - eps)
    let tr = spectrum.trajectory;
    let lam_max = tr.epsilon * tr.drive_frequency() / (1.0 - tr.epsilon);
    let probe = template.evaluate(tables, spectrum, 0.0).norm_bound();
    let h_bound = probe.max(lam_max);
    let min_steps = (h_bound * t_end / 0.1).ceil() as usize;
    let mut steps = opts.steps.max(min_steps).max(1);

    let run = |n: usize| {
        let mut psi = vacuum.clone();
        propagate(&template, tables, spectrum, &mut psi, t_end, n, opts.propagator);
        psi
    };
    let denom = (2f64.powi(opts.propagator.order()) - 1.0).max(1.0);
    let mut coarse = run(steps);
    for _ in 0..opts.max_doublings {
        let fine = run(2 * steps);
        let diff: f64 = fine.iter().zip(&coarse).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let est = diff / denom;
        if est <= opts.tol {
            let mut rho = FockDensityOperator::from_pure(basis.clone(), &fine);
            rho.error_estimate = est;
            rho.steps = 2 * steps;
            return Ok(rho);
        }
        steps *= 2;
        coarse = fine;
    }
    Err(DceError::Integration {
        reached: t_end,
        reason: format!("step doubling did not reach tol {} with {} steps", opts.tol, steps),
    })
}

/// Shannon entropy of the diagonal in the Fock basis (nats).
pub fn diagonal_entropy(rho: &FockDensityOperator) -> f64 {
    -rho.diagonal().into_iter().map(xlogx).sum::<f64>()
}

/// Relative entropy of coherence, von Neumann entropy and total particle
/// number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceReport {
    pub coherence: f64,
    pub s_vn: f64,
    pub n: f64,
    pub s_d: f64,
}

pub fn coherence_and_particles(rho: &FockDensityOperator) -> Result<CoherenceReport> {
    let eig = rho.matrix.clone().symmetric_eigen();
    let mut s_vn = 0.0;
    for &l in eig.eigenvalues.iter() {
        if l < -1e-10 {
            return Err(DceError::InvalidState(format!("density operator eigenvalue {l} < -1e-10")));
        }
        s_vn -= xlogx(l.max(0.0));
    }
    let s_d = diagonal_entropy(rho);
    let n = rho
        .diagonal()
        .iter()
        .zip(rho.basis.states())
        .map(|(p, s)| p * s.iter().map(|&x| x as f64).sum::<f64>())
        .sum();
    Ok(CoherenceReport { coherence: s_d - s_vn, s_vn, n, s_d })
}

/// Second-order perturbative diagonal for first-order pair amplitudes
/// `beta` (0-based `(k-1, j-1)`): vacuum `1 - N/2`, `|1_j 1_k>` gets
/// `|beta_jk|^2` and `|2_j>` gets `|beta_jj|^2 / 2`.
pub fn perturbative_diagonal(basis: &FockBasis, beta: &DMatrix<Complex64>) -> Vec<f64> {
    let m = basis.mode_count.min(beta.nrows());
    let mut diag = vec![0.0; basis.dim()];
    let mut half_n = 0.0;
    for j in 0..m {
        for k in j..m {
            let mut occ = vec![0u8; basis.mode_count];
            occ[j] += 1;
            occ[k] += 1;
            let p = if j == k { 0.5 * beta[(j, j)].norm_sqr() } else { beta[(j, k)].norm_sqr() };
            if let Some(i) = basis.index_of(&occ) {
                diag[i] = p;
            }
            half_n += p;
        }
    }
    diag[0] = 1.0 - half_n;
    diag
}
