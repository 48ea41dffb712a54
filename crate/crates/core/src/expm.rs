//! Action of `exp(-i H dt)` on a state vector.
//!
//! The exponent is split into `s` substeps with `||H dt|| / s <= 1` and each
//! substep is a Taylor series summed until the next term drops below
//! round-off. For the small Hermitian matrices used by the Fock oracle this
//! is unitary to machine precision and much cheaper than forming the dense
//! exponential.

use num_complex::Complex64;

/// Linear operator applied as `out = A v`.
pub trait MatVec {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[Complex64], out: &mut [Complex64]);
    /// Any upper bound on the induced 1-norm.
    fn norm_bound(&self) -> f64;
}

impl MatVec for nalgebra::DMatrix<Complex64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        let n = self.nrows();
        for o in out.iter_mut() {
            *o = Complex64::new(0.0, 0.0);
        }
        for c in 0..n {
            let vc = v[c];
            if vc == Complex64::new(0.0, 0.0) {
                continue;
            }
            let col = self.column(c);
            for r in 0..n {
                out[r] += col[r] * vc;
            }
        }
    }

    fn norm_bound(&self) -> f64 {
        (0..self.ncols()).map(|c| self.column(c).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
    }
}

const MAX_TERMS: usize = 60;

/// `psi <- exp(-i dt H) psi`.
pub fn apply_unitary<M: MatVec>(h: &M, dt: f64, psi: &mut [Complex64]) {
    let n = h.dim();
    assert_eq!(psi.len(), n);
    let scale = h.norm_bound() * dt.abs();
    if scale == 0.0 {
        return;
    }
    let substeps = scale.ceil().max(1.0) as usize;
    let coef = Complex64::new(0.0, -dt / substeps as f64);
    let mut term = vec![Complex64::new(0.0, 0.0); n];
    let mut next = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..substeps {
        term.copy_from_slice(psi);
        let psi_norm = norm(psi);
        for m in 1..=MAX_TERMS {
            h.apply(&term, &mut next);
            let f = coef / m as f64;
            for x in next.iter_mut() {
                *x *= f;
            }
            std::mem::swap(&mut term, &mut next);
            for (p, t) in psi.iter_mut().zip(term.iter()) {
                *p += *t;
            }
            if norm(&term) <= 1e-17 * psi_norm {
                break;
            }
        }
    }
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn random_hermitian(n: usize, seed: u64) -> DMatrix<Complex64> {
        // small LCG, deterministic
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()));
        (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn matches_dense_exponential() {
        for (n, dt) in [(5, 0.3), (12, 2.5), (20, 0.01)] {
            let h = random_hermitian(n, n as u64);
            let u = (&h * Complex64::new(0.0, -dt)).exp();
            let psi0 = DVector::from_fn(n, |i, _| Complex64::new(1.0 / (1.0 + i as f64), 0.1 * i as f64));
            let expected = &u * &psi0;
            let mut psi: Vec<Complex64> = psi0.iter().cloned().collect();
            apply_unitary(&h, dt, &mut psi);
            let err: f64 = psi.iter().zip(expected.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "n={n} dt={dt} err={err}");
        }
    }

    #[test]
    fn preserves_norm() {
        let h = random_hermitian(30, 7);
        let mut psi = vec![Complex64::new(0.0, 0.0); 30];
        psi[0] = Complex64::new(1.0, 0.0);
        for _ in 0..1000 {
            apply_unitary(&h, 0.05, &mut psi);
        }
        assert!((norm(&psi) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_is_identity() {
        let h = DMatrix::<Complex64>::zeros(3, 3);
        let mut psi = vec![Complex64::new(0.3, 0.1), Complex64::new(0.0, 1.0), Complex64::new(2.0, 0.0)];
        let before = psi.clone();
        apply_unitary(&h, 1.0, &mut psi);
        assert_eq!(psi, before);
    }
}
