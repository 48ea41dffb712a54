use dce_core::cavity::{build_coupling_tables, g_closed_form, InstantaneousSpectrum, MirrorTrajectory};
use dce_core::gaussian::{mode_diagonal_entropy, populations, ModeCovariance, NCut};
use dce_core::perturbative::{
    beta_resonant_magnitude, beta_table, diagonal_entropy_closed_form, diagonal_entropy_general, particle_number,
};
use dce_core::resonance::{integrate, SvaConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::PI;

proptest! {
    #[test]
    fn g_is_antisymmetric(j in 1usize..200, k in 1usize..200) {
        prop_assert_eq!(g_closed_form(j, k), -g_closed_form(k, j));
    }

    #[test]
    fn phase_is_increasing(eps in 0.0f64..0.1, k in 1usize..12, t in 0.0f64..40.0, dt in 1e-3f64..2.0) {
        let tr = MirrorTrajectory::new(PI, eps, 2, 100.0).unwrap();
        let s = InstantaneousSpectrum::new(tr);
        prop_assert!(s.phase(k, t + dt) > s.phase(k, t));
    }

    #[test]
    fn resonant_pairs_sum_to_particle_number(p in 1u32..12, tau in 1e-4f64..0.3) {
        let total: f64 = (1..p as usize).map(|k| beta_resonant_magnitude(k, p as usize - k, p, tau, 1e-3).powi(2)).sum();
        let n = particle_number(p, tau);
        prop_assert!((total - n).abs() <= 1e-12 * n.max(1e-300));
    }

    #[test]
    fn entropy_increases_with_p(p in 2u32..8, tau in 1e-3f64..0.05) {
        let a = diagonal_entropy_closed_form(p, tau).unwrap();
        let b = diagonal_entropy_closed_form(p + 1, tau).unwrap();
        prop_assert!(b > a, "p = {}: {} then {}", p, a, b);
    }

    #[test]
    fn general_entropy_is_nonnegative(entries in proptest::collection::vec(0.0f64..0.3, 16)) {
        let m = DMatrix::from_vec(4, 4, entries);
        let n: f64 = m.iter().map(|b| b * b).sum();
        prop_assume!(n < 2.0);
        prop_assert!(diagonal_entropy_general(&m).unwrap().s_d >= 0.0);
    }

    #[test]
    fn general_entropy_tracks_closed_form(p in 2u32..7, tau in 1e-3f64..0.1) {
        let r = diagonal_entropy_general(&beta_table(p, tau, 1e-3, p as usize, false)).unwrap();
        let c = diagonal_entropy_closed_form(p, tau).unwrap();
        prop_assert!(((r.s_d - c) / c).abs() <= 5.0 * r.n);
    }

    #[test]
    fn populations_normalized_and_uncertainty_holds(sq in 0.05f64..0.5, excess in 0.0f64..5.0) {
        let sp = (0.25 + excess) / sq;
        let cov = ModeCovariance::new(1, 0.0, sq, sp).unwrap();
        prop_assert!(cov.sigma_q * cov.sigma_p >= 0.25 - 1e-12);
        let pop = populations(&cov, NCut::Adaptive).unwrap();
        prop_assert!((pop.total() - 1.0).abs() < 1e-8);
        prop_assert!(pop.probs.iter().all(|&x| x >= 0.0));
        prop_assert!(mode_diagonal_entropy(&pop).unwrap().s_d >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn h_is_symmetric(k_max in 2usize..24) {
        let t = build_coupling_tables(k_max, 10 * k_max).unwrap();
        for j in 1..=k_max {
            for k in 1..=k_max {
                prop_assert_eq!(t.h(j, k), t.h(k, j));
                prop_assert_eq!(t.g(j, k), -t.g(k, j));
            }
        }
    }

    #[test]
    fn sva_columns_are_independent(col in 0usize..8, tau in 0.1f64..4.0) {
        // The system is linear column by column, so integrating one column
        // alone must reproduce that column of the full run.
        let m = 2 * col + 1;
        let tol = 1e-10;
        let full = integrate(&SvaConfig { k_max: 16, tol, ..Default::default() }, &[tau]).unwrap();
        let one = integrate(&SvaConfig { k_max: 16, tol, columns: Some(vec![m]), ..Default::default() }, &[tau]).unwrap();
        let (f, o) = (&full.samples[0], &one.samples[0]);
        for k in (1..32).step_by(2) {
            prop_assert!((f.alpha(k, m) - o.alpha(k, m)).abs() < 10.0 * tol);
            prop_assert!((f.beta(k, m) - o.beta(k, m)).abs() < 10.0 * tol);
        }
    }
}
