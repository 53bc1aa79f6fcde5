use num_complex::Complex64;
use proptest::prelude::*;

use haarflow::matrix_models::{sample_haar, unitarity_defect, Beta};
use haarflow::measures::Measure;
use haarflow::rng::stream;
use haarflow::spectral_stats::{ks_distance, ks_two_sample, unfold_gaps};
use haarflow::subordination::{solve_pointwise, SolverConfig};

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn atoms() -> impl Strategy<Value = Measure> {
    prop::collection::vec((-3.0f64..3.0, 0.05f64..1.0), 1..8).prop_map(|pairs| {
        let (x, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let total: f64 = w.iter().sum();
        Measure::atoms(x, w.iter().map(|v| v / total).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unfolding_commutes_with_power_of_two_rescaling(
        raw in prop::collection::vec(-1.0f64..1.0, 40..80),
        k in -3i32..4,
    ) {
        let s = sorted(raw);
        let c = 2f64.powi(k);
        let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
        let g1 = unfold_gaps(&[s], 0.5, 0.0, 6).unwrap();
        let g2 = unfold_gaps(&[scaled], 0.5 / c, 0.0, 6).unwrap();
        prop_assert_eq!(g1, g2);
    }

    #[test]
    fn ks_two_sample_is_a_metric_on_samples(
        a in prop::collection::vec(-5.0f64..5.0, 1..40),
        b in prop::collection::vec(-5.0f64..5.0, 1..40),
        c in prop::collection::vec(-5.0f64..5.0, 1..40),
    ) {
        let ab = ks_two_sample(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, ks_two_sample(&b, &a));
        prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
        prop_assert!(ab <= ks_two_sample(&a, &c) + ks_two_sample(&c, &b) + 1e-12);
    }

    #[test]
    fn ks_against_a_cdf_is_bounded(a in prop::collection::vec(-5.0f64..5.0, 1..60)) {
        let d = ks_distance(&a, |x| (x + 5.0).clamp(0.0, 10.0) / 10.0);
        prop_assert!((0.0..=1.0).contains(&d));
        // one sample can never be closer than its own mass allows
        prop_assert!(ks_distance(&a[..1], |x| (x + 5.0).clamp(0.0, 10.0) / 10.0) >= 0.5 - 1e-12);
    }

    #[test]
    fn stieltjes_maps_upper_half_plane_into_itself(m in atoms(), e in -4.0f64..4.0, eta in 1e-3f64..2.0) {
        let s = m.stieltjes(Complex64::new(e, eta)).unwrap();
        prop_assert!(s.im > 0.0);
        prop_assert!(s.norm() <= 1.0 / eta * (1.0 + 1e-12));
    }

    #[test]
    fn cdf_is_monotone_with_unit_mass(m in atoms(), xs in prop::collection::vec(-4.0f64..4.0, 2..20)) {
        let xs = sorted(xs);
        for w in xs.windows(2) {
            prop_assert!(m.cdf(w[0]) <= m.cdf(w[1]) + 1e-15);
        }
        prop_assert!(m.cdf(-10.0).abs() < 1e-15);
        prop_assert!((m.cdf(10.0) - 1.0).abs() < 1e-12);
        let q = m.quantile(0.5);
        prop_assert!(m.cdf(q) >= 0.5 - 1e-12);
    }

    #[test]
    fn subordination_keeps_half_plane_signs(
        m1 in atoms(),
        m2 in atoms(),
        e in -4.0f64..4.0,
        eta in 1e-2f64..2.0,
    ) {
        let cfg = SolverConfig::default();
        let s = solve_pointwise(&m1, &m2, Complex64::new(e, eta), &cfg).unwrap();
        if s.converged {
            prop_assert!(s.m.im > 0.0);
            prop_assert!(s.w1.im <= 0.0 && s.w2.im <= 0.0);
            prop_assert!(s.residual <= cfg.tol * 10.0);
        }
    }

    #[test]
    fn haar_samples_are_unitary(n in 1usize..24, seed in any::<u64>(), real in any::<bool>()) {
        let beta = if real { Beta::One } else { Beta::Two };
        let u = sample_haar(n, beta, &mut stream(seed, "prop-haar", 0));
        prop_assert!(unitarity_defect(u.as_ref()) < 1e-12);
        if real {
            prop_assert!((0..n).all(|i| (0..n).all(|j| u[(i, j)].im == 0.0)));
        }
    }
}
