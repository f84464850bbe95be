use num_complex::Complex64;
use proptest::prelude::*;
use ulam_escape::certify::{separation_check, Separation};
use ulam_escape::kl::{self, LyMode};
use ulam_escape::Rational;

fn alpha0_b0() -> impl Strategy<Value = (Rational, Rational)> {
    // alpha0 in (0, 1/3), B0 in [0, 2].
    (2i128..60, 7i128..200, 0i128..40, 1i128..20)
        .prop_filter("alpha0 < 1/3", |(p, q, _, _)| 3 * p < *q)
        .prop_map(|(p, q, bn, bd)| (Rational::new(p, q), Rational::new(bn, bd)))
}

fn inputs() -> impl Strategy<Value = (Rational, Rational, f64, f64, f64)> {
    (alpha0_b0(), 0.0f64..1.0, 10u32..200, 1.0f64..5000.0).prop_map(|((a0, b0), t, k, h)| {
        let alpha = 3.0 * a0.to_f64();
        let r = alpha + (1.0 - alpha) * (0.05 + 0.9 * t);
        (a0, b0, r, 1.0 / k as f64, h)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, rng_seed: proptest::test_runner::RngSeed::Fixed(42), ..ProptestConfig::default() })]

    #[test]
    fn b_forms_agree((a0, b0) in alpha0_b0()) {
        let one = Rational::ONE;
        let three = Rational::from_integer(3);
        let two = Rational::from_integer(2);
        let ly = kl::ly_constants(a0, b0, LyMode::HoleUniform).unwrap();
        prop_assert_eq!(ly.alpha, three * a0);
        prop_assert_eq!(ly.b, (one - a0 + b0) / (one - three * a0));
        prop_assert_eq!(ly.b, one + (two * a0 + b0) / (one - three * a0));
        prop_assert_eq!(ly.d, ly.b + three);
        prop_assert_eq!(ly.discretization_factor, (one + a0).max(b0));
        let closed = kl::ly_constants(a0, b0, LyMode::ClosedOnly).unwrap();
        prop_assert_eq!(closed.alpha, a0);
        prop_assert_eq!(closed.b, one + b0 / (one - a0));
        prop_assert_eq!(closed.d, closed.b + three);
    }

    #[test]
    fn gamma_identity((a0, b0, r, delta, h) in inputs()) {
        let ly = kl::ly_constants(a0, b0, LyMode::HoleUniform).unwrap();
        let k = kl::kl_constants(&ly, r, delta, h).unwrap();
        let alpha = ly.alpha_f64();
        // (1/α)^γ = r/α, i.e. α^(1-γ) = r.
        prop_assert!((alpha.powf(1.0 - k.gamma) - r).abs() < 1e-12);
        prop_assert!(k.gamma > 0.0 && k.gamma < 1.0);
    }

    #[test]
    fn n1_and_n2_are_minimal((a0, b0, r, delta, h) in inputs()) {
        let ly = kl::ly_constants(a0, b0, LyMode::HoleUniform).unwrap();
        let k = kl::kl_constants(&ly, r, delta, h).unwrap();
        let q = ly.alpha_f64() / r;
        let a = ly.a.to_f64();
        prop_assert!(2.0 * a * q.powi(k.n1 as i32) <= 1.0 + 1e-12);
        if k.n1 > 0 {
            prop_assert!(2.0 * a * q.powi(k.n1 as i32 - 1) > 1.0 - 1e-12);
        }
        let lead = 8.0 * ly.b_f64() * ly.d_f64() * k.c * h;
        prop_assert!(lead * q.powi(k.n2 as i32) <= 1.0 + 1e-12);
        if k.n2 > 0 {
            prop_assert!(lead * q.powi(k.n2 as i32 - 1) > 1.0 - 1e-12);
        }
        prop_assert!((k.c - r.powi(-(k.n1 as i32))).abs() < 1e-12 * k.c);
    }

    #[test]
    fn epsilon0_bounded_by_epsilon1_and_monotone((a0, b0, r, delta, h) in inputs(), factor in 1.0f64..10.0) {
        let ly = kl::ly_constants(a0, b0, LyMode::HoleUniform).unwrap();
        let k = kl::kl_constants(&ly, r, delta, h).unwrap();
        let k2 = kl::kl_constants(&ly, r, delta, h * factor).unwrap();
        prop_assert!(k.epsilon0 <= k.epsilon1);
        prop_assert!(k.epsilon0 == k.epsilon1.min(k.epsilon0_power_term));
        prop_assert!(k2.epsilon0 <= k.epsilon0 * (1.0 + 1e-12));
        prop_assert!(k2.epsilon1 <= k.epsilon1 * (1.0 + 1e-12));
        prop_assert!(k.a > 0.0 && k.b > 0.0);
        prop_assert!(k.mesh_bound > 0.0);
        prop_assert!((k.mesh_bound * 2.0 * ly.discretization_factor_f64() - k.epsilon0).abs() < 1e-15);
    }

    #[test]
    fn separation_arithmetic(k in 3u32..200, points in proptest::collection::vec((0.0f64..3.0, -3.2f64..3.2), 0..8)) {
        let delta = 1.0 / k as f64;
        let one = Complex64::new(1.0, 0.0);
        let mut eigs = vec![one];
        eigs.extend(points.iter().map(|&(d, theta)| one + Complex64::from_polar(d * delta, theta)));
        let bad: Vec<Complex64> = eigs
            .iter()
            .copied()
            .filter(|z| {
                let d = (z - one).norm();
                d > delta && d <= 2.0 * delta
            })
            .collect();
        match separation_check(&eigs, delta) {
            Separation::Pass => prop_assert!(bad.is_empty()),
            Separation::Fail { witness } => prop_assert!(bad.contains(&witness)),
        }
    }
}

#[test]
fn separation_examples() {
    let one = Complex64::new(1.0, 0.0);
    assert_eq!(separation_check(&[one], 1.0 / 26.0), Separation::Pass);
    assert_eq!(separation_check(&[one, Complex64::new(0.97, 0.0)], 1.0 / 26.0), Separation::Pass);
    assert_eq!(
        separation_check(&[one, Complex64::new(0.95, 0.0)], 1.0 / 26.0),
        Separation::Fail {
            witness: Complex64::new(0.95, 0.0)
        }
    );
}

#[test]
fn hole_uniform_needs_small_alpha0() {
    assert!(kl::ly_constants(Rational::new(1, 3), Rational::ZERO, LyMode::HoleUniform).is_err());
    assert!(kl::ly_constants(Rational::new(1, 3), Rational::ZERO, LyMode::ClosedOnly).is_ok());
}
