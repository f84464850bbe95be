use proptest::prelude::*;
use ulam_escape::maps::{builtin, BranchConfig, BranchSpec, MapConfig};
use ulam_escape::ulam::{build_closed, build_open, open_from_closed_matrix};
use ulam_escape::{Hole, PiecewiseMap, Rational, UlamPartition};

/// Full-branch piecewise-linear map with breakpoints `k/den`, alternating
/// orientation as given.
fn linear_map(cuts: &[i128], den: i128, flips: &[bool]) -> PiecewiseMap {
    let mut points = vec![0];
    points.extend(cuts.iter().copied());
    points.push(den);
    let branches = points
        .windows(2)
        .zip(flips)
        .map(|(w, &flip)| {
            let lo = Rational::new(w[0], den);
            let hi = Rational::new(w[1], den);
            let width = hi - lo;
            let (slope, intercept) = if flip {
                (-(Rational::ONE / width), hi / width)
            } else {
                (Rational::ONE / width, -(lo / width))
            };
            BranchConfig {
                domain: [lo, hi],
                kind: BranchSpec::Linear { slope, intercept },
                range: None,
            }
        })
        .collect();
    MapConfig {
        label: "random-linear".into(),
        alpha0: None,
        b0: None,
        branches,
    }
    .build()
    .expect("valid linear map")
}

fn random_linear_map() -> impl Strategy<Value = PiecewiseMap> {
    (12i128..40)
        .prop_flat_map(|den| (Just(den), proptest::collection::btree_set(1..den, 1..5)))
        .prop_flat_map(|(den, cuts)| {
            let cuts: Vec<i128> = cuts.into_iter().collect();
            let k = cuts.len() + 1;
            (Just(den), Just(cuts), proptest::collection::vec(any::<bool>(), k))
        })
        .prop_map(|(den, cuts, flips)| linear_map(&cuts, den, &flips))
}

/// Inverse branches of the ten-branch map, written out by hand.
fn ten_branch_inverse(branch: usize, y: f64) -> f64 {
    if branch == 0 {
        y / (9.0 + y)
    } else {
        (y + branch as f64) / 10.0
    }
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed), ..ProptestConfig::default() })]

    #[test]
    fn closed_matrices_are_row_stochastic(map in random_linear_map(), n in 5usize..120) {
        let m = build_closed(&map, &UlamPartition::new(n).unwrap()).unwrap();
        for i in 0..n {
            prop_assert!((m.entries().row_sum(i) - 1.0).abs() < 1e-12, "row {i} sums to {}", m.entries().row_sum(i));
            for (_, v) in m.entries().row(i) {
                prop_assert!((0.0..=1.0 + 1e-15).contains(&v));
            }
        }
    }

    #[test]
    fn refinement_aggregates(map in random_linear_map(), n in 5usize..60) {
        // Averaging row pairs and summing column pairs of the 2n-bin matrix
        // gives the n-bin matrix.
        let coarse = build_closed(&map, &UlamPartition::new(n).unwrap()).unwrap();
        let fine = build_closed(&map, &UlamPartition::new(2 * n).unwrap()).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        s += fine.get(2 * i + a, 2 * j + b);
                    }
                }
                prop_assert!((s / 2.0 - coarse.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn preimage_measures_match_inverse_branches(n in 10usize..200, i_frac in 0.0f64..1.0, j_frac in 0.0f64..1.0) {
        let map = builtin::moebius_ten_branch();
        let m = build_closed(&map, &UlamPartition::new(n).unwrap()).unwrap();
        let i = ((i_frac * n as f64) as usize).min(n - 1);
        let j = ((j_frac * n as f64) as usize).min(n - 1);
        let h = 1.0 / n as f64;
        let bin_i = (i as f64 * h, (i + 1) as f64 * h);
        let (y0, y1) = (j as f64 * h, (j + 1) as f64 * h);
        let expected: f64 = (0..10)
            .map(|b| overlap(bin_i, (ten_branch_inverse(b, y0), ten_branch_inverse(b, y1))))
            .sum::<f64>()
            / h;
        prop_assert!((m.get(i, j) - expected).abs() < 1e-12, "P[{i}][{j}] = {} vs {expected}", m.get(i, j));
    }

    #[test]
    fn open_is_closed_with_hole_rows_removed(n in 10usize..100, a in 0usize..100, len in 1usize..10) {
        let a = a % n;
        let b = (a + len).min(n);
        let map = builtin::moebius_ten_branch();
        let partition = UlamPartition::new(n).unwrap();
        let hole = Hole::new(Rational::new(a as i128, n as i128), Rational::new(b as i128, n as i128)).unwrap();
        let closed = build_closed(&map, &partition).unwrap();
        let open = build_open(&map, &partition, &hole).unwrap();
        prop_assert_eq!(&open, &open_from_closed_matrix(&closed, &hole).unwrap());
        for i in 0..n {
            let expected = if (a..b).contains(&i) { 0.0 } else { 1.0 };
            prop_assert!((open.entries().row_sum(i) - expected).abs() < 1e-12);
            for j in 0..n {
                if !(a..b).contains(&i) {
                    prop_assert_eq!(open.get(i, j), closed.get(i, j));
                }
            }
        }
    }

    #[test]
    fn mass_is_conserved_or_lost_to_the_hole(map in random_linear_map(), n in 10usize..80, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let partition = UlamPartition::new(n).unwrap();
        let closed = build_closed(&map, &partition).unwrap();
        let h = 1.0 / n as f64;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mass = h * x.iter().sum::<f64>();
        let y = closed.entries().left_mul(&x);
        prop_assert!((h * y.iter().sum::<f64>() - mass).abs() < 1e-12 * mass.max(1.0));

        let hole = Hole::new(Rational::ZERO, Rational::new(1, n as i128)).unwrap();
        let open = open_from_closed_matrix(&closed, &hole).unwrap();
        let y = open.entries().left_mul(&x);
        prop_assert!((h * y.iter().sum::<f64>() - (mass - h * x[0])).abs() < 1e-12 * mass.max(1.0));
    }
}
