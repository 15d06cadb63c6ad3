use gauss_nisim::correlation::tv_distance;
use gauss_nisim::simplex::ppf::ppf_eval;
use gauss_nisim::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn orthant_symmetry_and_complement(rho in -0.99f64..0.99, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let p = binorm_orthant(rho, a, b).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p - binorm_orthant(rho, b, a).unwrap()).abs() <= 1e-8);
        let q = binorm_orthant(-rho, a, -b).unwrap();
        prop_assert!((p + q - gauss_nisim::numeric::norm_sf(a)).abs() <= 1e-8);
    }

    #[test]
    fn bounds_are_ordered(rho in 0.0f64..=1.0, mu1 in 0.0f64..=1.0, mu2 in 0.0f64..=1.0) {
        let (lo, hi) = corr_bounds(rho, mu1, mu2).unwrap();
        prop_assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
    }

    #[test]
    fn relabeling_does_not_raise_max_correlation(
        mass in prop::collection::vec(0.01f64..1.0, 9),
        map_x in prop::collection::vec(0usize..2, 3),
        map_y in prop::collection::vec(0usize..2, 3),
    ) {
        let total: f64 = mass.iter().sum();
        let p: Vec<Vec<f64>> = mass.chunks(3).map(|r| r.iter().map(|v| v / total).collect()).collect();
        let mut q = vec![vec![0.0; 2]; 2];
        for i in 0..3 {
            for j in 0..3 {
                q[map_x[i]][map_y[j]] += p[i][j];
            }
        }
        let fix = |mut m: Vec<Vec<f64>>| {
            let s: f64 = m.iter().flatten().sum();
            m.iter_mut().flatten().for_each(|v| *v /= s);
            FiniteJoint::new(m).unwrap()
        };
        let before = max_correlation(&fix(p)).unwrap().rho;
        let after = max_correlation(&fix(q)).unwrap().rho;
        prop_assert!(after <= before + 1e-10);
    }

    #[test]
    fn tv_is_a_metric(v in prop::collection::vec(0.0f64..1.0, 12)) {
        let t = |s: &[f64]| vec![s[..2].to_vec(), s[2..4].to_vec()];
        let (a, b, c) = (t(&v[..4]), t(&v[4..8]), t(&v[8..]));
        let ab = tv_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, tv_distance(&b, &a).unwrap());
        prop_assert!(ab <= tv_distance(&a, &c).unwrap() + tv_distance(&c, &b).unwrap() + 1e-12);
        prop_assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn ppf_outputs_are_vertices_or_zero(c in prop::collection::vec(-2.0f64..2.0, 3), x in -3.0f64..3.0, j in 0usize..3) {
        let p = HermitePoly::from_terms(1, (0..3u32).map(|q| (MultiIndex::new(vec![q]), c[q as usize])));
        let v = ppf_eval(&PpfSpec::hermite(p, j, 3).unwrap(), &[x]);
        let ones = v.iter().filter(|u| **u == 1.0).count();
        prop_assert!(v.iter().all(|u| *u == 0.0 || *u == 1.0) && ones <= 1);
        prop_assert!(ones == 0 || v[j] == 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn boost_coefficient_norm_is_bounded_by_descent(
        w in prop::collection::vec(-2.0f64..2.0, 6),
        b in prop::collection::vec(-1.0f64..1.0, 3),
        d in 1u32..=3,
        fine in any::<bool>(),
    ) {
        let rows: Vec<Vec<f64>> = w.chunks(2).map(<[f64]>::to_vec).collect();
        let f = VectorFunction::argmax_linear(rows, b).unwrap();
        let delta = if fine { 0.05 } else { 0.2 };
        let design = gauss_nisim::gaussian::Design::quadrature(2, 2 * d as usize + 4).unwrap();
        let r = run_boost(&f, &Basis::hermite_up_to(2, d), delta, &design).unwrap();
        // Each step moves κ by half of a vector of norm ρ_t, and the potential pays ρ_t²/4 for it.
        let psi0 = r.trace[0].psi;
        let k0 = (1.0 / 3.0f64).sqrt();
        let bound = (k0 + (r.iterations as f64 * psi0).sqrt()).powi(2);
        prop_assert!(r.kappa_norm_sq <= bound + 1e-9, "{} > {}", r.kappa_norm_sq, bound);
        prop_assert!(r.kappa_norm_sq <= 16.0 / (delta * delta));
    }
}

#[test]
fn bernstein_error_does_not_grow_with_degree() {
    let grid: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
    for c in [0.2, 0.5, 0.77] {
        let f = move |x: &[f64]| (x[0] - c).abs();
        let mut prev = f64::INFINITY;
        for d in [4u32, 8, 16, 32, 64, 128] {
            let a = bp_fit(f, &[d]).unwrap();
            let err = grid
                .iter()
                .map(|&x| (a.eval(&[x]).unwrap() - f(&[x])).abs())
                .fold(0.0, f64::max);
            assert!(err <= prev + 1e-9, "c={c} d={d}");
            prev = err;
        }
    }
}

#[test]
fn part_round_marginals_match() {
    let f1 = VectorFunction::constant(1, vec![0.3, 0.7]);
    let (f2, _) = part_round(&f1, &f1, 1000, 1).unwrap();
    let mut r = gauss_nisim::rng::stream_rng(11, 0);
    let n = 200_000;
    let mut x = [0.0; 3];
    let mut hits = 0;
    for _ in 0..n {
        gauss_nisim::rng::fill_normal(&mut r, &mut x);
        if f2.eval(&x)[0] == 1.0 {
            hits += 1;
        }
    }
    let rate = hits as f64 / n as f64;
    assert!((rate - 0.3).abs() <= 3.0 * (0.3f64 * 0.7 / n as f64).sqrt());
}

#[test]
fn table_marginals_and_total() {
    let f =
        VectorFunction::argmax_linear(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]], vec![0.0; 3]).unwrap();
    let g = VectorFunction::argmax_linear(
        vec![vec![0.5, 1.0], vec![1.0, -0.5], vec![0.0, 0.0]],
        vec![0.1, 0.0, 0.2],
    )
    .unwrap();
    let t = estimate_table(&f, &g, 0.4, 100_000, 3).unwrap();
    assert!((t.total() - 1.0).abs() <= 1e-12);
    assert!(t
        .entries
        .iter()
        .flatten()
        .zip(t.stderr.iter().flatten())
        .all(|(e, s)| *e >= -3.0 * s));
    // Independent Monte-Carlo estimate of E f.
    let oracle = Design::monte_carlo(2, 400_000, 77, 0).unwrap();
    let ef: Vec<f64> = (0..3).map(|s| oracle.mean(|x| f.eval(x)[s])).collect();
    for (r, m) in t.row_sums().iter().zip(&ef) {
        let sd = (m * (1.0 - m) * (1.0 / 100_000.0 + 1.0 / 400_000.0)).sqrt();
        assert!((r - m).abs() <= 4.0 * sd, "{r} vs {m}");
    }
    let indep = estimate_table(&f, &g, 0.0, 100_000, 4).unwrap();
    let (rs, cs) = (indep.row_sums(), indep.col_sums());
    for i in 0..3 {
        for j in 0..3 {
            assert!((indep.entries[i][j] - rs[i] * cs[j]).abs() <= 4.0 * indep.stderr[i][j] + 1e-3);
        }
    }
}
