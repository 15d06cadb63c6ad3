use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gauss_nisim::gaussian::Design;
use gauss_nisim::{
    binorm_orthant, bp_fit, expand, proj_simplex, run_boost, Basis, HermitePoly, Method, MultiIndex, ProjBernstein,
};
use gauss_nisim_bench::{halfspace, spread_points};

fn simplex_projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("proj_simplex");
    for k in [2usize, 4, 16] {
        let pts = spread_points(256, k);
        group.bench_with_input(BenchmarkId::from_parameter(k), &pts, |b, pts| {
            b.iter(|| {
                for p in pts {
                    black_box(proj_simplex(black_box(p)).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn hermite_eval(c: &mut Criterion) {
    let n = 3;
    let poly = HermitePoly::from_terms(
        n,
        MultiIndex::all_up_to(n, 6)
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, 1.0 / (1.0 + i as f64))),
    );
    let pts = spread_points(256, n);
    c.bench_function("hermite_poly_eval_n3_d6", |b| {
        b.iter(|| pts.iter().map(|x| poly.eval(black_box(x))).sum::<f64>())
    });
}

fn orthant(c: &mut Criterion) {
    c.bench_function("binorm_orthant", |b| {
        b.iter(|| binorm_orthant(black_box(0.5), black_box(0.3), black_box(-0.7)).unwrap())
    });
}

fn expansion(c: &mut Criterion) {
    let f = halfspace(2, 0.1);
    c.bench_function("expand_quadrature_n2_d4", |b| {
        b.iter(|| expand(&f, 4, Method::Quadrature).unwrap())
    });
}

fn boost_small(c: &mut Criterion) {
    let f = halfspace(1, 0.2);
    let basis = Basis::hermite_up_to(1, 3);
    let design = Design::quadrature(1, 10).unwrap();
    c.bench_function("run_boost_n1_d3", |b| {
        b.iter(|| run_boost(&f, &basis, 0.05, &design).unwrap())
    });
}

fn bernstein(c: &mut Criterion) {
    let approx = bp_fit(|u: &[f64]| (u[0] - 0.5).abs(), &[100]).unwrap();
    let xs: Vec<f64> = (0..256).map(|i| i as f64 / 255.0).collect();
    c.bench_function("bernstein_eval_d100", |b| {
        b.iter(|| xs.iter().map(|x| approx.eval(&[*x]).unwrap()).sum::<f64>())
    });

    let proj = ProjBernstein::new(2, 2000, vec![-2.0, -2.0], vec![2.0, 2.0], 1e-6).unwrap();
    let pts = spread_points(64, 2);
    let mut out = [0.0; 2];
    c.bench_function("proj_bernstein_eval_k2_D2000", |b| {
        b.iter(|| {
            for z in &pts {
                proj.eval_into(black_box(z), &mut out);
            }
            out[0]
        })
    });
}

criterion_group!(
    benches,
    simplex_projection,
    hermite_eval,
    orthant,
    expansion,
    boost_small,
    bernstein
);
criterion_main!(benches);
