use std::f64::consts::LN_2;

use gauss_nisim::boost::{run_boost, Basis, BoostResult};
use gauss_nisim::correlation::JointTable;
use gauss_nisim::*;

fn sample_points(n: usize) -> Vec<Vec<f64>> {
    (0..25)
        .map(|i| (0..n).map(|s| ((i * 7 + s * 3) % 13) as f64 / 3.0 - 2.0).collect())
        .collect()
}

#[test]
fn expansion_file_reparses_equal() {
    let f = VectorFunction::argmax_linear(
        vec![vec![1.0, 0.2], vec![-0.5, 1.0], vec![0.1, -0.3]],
        vec![0.0, 0.1, 0.2],
    )
    .unwrap();
    let e = expand(&f, 3, Method::Quadrature).unwrap().noise_apply(0.4).unwrap();
    let back = HermiteExpansion::from_json(&e.to_json().unwrap()).unwrap();
    assert_eq!(back, e);
    for x in sample_points(2) {
        let (a, b) = (e.eval(&x), back.eval(&x));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}

#[test]
fn monte_carlo_expansion_keeps_stderr() {
    let f = VectorFunction::halfspace(vec![1.0], 0.0);
    let e = expand(&f, 2, Method::MonteCarlo { samples: 5000, seed: 3 }).unwrap();
    assert!(e.has_stderr());
    let back = HermiteExpansion::from_json(&e.to_json().unwrap()).unwrap();
    assert!(back.has_stderr());
    assert_eq!(back.stderr(&MultiIndex::unit(0)), e.stderr(&MultiIndex::unit(0)));
}

#[test]
fn function_specs_rebuild() {
    let specs = [
        FunctionSpec::Halfspace {
            w: vec![1.0, -2.0],
            b: 0.3,
        },
        FunctionSpec::Constant {
            n: 2,
            value: vec![0.25, 0.75],
        },
        FunctionSpec::ArgmaxLinear {
            w: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b: vec![0.0, 0.5],
        },
    ];
    for spec in specs {
        let text = spec.to_json().unwrap();
        let again = FunctionSpec::from_json(&text).unwrap();
        assert_eq!(again.to_json().unwrap(), text);
        let (f, g) = (spec.build().unwrap(), again.build().unwrap());
        for x in sample_points(2) {
            assert_eq!(f.eval(&x), g.eval(&x));
        }
    }
}

#[test]
fn boost_result_rebuilds_projected_polynomial() {
    let f = VectorFunction::halfspace(vec![1.0, 0.5], 0.2);
    let design = Design::quadrature(2, 8).unwrap();
    let r = run_boost(&f, &Basis::hermite_up_to(2, 2), 0.05, &design).unwrap();
    let text = r.to_json().unwrap();
    let g = BoostResult::function_from_json(&text).unwrap();
    for x in sample_points(2) {
        assert_eq!(g.eval(&x), r.f_proj().eval(&x));
    }
    let spec = g.spec().unwrap();
    assert_eq!(spec.to_json().unwrap(), r.f_proj().spec().unwrap().to_json().unwrap());
}

#[test]
fn bernstein_sidecar_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("approx.json");
    let a = bp_fit(|x| (x[0] * x[1]).sin(), &[6, 4]).unwrap();
    a.save(&path).unwrap();
    assert!(dir.path().join("approx.values.bin").exists());
    let b = BernsteinApprox::load(&path).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mixture_and_tables_round_trip() {
    let f = VectorFunction::halfspace(vec![1.0], 0.0);
    let cfg = SmoothConfig {
        samples: 1000,
        seed: 5,
        ..SmoothConfig::default()
    };
    let out = match smooth(&f, &f, LN_2, 0.2, &cfg) {
        Ok(o) => o,
        Err(NisimError::ReportViolation(o)) => *o,
        Err(e) => panic!("{e}"),
    };
    let text = out.f1.to_json().unwrap();
    let back = PpfMixture::from_json(&text).unwrap();
    assert_eq!(back, out.f1);
    assert_eq!(back.to_json().unwrap(), text);
    for x in sample_points(1) {
        assert_eq!(back.eval(&x), out.f1.eval(&x));
    }
    let spec = VectorFunction::ppf_mixture(back).spec().unwrap();
    let rebuilt = FunctionSpec::from_json(&spec.to_json().unwrap())
        .unwrap()
        .build()
        .unwrap();
    assert_eq!(rebuilt.eval(&[0.4]), out.f1.eval(&[0.4]));

    let t = estimate_table(&f, &f, 0.5, 1000, 1).unwrap();
    assert_eq!(JointTable::from_json(&t.to_json().unwrap()).unwrap(), t);
    let j = FiniteJoint::binary_symmetric(0.2);
    let text = gauss_nisim::json::to_string(&j).unwrap();
    assert_eq!(FiniteJoint::from_json(&text).unwrap(), j);
}

#[test]
fn json_output_is_byte_stable() {
    let f = VectorFunction::halfspace(vec![1.0], 0.1);
    let a = estimate_table(&f, &f, 0.3, 2000, 9).unwrap().to_json().unwrap();
    let b = estimate_table(&f, &f, 0.3, 2000, 9).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}
