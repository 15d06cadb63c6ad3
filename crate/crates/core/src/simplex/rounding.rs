//! Rounding constructions: projection onto `Δ_k`, Gaussian partitions of the
//! simplex, and randomized threshold rounding on an `η`-grid.

use serde::{Deserialize, Serialize};

use super::proj::{l1, l1_dist_to_simplex, proj_simplex_into};
use crate::error::{NisimError, Result};
use crate::gaussian::{Codomain, VectorFunction};
use crate::numeric::norm_ppf;
use crate::rng;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundReport {
    /// Sampled `Pr[f ∉ Δ_{k,δ}]`.
    pub outside_rate: f64,
    /// Sampled `max ‖f‖_∞`.
    pub max_abs: f64,
    /// Estimate of `E‖f − Proj f‖_1` and its standard error.
    pub mean_l1: f64,
    pub mean_l1_se: f64,
    /// `k·δ·C` with `C = (√k + k² + 1)/k`.
    pub bound: f64,
    pub samples: usize,
}

/// `C` in `E‖f − Proj f‖_1 ≤ k·δ·C`: points inside `Δ_{k,δ}` move by at most `√k·δ`
/// in `ℓ1`, the remaining mass `δ` by at most `k² + 1`.
pub fn rounding_constant(k: usize) -> f64 {
    let k = k as f64;
    (k.sqrt() + k * k + 1.0) / k
}

/// `Proj ∘ f`, after checking on `samples` Gaussian points that
/// `Pr[f ∉ Δ_{k,δ}] ≤ δ` (up to three standard errors) and `‖f‖_∞ ≤ k`.
pub fn round_to_simplex(
    f: &VectorFunction,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<(VectorFunction, RoundReport)> {
    if samples < 2 {
        return Err(NisimError::InvalidSamples(samples, 2));
    }
    let n = f.dim_in();
    let k = f.dim_out();
    let mut r = rng::stream_rng(seed, rng::streams::CHECKS);
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; k];
    let mut p = vec![0.0; k];
    let (mut outside, mut max_abs, mut s1, mut s2) = (0usize, 0.0f64, 0.0, 0.0);
    for _ in 0..samples {
        rng::fill_normal(&mut r, &mut x);
        f.eval_into(&x, &mut y);
        if l1_dist_to_simplex(&y) > delta {
            outside += 1;
        }
        max_abs = y.iter().fold(max_abs, |m, v| m.max(v.abs()));
        proj_simplex_into(&y, &mut p);
        let d = l1(&y, &p);
        s1 += d;
        s2 += d * d;
    }
    let ns = samples as f64;
    let rate = outside as f64 / ns;
    let mean = s1 / ns;
    let se = ((s2 / ns - mean * mean).max(0.0) / (ns - 1.0)).sqrt();
    let report = RoundReport {
        outside_rate: rate,
        max_abs,
        mean_l1: mean,
        mean_l1_se: se,
        bound: k as f64 * delta * rounding_constant(k),
        samples,
    };
    let rate_se = (delta.clamp(0.0, 1.0) * (1.0 - delta.clamp(0.0, 1.0)) / ns).sqrt();
    if rate > delta + 3.0 * rate_se {
        return Err(NisimError::PreconditionViolated {
            what: format!("Pr[f outside the {delta}-neighbourhood of the simplex]"),
            measured: rate,
            bound: delta,
        });
    }
    if max_abs > k as f64 {
        return Err(NisimError::PreconditionViolated {
            what: "sup norm of f".into(),
            measured: max_abs,
            bound: k as f64,
        });
    }
    let eval = f.evaluator();
    let g = VectorFunction::from_fn(n, k, Codomain::Simplex, move |x, out| {
        let mut y = vec![0.0; k];
        eval(x, &mut y);
        proj_simplex_into(&y, out);
    });
    Ok((g, report))
}

/// Index of the Gaussian-measure interval containing `z`, for the partition of the
/// line into consecutive intervals of masses `y_1, …, y_k`.
pub fn partition_index(y: &[f64], z: f64) -> usize {
    let k = y.len();
    let mut cum = 0.0;
    for (i, &yi) in y.iter().enumerate().take(k - 1) {
        cum += yi.max(0.0);
        if cum <= 0.0 {
            continue;
        }
        if cum >= 1.0 || z < norm_ppf(cum) {
            return i;
        }
    }
    k - 1
}

/// Randomized rounding of simplex-valued `f1`, `g1` to vertex-valued functions of
/// `(x, z_1, z_2) ∈ R^{n+2}`.
///
/// `f2` reads the extra coordinate `z_1` and `g2` reads `z_2`; both select the
/// interval of the partition induced by their simplex value, so
/// `E[f2 | x] = f1(x)` and the correlation table with any partner is preserved.
pub fn part_round(
    f1: &VectorFunction,
    g1: &VectorFunction,
    check_samples: usize,
    seed: u64,
) -> Result<(VectorFunction, VectorFunction)> {
    for f in [f1, g1] {
        if f.is_simplex_valued() {
            f.check_range(check_samples, seed)?;
        } else {
            let probe = f.clone().with_codomain(Codomain::Simplex);
            probe.check_range(check_samples, seed)?;
        }
    }
    Ok((partitioned(f1, 0), partitioned(g1, 1)))
}

fn partitioned(f: &VectorFunction, which: usize) -> VectorFunction {
    let n = f.dim_in();
    let k = f.dim_out();
    let eval = f.evaluator();
    VectorFunction::from_fn(n + 2, k, Codomain::Vertices, move |x, out| {
        let mut y = vec![0.0; k];
        eval(&x[..n], &mut y);
        let i = partition_index(&y, x[n + which]);
        out.iter_mut().for_each(|o| *o = 0.0);
        out[i] = 1.0;
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GridMode {
    Expected,
    Sampled { seed: u64 },
}

/// Size of `Int_η = {iη : i ≥ 0} ∩ [0, 1]`.
pub fn grid_size(eta: f64) -> usize {
    (1.0 / eta + 1e-12).floor() as usize + 1
}

/// Rounds `y` by thresholds `α ∼ Int_η^k`: coordinate `s` survives iff `y_s > α_s`.
///
/// `Expected` returns the exact average over all thresholds; `Sampled` returns one
/// draw.
pub fn grid_round(y: &[f64], eta: f64, mode: GridMode) -> Result<Vec<f64>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(NisimError::invalid(format!("eta must lie in (0, 1], got {eta}")));
    }
    let m = grid_size(eta);
    Ok(match mode {
        GridMode::Expected => y
            .iter()
            .map(|&ys| (0..m).filter(|&i| (i as f64) * eta < ys).count() as f64 / m as f64)
            .collect(),
        GridMode::Sampled { seed } => {
            use rand::Rng as _;
            let mut r = rng::stream_rng(seed, rng::streams::GRID);
            y.iter()
                .map(|&ys| {
                    let alpha = r.random_range(0..m) as f64 * eta;
                    if ys > alpha {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::norm_cdf;

    #[test]
    fn round_simplex_valued_is_identity() {
        let f = VectorFunction::halfspace(vec![1.0], 0.3);
        let (g, rep) = round_to_simplex(&f, 0.0, 1000, 1).unwrap();
        for x in [-1.0, 0.5, 2.0] {
            assert_eq!(g.eval(&[x]), f.eval(&[x]));
        }
        assert_eq!(rep.mean_l1, 0.0);
    }

    #[test]
    fn round_removes_offset() {
        let f = VectorFunction::from_fn(1, 2, Codomain::Real, |x, out| {
            let a = if x[0] > 0.0 { 1.0 } else { 0.3 };
            out[0] = a + 0.005;
            out[1] = 1.0 - a - 0.005;
        });
        let (g, rep) = round_to_simplex(&f, 0.02, 2000, 2).unwrap();
        for x in [-1.0, 0.5] {
            let v = g.eval(&[x]);
            assert!(l1(&v, &f.eval(&[x])) <= 0.02 + 1e-12);
        }
        assert!(rep.mean_l1 <= rep.bound);
    }

    #[test]
    fn round_reports_violation() {
        let f = VectorFunction::constant(1, vec![2.0, 2.0]);
        assert!(matches!(
            round_to_simplex(&f, 0.1, 100, 0),
            Err(NisimError::PreconditionViolated { .. })
        ));
    }

    #[test]
    fn partition_masses() {
        let y = [0.3, 0.7];
        let b = norm_ppf(0.3);
        assert_eq!(partition_index(&y, b - 1e-9), 0);
        assert_eq!(partition_index(&y, b + 1e-9), 1);
        assert!((norm_cdf(b) - 0.3).abs() < 1e-12);
        assert_eq!(partition_index(&[1.0, 0.0, 0.0], 50.0), 0);
        assert_eq!(partition_index(&[0.0, 0.0, 1.0], -50.0), 2);
    }

    #[test]
    fn part_round_degenerate() {
        let f = VectorFunction::constant(1, vec![1.0, 0.0]);
        let (f2, _) = part_round(&f, &f, 100, 0).unwrap();
        for z in [-3.0, 0.0, 3.0] {
            assert_eq!(f2.eval(&[0.2, z, -z]), vec![1.0, 0.0]);
        }
        let bad = VectorFunction::constant(1, vec![0.5, 0.6]);
        assert!(matches!(
            part_round(&bad, &f, 100, 0),
            Err(NisimError::NotSimplexValued { .. })
        ));
    }

    #[test]
    fn grid_round_examples() {
        assert_eq!(grid_size(0.25), 5);
        assert_eq!(grid_size(1e-3), 1001);
        let e1 = grid_round(&[1.0, 0.0, 0.0], 0.1, GridMode::Expected).unwrap();
        assert!(l1(&e1, &[1.0, 0.0, 0.0]) <= 3.0 * 0.1);
        let half = grid_round(&[0.5, 0.5], 0.25, GridMode::Expected).unwrap();
        assert_eq!(half, vec![0.4, 0.4]);
        let third = [1.0 / 3.0; 3];
        let r = grid_round(&third, 1e-3, GridMode::Expected).unwrap();
        assert!(l1(&r, &third) <= 2.0 * 3e-3);
        let s = grid_round(&[0.5, 0.5], 0.25, GridMode::Sampled { seed: 4 }).unwrap();
        assert!(s.iter().all(|v| *v == 0.0 || *v == 1.0));
    }
}
