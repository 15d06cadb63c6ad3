//! Euclidean projection onto the probability simplex and related helpers.

use crate::error::{NisimError, Result};

/// Euclidean projection of `x` onto `Δ_k`, written into `out`.
///
/// Sort-and-threshold: find the largest `ρ` with `u_ρ − (Σ_{i≤ρ} u_i − 1)/ρ > 0` for
/// the sorted coordinates `u`, then clip at that threshold. Inputs are assumed finite.
pub fn proj_simplex_into(x: &[f64], out: &mut [f64]) {
    let k = x.len();
    // Points already in Δ_k up to rounding are returned as-is, which makes the
    // projection exactly idempotent.
    if x.iter().all(|v| *v >= 0.0) && (x.iter().sum::<f64>() - 1.0).abs() <= 4.0 * k as f64 * f64::EPSILON {
        out.copy_from_slice(x);
        return;
    }
    match k {
        0 => return,
        1 => {
            out[0] = 1.0;
            return;
        }
        2 => {
            let a = (0.5 * (1.0 + x[0] - x[1])).clamp(0.0, 1.0);
            out[0] = a;
            out[1] = 1.0 - a;
            return;
        }
        _ => {}
    }
    let mut u: Vec<f64> = x.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = (xi - tau).max(0.0);
    }
}

/// Euclidean projection onto `Δ_k`.
pub fn proj_simplex(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NisimError::NonFiniteInput);
    }
    let mut out = vec![0.0; x.len()];
    proj_simplex_into(x, &mut out);
    Ok(out)
}

/// Bitmask of the coordinates in the support of `Proj(x)`. Valid for `k ≤ 64`.
pub fn proj_support(x: &[f64]) -> u64 {
    let mut p = [0.0; 64];
    let p = &mut p[..x.len()];
    proj_simplex_into(x, p);
    p.iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .fold(0u64, |m, (i, _)| m | (1 << i))
}

/// `e_i` if `z_i` is the unique strict maximum, otherwise the zero vector.
///
/// Comparison is exact: any floating-point tie gives zero.
pub fn argmax_vec(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    if let Some(i) = strict_argmax(z) {
        out[i] = 1.0;
    }
    out
}

/// Index of the unique strict maximum, if any.
pub fn strict_argmax(z: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    let mut tie = false;
    for (i, &v) in z.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) if v > z[b] => {
                best = Some(i);
                tie = false;
            }
            Some(b) if v == z[b] => tie = true,
            _ => {}
        }
    }
    if tie {
        None
    } else {
        best
    }
}

/// `ℓ1` distance from `y` to `Δ_k`: `Σ y⁻ + |1 − Σ y⁺|`.
pub fn l1_dist_to_simplex(y: &[f64]) -> f64 {
    let neg: f64 = y.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let pos: f64 = y.iter().filter(|v| **v > 0.0).sum();
    neg + (1.0 - pos).abs()
}

/// Whether `y` lies in `Δ_k` up to `tol` in each constraint.
pub fn in_simplex(y: &[f64], tol: f64) -> bool {
    y.iter().all(|v| *v >= -tol) && (y.iter().sum::<f64>() - 1.0).abs() <= tol
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(x: &[f64; 3]) -> [f64; 3] {
        // Grid search over Δ_3 followed by a local refinement on the active face.
        let mut best = [0.0; 3];
        let mut best_d = f64::INFINITY;
        let n = 2000;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let p = [i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
                let d: f64 = (0..3).map(|c| (p[c] - x[c]).powi(2)).sum();
                if d < best_d {
                    best_d = d;
                    best = p;
                }
            }
        }
        let active: Vec<usize> = (0..3).filter(|&c| best[c] > 2e-3).collect();
        let shift = (active.iter().map(|&c| x[c]).sum::<f64>() - 1.0) / active.len() as f64;
        let mut out = [0.0; 3];
        for &c in &active {
            out[c] = x[c] - shift;
        }
        out
    }

    #[test]
    fn projection_examples() {
        assert_eq!(proj_simplex(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        let third = [1.0 / 3.0; 3];
        let p = proj_simplex(&third).unwrap();
        assert!(l1(&p, &third) < 1e-15);
        let x = [0.5, 0.6, 0.1];
        let p = proj_simplex(&x).unwrap();
        let oracle = brute_force(&x);
        assert!(l1(&p, &oracle) < 1e-12, "{p:?} vs {oracle:?}");
        assert!(matches!(
            proj_simplex(&[f64::NAN, 0.0]),
            Err(NisimError::NonFiniteInput)
        ));
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_vec(&[3.0, 1.0, 2.0]), vec![1.0, 0.0, 0.0]);
        assert_eq!(argmax_vec(&[2.0, 2.0, 1.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(argmax_vec(&[-1.0, -2.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn distance_to_simplex() {
        assert_eq!(l1_dist_to_simplex(&[0.5, 0.5]), 0.0);
        assert!((l1_dist_to_simplex(&[0.6, -0.1]) - 0.5).abs() < 1e-15);
        assert!((l1_dist_to_simplex(&[1.2, -0.1]) - 0.3).abs() < 1e-15);
        assert!((l1_dist_to_simplex(&[0.2, 0.3]) - 0.5).abs() < 1e-15);
    }

    fn vec_k() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..7).prop_flat_map(|k| {
            (
                prop::collection::vec(-3.0f64..3.0, k),
                prop::collection::vec(-3.0f64..3.0, k),
            )
        })
    }

    proptest! {
        #[test]
        fn contractive((z, w) in vec_k()) {
            let pz = proj_simplex(&z).unwrap();
            let pw = proj_simplex(&w).unwrap();
            prop_assert!(l2(&pz, &pw) <= l2(&z, &w) + 1e-12);
        }

        #[test]
        fn variational_inequality((z, w) in vec_k()) {
            let pz = proj_simplex(&z).unwrap();
            // Any simplex point: project w.
            let x = proj_simplex(&w).unwrap();
            let ip: f64 = (0..z.len()).map(|i| (z[i] - pz[i]) * (x[i] - pz[i])).sum();
            prop_assert!(ip <= 1e-10);
        }

        #[test]
        fn idempotent((z, _w) in vec_k()) {
            let p = proj_simplex(&z).unwrap();
            let pp = proj_simplex(&p).unwrap();
            prop_assert_eq!(p.clone(), pp);
            prop_assert!(in_simplex(&p, 1e-12));
        }
    }
}
