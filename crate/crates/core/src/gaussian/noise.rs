//! The Ornstein-Uhlenbeck operator on black-box functions.

use std::sync::Arc;

use super::function::{Codomain, VectorFunction};
use crate::error::{NisimError, Result};
use crate::rng;

/// `P_t f(x) = E_y f(e^{-t} x + √(1 − e^{-2t}) y)`, estimated with `inner` fixed
/// Gaussian draws `y` shared by every evaluation.
///
/// Averaging preserves convex ranges, so a simplex-valued `f` yields a
/// simplex-valued result. `t = 0` returns `f` itself.
pub fn noise_apply_fn(f: &VectorFunction, t: f64, inner: usize, seed: u64) -> Result<VectorFunction> {
    if t.is_nan() || t < 0.0 {
        return Err(NisimError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    if inner == 0 {
        return Err(NisimError::InvalidSamples(0, 1));
    }
    let n = f.dim_in();
    let k = f.dim_out();
    let mut r = rng::stream_rng(seed, rng::streams::NOISE_INNER);
    let mut ys = vec![0.0; n * inner];
    rng::fill_normal(&mut r, &mut ys);
    let a = (-t).exp();
    let b = (1.0 - a * a).sqrt();
    let eval = f.evaluator();
    let codomain = match f.codomain() {
        Codomain::Vertices => Codomain::Simplex,
        c => c,
    };
    let ys = Arc::new(ys);
    Ok(VectorFunction::from_fn(n, k, codomain, move |x, out| {
        let mut z = vec![0.0; n];
        let mut fz = vec![0.0; k];
        out.iter_mut().for_each(|o| *o = 0.0);
        for y in ys.chunks(n.max(1)).take(inner) {
            for i in 0..n {
                z[i] = a * x[i] + b * y[i];
            }
            eval(&z, &mut fz);
            for (o, v) in out.iter_mut().zip(&fz) {
                *o += v;
            }
        }
        let inv = 1.0 / inner as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }))
}
