//! Reproducible sampling of `ρ`-correlated Gaussian pairs.

use serde::{Deserialize, Serialize};

use crate::error::{NisimError, Result};
use crate::rng::{self, Rng};

/// Source of pairs `(X, Y)` in `R^n × R^n` whose coordinate pairs are independent
/// with correlation `rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPairSampler {
    pub rho: f64,
    pub dim: usize,
    pub seed: u64,
}

impl GaussianPairSampler {
    pub fn new(rho: f64, dim: usize, seed: u64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(NisimError::InvalidRho(rho));
        }
        Ok(GaussianPairSampler { rho, dim, seed })
    }

    /// Sampler with `ρ = e^{-t}`.
    pub fn from_time(t: f64, dim: usize, seed: u64) -> Result<Self> {
        if t.is_nan() || t < 0.0 {
            return Err(NisimError::NegativeTime(t));
        }
        Self::new((-t).exp(), dim, seed)
    }

    /// Generator for an independent stream of pairs.
    pub fn stream(&self, stream: u64) -> Rng {
        rng::stream_rng(self.seed, rng::streams::PAIRS + stream)
    }

    /// Draws one pair from `r` into `x` and `y`.
    #[inline]
    pub fn draw(&self, r: &mut Rng, x: &mut [f64], y: &mut [f64]) {
        let c = (1.0 - self.rho * self.rho).max(0.0).sqrt();
        for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
            let z1 = rng::normal(r);
            let z2 = rng::normal(r);
            *xi = z1;
            *yi = self.rho * z1 + c * z2;
        }
    }

    /// `count` pairs from stream 0.
    pub fn sample_pairs(&self, count: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        if count == 0 {
            return Err(NisimError::InvalidSamples(0, 1));
        }
        let mut r = self.stream(0);
        Ok((0..count)
            .map(|_| {
                let mut x = vec![0.0; self.dim];
                let mut y = vec![0.0; self.dim];
                self.draw(&mut r, &mut x, &mut y);
                (x, y)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
        let n = pairs.len() as f64;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (x, y) in pairs {
            sx += x[0];
            sy += y[0];
            sxx += x[0] * x[0];
            syy += y[0] * y[0];
            sxy += x[0] * y[0];
        }
        let cov = sxy / n - sx * sy / n / n;
        cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt()
    }

    #[test]
    fn perfect_correlation_copies() {
        let s = GaussianPairSampler::new(1.0, 3, 9).unwrap();
        for (x, y) in s.sample_pairs(100).unwrap() {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn independence_and_determinism() {
        let s = GaussianPairSampler::new(0.0, 1, 5).unwrap();
        let p = s.sample_pairs(40_000).unwrap();
        assert!(corr(&p).abs() < 4.0 / (40_000f64).sqrt());
        assert_eq!(p[17], s.sample_pairs(20).unwrap()[17]);
    }

    #[test]
    fn rejects_bad_rho_and_count() {
        assert!(matches!(
            GaussianPairSampler::new(1.5, 1, 0),
            Err(NisimError::InvalidRho(_))
        ));
        let s = GaussianPairSampler::new(0.5, 1, 0).unwrap();
        assert!(s.sample_pairs(0).is_err());
    }
}
