//! Discrete approximations of the standard Gaussian measure on `R^n`.
//!
//! A [`Design`] is a weighted point set. Expectations that must be mutually
//! consistent (the boosting iteration, re-expansion of its output) are all taken
//! against the same design.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::hermite::hermite_table;
use crate::error::{NisimError, Result};
use crate::rng;

/// Largest dimension for which tensorised quadrature is allowed.
pub const MAX_QUADRATURE_DIM: usize = 6;

/// Target size of a tensor grid; per-axis node counts are derived from it.
pub const DEFAULT_GRID_BUDGET: usize = 32_768;

const MAX_NODES_PER_AXIS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum DesignKind {
    Quadrature { nodes_per_axis: usize },
    MonteCarlo { seed: u64, stream: u64 },
}

#[derive(Clone, Debug)]
pub struct Design {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    kind: DesignKind,
}

/// Nodes and weights of a one-dimensional rule.
pub type Rule = Arc<(Vec<f64>, Vec<f64>)>;

/// Probabilists' Gauss-Hermite rule with `m` nodes, normalised so weights sum to 1.
pub fn gauss_hermite(m: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap().get(&m) {
        return r.clone();
    }
    let rule = Arc::new(compute_gauss_hermite(m));
    cache.lock().unwrap().insert(m, rule.clone());
    rule
}

fn compute_gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    // Golub-Welsch on the Jacobi matrix of the normalised recurrence.
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for i in 1..m {
        let b = (i as f64).sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    let mut table = vec![0.0; m + 1];
    let mut weights = Vec::with_capacity(m);
    for x in nodes.iter_mut() {
        // Newton polish on H_m, with H_m' = √m H_{m-1}.
        for _ in 0..3 {
            hermite_table(*x, &mut table);
            let step = table[m] / ((m as f64).sqrt() * table[m - 1]);
            if !step.is_finite() {
                break;
            }
            *x -= step;
        }
        hermite_table(*x, &mut table);
        let s: f64 = table[..m].iter().map(|h| h * h).sum();
        weights.push(1.0 / s);
    }
    // Symmetrise to remove rounding asymmetry.
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (nodes, weights)
}

/// Per-axis node count for a tensor grid in dimension `n` that must integrate
/// polynomials of degree `2 * min_nodes - 1` exactly.
pub fn nodes_per_axis(n: usize, min_nodes: usize) -> usize {
    let by_budget = (DEFAULT_GRID_BUDGET as f64).powf(1.0 / n.max(1) as f64).floor() as usize;
    by_budget.min(MAX_NODES_PER_AXIS).max(min_nodes).max(2)
}

impl Design {
    /// Tensor Gauss-Hermite grid with at least `min_nodes` nodes per axis.
    pub fn quadrature(n: usize, min_nodes: usize) -> Result<Self> {
        if n > MAX_QUADRATURE_DIM {
            return Err(NisimError::DimensionTooLarge {
                n,
                max: MAX_QUADRATURE_DIM,
            });
        }
        Ok(Self::tensor(n, nodes_per_axis(n, min_nodes)))
    }

    /// Tensor grid with exactly `m` nodes per axis.
    pub fn tensor(n: usize, m: usize) -> Self {
        let rule = gauss_hermite(m);
        let (nodes, w1) = (&rule.0, &rule.1);
        let total = m.pow(n as u32);
        let mut points = Vec::with_capacity(total * n);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let mut w = 1.0;
            for &i in &idx {
                points.push(nodes[i]);
                w *= w1[i];
            }
            weights.push(w);
            for d in (0..n).rev() {
                idx[d] += 1;
                if idx[d] < m {
                    break;
                }
                idx[d] = 0;
            }
        }
        Design {
            dim: n,
            points,
            weights,
            kind: DesignKind::Quadrature { nodes_per_axis: m },
        }
    }

    /// `samples` i.i.d. standard Gaussian points with equal weights.
    pub fn monte_carlo(n: usize, samples: usize, seed: u64, stream: u64) -> Result<Self> {
        if samples < 2 {
            return Err(NisimError::InvalidSamples(samples, 2));
        }
        let mut r = rng::stream_rng(seed, stream);
        let mut points = vec![0.0; n * samples];
        rng::fill_normal(&mut r, &mut points);
        Ok(Design {
            dim: n,
            points,
            weights: vec![1.0 / samples as f64; samples],
            kind: DesignKind::MonteCarlo { seed, stream },
        })
    }

    pub fn from_method(n: usize, method: Method, min_nodes: usize, stream: u64) -> Result<Self> {
        match method {
            Method::Quadrature => Self::quadrature(n, min_nodes),
            Method::MonteCarlo { samples, seed } => Self::monte_carlo(n, samples, seed, stream),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn kind(&self) -> &DesignKind {
        &self.kind
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.kind, DesignKind::MonteCarlo { .. })
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mean of `f` over the design.
    pub fn mean<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::hermite::hermite_1d;

    #[test]
    fn orthonormality_up_to_eight() {
        let d = Design::tensor(1, 2 * 8 + 4);
        for q in 0..=8u32 {
            for r in 0..=8u32 {
                let v = d.mean(|x| hermite_1d(q, x[0]) * hermite_1d(r, x[0]));
                let want = if q == r { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-10, "q={q} r={r} v={v}");
            }
        }
    }

    #[test]
    fn large_rule_moments() {
        let (x, w) = &*gauss_hermite(256);
        let m2: f64 = x.iter().zip(w).map(|(x, w)| w * x * x).sum();
        let m4: f64 = x.iter().zip(w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-11);
    }

    #[test]
    fn tensor_grid_weights_sum_to_one() {
        let d = Design::quadrature(3, 4).unwrap();
        assert_eq!(d.len(), 32usize.pow(3));
        assert!((d.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let xy = d.mean(|p| p[0] * p[0] * p[2] * p[2]);
        assert!((xy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_dimension_cap() {
        assert!(matches!(
            Design::quadrature(7, 4),
            Err(NisimError::DimensionTooLarge { n: 7, .. })
        ));
        assert!(matches!(
            Design::monte_carlo(2, 1, 0, 0),
            Err(NisimError::InvalidSamples(1, 2))
        ));
    }
}
