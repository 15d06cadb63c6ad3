//! Two-outcome simulation over a correlated Gaussian pair, and maximal correlation
//! of finite joint distributions.
//!
//! For binary targets the achievable agreement probabilities `Pr[U = V]` with fixed
//! marginals form the interval `[Corr_min, Corr_max]` spanned by anti-aligned and
//! aligned half-line indicators. Points inside are realised by a threshold for one
//! party and a sliding interval of fixed Gaussian mass for the other.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NisimError, Result};
use crate::gaussian::GaussianPairSampler;
use crate::numeric::{integrate, norm_cdf, norm_pdf, norm_ppf, norm_sf};

/// Absolute tolerance used by the orthant quadrature.
const ORTHANT_TOL: f64 = 1e-13;
const TAIL: f64 = 40.0;

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_nan() || rho.abs() > 1.0 {
        return Err(NisimError::InvalidRho(rho));
    }
    Ok(())
}

/// `Pr[X > κ1, Y > κ2]` for standard normals with correlation `rho`.
pub fn binorm_orthant(rho: f64, kappa1: f64, kappa2: f64) -> Result<f64> {
    check_rho(rho)?;
    if kappa1.is_nan() || kappa2.is_nan() {
        return Err(NisimError::invalid("thresholds must not be NaN"));
    }
    if kappa1 == f64::INFINITY || kappa2 == f64::INFINITY {
        return Ok(0.0);
    }
    if kappa1 == f64::NEG_INFINITY {
        return Ok(norm_sf(kappa2));
    }
    if kappa2 == f64::NEG_INFINITY {
        return Ok(norm_sf(kappa1));
    }
    if rho == 1.0 {
        return Ok(norm_sf(kappa1.max(kappa2)));
    }
    if rho == -1.0 {
        // Y = −X: κ1 < X < −κ2.
        return Ok((norm_cdf(-kappa2) - norm_cdf(kappa1)).max(0.0));
    }
    let s = (1.0 - rho * rho).sqrt();
    let integrand = |x: f64| norm_pdf(x) * norm_sf((kappa2 - rho * x) / s);
    let lo = kappa1.max(-TAIL);
    if lo >= TAIL {
        return Ok(0.0);
    }
    // The inner survival function switches from 0 to 1 around x = κ2/ρ, sharply when
    // |ρ| is close to one.
    let mut cuts = vec![lo];
    if rho != 0.0 {
        let c = kappa2 / rho;
        if c > lo && c < TAIL {
            cuts.push(c);
        }
    }
    cuts.push(TAIL);
    let p: f64 = cuts
        .windows(2)
        .map(|w| integrate(integrand, w[0], w[1], ORTHANT_TOL).0)
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

fn check_mean(mu: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(NisimError::invalid(format!("{name} must lie in [0, 1], got {mu}")));
    }
    Ok(())
}

/// `Pr[1[X > κ1] = 1[Y ∈ (a, b]]]` for a pair with correlation `rho`.
fn agreement(rho: f64, mu1: f64, mu2: f64, kappa1: f64, a: f64, b: f64) -> Result<f64> {
    let both = binorm_orthant(rho, kappa1, a)? - binorm_orthant(rho, kappa1, b)?;
    Ok((1.0 - mu1 - mu2 + 2.0 * both).clamp(0.0, 1.0))
}

/// `(Corr_min, Corr_max)`: agreement of anti-aligned and aligned thresholds with means
/// `mu1`, `mu2`.
pub fn corr_bounds(rho: f64, mu1: f64, mu2: f64) -> Result<(f64, f64)> {
    check_rho(rho)?;
    check_mean(mu1, "mu1")?;
    check_mean(mu2, "mu2")?;
    let k1 = norm_ppf(1.0 - mu1);
    let k2 = norm_ppf(1.0 - mu2);
    let aligned = (1.0 - mu1 - mu2 + 2.0 * binorm_orthant(rho, k1, k2)?).clamp(0.0, 1.0);
    let anti = (1.0 - mu1 - mu2 + 2.0 * binorm_orthant(-rho, k1, k2)?).clamp(0.0, 1.0);
    Ok((aligned.min(anti), aligned.max(anti)))
}

/// Binary target `(E U, E V, Pr[U = V])`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryTarget {
    pub mu1: f64,
    pub mu2: f64,
    pub eta: f64,
}

impl BinaryTarget {
    pub fn new(mu1: f64, mu2: f64, eta: f64) -> Result<Self> {
        let t = BinaryTarget { mu1, mu2, eta };
        t.validate()?;
        Ok(t)
    }

    /// `Pr[U = V = 1]` implied by the three parameters.
    pub fn joint_ones(&self) -> f64 {
        (self.eta - 1.0 + self.mu1 + self.mu2) / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        check_mean(self.mu1, "mu1")?;
        check_mean(self.mu2, "mu2")?;
        check_mean(self.eta, "eta")?;
        let p = self.joint_ones();
        let lo = (self.mu1 + self.mu2 - 1.0).max(0.0);
        let hi = self.mu1.min(self.mu2);
        if p < lo - 1e-12 || p > hi + 1e-12 {
            return Err(NisimError::invalid(format!(
                "no coupling has these parameters: Pr[U=V=1] = {p} outside [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// `f(x) = 1[x > f_threshold]`, `g(y) = 1[y ∈ g_interval]`.
///
/// The interval is `(lo, hi]`, or `[lo, hi)` when `reflected` (negative correlation,
/// realised by mirroring `y`). The two differ on a null set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub f_threshold: f64,
    pub g_interval: (f64, f64),
    pub reflected: bool,
    /// Agreement probability of the pair, computed exactly.
    pub agreement: f64,
}

impl Strategy {
    pub fn f(&self, x: f64) -> bool {
        x > self.f_threshold
    }

    pub fn g(&self, y: f64) -> bool {
        let (lo, hi) = self.g_interval;
        if self.reflected {
            lo <= y && y < hi
        } else {
            lo < y && y <= hi
        }
    }

    /// Monte-Carlo agreement rate and its standard error over `samples` pairs.
    pub fn simulate(&self, rho: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
        if samples < 2 {
            return Err(NisimError::InvalidSamples(samples, 2));
        }
        let sampler = GaussianPairSampler::new(rho, 1, seed)?;
        let mut r = sampler.stream(0);
        let (mut x, mut y) = ([0.0], [0.0]);
        let mut hits = 0usize;
        for _ in 0..samples {
            sampler.draw(&mut r, &mut x, &mut y);
            if self.f(x[0]) == self.g(y[0]) {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        Ok((p, (p * (1.0 - p) / (samples as f64 - 1.0)).sqrt()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    CorrMin,
    CorrMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Feasible {
        strategy: Strategy,
        corr_min: f64,
        corr_max: f64,
    },
    Infeasible {
        violated: Bound,
        bound: f64,
        gap: f64,
        corr_min: f64,
        corr_max: f64,
    },
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible { .. })
    }
}

/// Default slack at the decision boundary.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-6;
const MONOTONE_GRID: usize = 64;

/// Decides whether `target` can be simulated from a pair with correlation `rho`, and
/// builds a threshold/interval strategy when it can.
pub fn decide_k2(rho: f64, target: &BinaryTarget, delta: f64) -> Result<Verdict> {
    check_rho(rho)?;
    target.validate()?;
    if !(delta >= 0.0) {
        return Err(NisimError::invalid(format!("delta must be non-negative, got {delta}")));
    }
    let BinaryTarget { mu1, mu2, eta } = *target;
    let (corr_min, corr_max) = corr_bounds(rho, mu1, mu2)?;
    if eta > corr_max + delta {
        return Ok(Verdict::Infeasible {
            violated: Bound::CorrMax,
            bound: corr_max,
            gap: eta - corr_max,
            corr_min,
            corr_max,
        });
    }
    if eta < corr_min - delta {
        return Ok(Verdict::Infeasible {
            violated: Bound::CorrMin,
            bound: corr_min,
            gap: corr_min - eta,
            corr_min,
            corr_max,
        });
    }

    let reflected = rho < 0.0;
    let r = rho.abs();
    let kappa1 = norm_ppf(1.0 - mu1);
    let width = 1.0 - mu2;
    let ends = |u: f64| (norm_ppf(u), norm_ppf((u + mu2).min(1.0)));
    let agree = |u: f64| {
        let (a, b) = ends(u);
        agreement(r, mu1, mu2, kappa1, a, b)
    };

    let mut prev = agree(0.0)?;
    for i in 1..=MONOTONE_GRID {
        let cur = agree(width * i as f64 / MONOTONE_GRID as f64)?;
        if cur < prev - 1e-9 {
            return Err(NisimError::Nonmonotone { step: i });
        }
        prev = cur;
    }

    let goal = eta.clamp(corr_min, corr_max);
    let (mut lo, mut hi) = (0.0, width);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if agree(mid)? < goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = if (agree(lo)? - goal).abs() <= (agree(hi)? - goal).abs() {
        lo
    } else {
        hi
    };
    let (a, b) = ends(u);
    let achieved = agree(u)?;
    let g_interval = if reflected { (-b, -a) } else { (a, b) };
    Ok(Verdict::Feasible {
        strategy: Strategy {
            f_threshold: kappa1,
            g_interval,
            reflected,
            agreement: achieved,
        },
        corr_min,
        corr_max,
    })
}

/// Joint distribution of two finite random variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteJoint {
    pub mass: Vec<Vec<f64>>,
}

impl FiniteJoint {
    pub fn new(mass: Vec<Vec<f64>>) -> Result<Self> {
        let j = FiniteJoint { mass };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<()> {
        let cols = self.mass.first().map_or(0, Vec::len);
        if self.mass.is_empty() || cols == 0 {
            return Err(NisimError::invalid("mass table is empty"));
        }
        if self.mass.iter().any(|r| r.len() != cols) {
            return Err(NisimError::DimMismatch("mass rows have different lengths".into()));
        }
        if self.mass.iter().flatten().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(NisimError::invalid("masses must be finite and non-negative"));
        }
        let total: f64 = self.mass.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(NisimError::invalid(format!("masses sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: FiniteJoint = serde_json::from_str(s)?;
        j.validate()?;
        Ok(j)
    }

    /// Uniform on the diagonal of `{0, …, q−1}²`.
    pub fn equality(q: usize) -> Self {
        let mut mass = vec![vec![0.0; q]; q];
        for (i, row) in mass.iter_mut().enumerate() {
            row[i] = 1.0 / q as f64;
        }
        FiniteJoint { mass }
    }

    /// Uniform bit observed through a channel flipping it with probability `eps`.
    pub fn binary_symmetric(eps: f64) -> Self {
        FiniteJoint {
            mass: vec![vec![(1.0 - eps) / 2.0, eps / 2.0], vec![eps / 2.0, (1.0 - eps) / 2.0]],
        }
    }

    pub fn product(px: &[f64], py: &[f64]) -> Self {
        FiniteJoint {
            mass: px.iter().map(|a| py.iter().map(|b| a * b).collect()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxCorrelation {
    pub rho: f64,
    /// One of the marginals is a point mass; `rho` is reported as 0.
    pub degenerate: bool,
}

/// Second singular value of `P(x, y)/√(P_X(x) P_Y(y))`, clamped to `[0, 1]`.
pub fn max_correlation(p: &FiniteJoint) -> Result<MaxCorrelation> {
    p.validate()?;
    let px: Vec<f64> = p.mass.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..p.mass[0].len())
        .map(|j| p.mass.iter().map(|r| r[j]).sum())
        .collect();
    let rows: Vec<usize> = (0..px.len()).filter(|&i| px[i] > 0.0).collect();
    let cols: Vec<usize> = (0..py.len()).filter(|&j| py[j] > 0.0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return Ok(MaxCorrelation {
            rho: 0.0,
            degenerate: true,
        });
    }
    let m = DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
        let (i, j) = (rows[a], cols[b]);
        p.mass[i][j] / (px[i] * py[j]).sqrt()
    });
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(MaxCorrelation {
        rho: sv[1].clamp(0.0, 1.0),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::centred_orthant;

    #[test]
    fn orthant_closed_forms() {
        assert!((binorm_orthant(0.0, 0.0, 0.0).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(binorm_orthant(1.0, 0.0, 0.0).unwrap(), 0.5);
        for rho in [-0.99, -0.5, 0.3, 0.5, 0.999] {
            let p = binorm_orthant(rho, 0.0, 0.0).unwrap();
            assert!((p - centred_orthant(rho)).abs() < 1e-10, "rho={rho}");
        }
        // Independent case factorises.
        let p = binorm_orthant(0.0, 0.7, -1.2).unwrap();
        assert!((p - norm_sf(0.7) * norm_sf(-1.2)).abs() < 1e-12);
        assert!(matches!(binorm_orthant(1.5, 0.0, 0.0), Err(NisimError::InvalidRho(_))));
    }

    #[test]
    fn orthant_symmetries() {
        for &(rho, a, b) in &[(0.3, 0.5, -0.2), (0.9, -1.0, 1.5), (0.999, 0.1, 0.12), (-0.6, 2.0, 0.0)] {
            let p = binorm_orthant(rho, a, b).unwrap();
            assert!((p - binorm_orthant(rho, b, a).unwrap()).abs() < 1e-10);
            let q = binorm_orthant(-rho, a, -b).unwrap();
            assert!((p + q - norm_sf(a)).abs() < 1e-10);
        }
    }

    #[test]
    fn bounds_closed_forms() {
        let (lo, hi) = corr_bounds(0.5, 0.5, 0.5).unwrap();
        assert!((lo - 1.0 / 3.0).abs() < 1e-9 && (hi - 2.0 / 3.0).abs() < 1e-9);
        let (lo, hi) = corr_bounds(0.0, 0.5, 0.5).unwrap();
        assert!((lo - 0.5).abs() < 1e-10 && (hi - 0.5).abs() < 1e-10);
        let (_, hi) = corr_bounds(1.0, 0.5, 0.5).unwrap();
        assert_eq!(hi, 1.0);
        assert!(corr_bounds(0.5, 1.2, 0.5).is_err());
    }

    #[test]
    fn decide_examples() {
        let t = BinaryTarget::new(0.5, 0.5, 2.0 / 3.0).unwrap();
        let Verdict::Feasible { strategy, .. } = decide_k2(0.5, &t, DEFAULT_BOUNDARY_TOL).unwrap() else {
            panic!("expected feasible");
        };
        assert!(strategy.f_threshold.abs() < 1e-12);
        assert!(strategy.g_interval.0.abs() < 1e-6);
        assert!((strategy.agreement - 2.0 / 3.0).abs() < 1e-8);

        let t = BinaryTarget::new(0.5, 0.5, 0.9).unwrap();
        match decide_k2(0.5, &t, DEFAULT_BOUNDARY_TOL).unwrap() {
            Verdict::Infeasible { violated, gap, .. } => {
                assert_eq!(violated, Bound::CorrMax);
                assert!((gap - (0.9 - 2.0 / 3.0)).abs() < 1e-9);
            }
            v => panic!("{v:?}"),
        }

        let (m1, m2) = (0.3, 0.6);
        let t = BinaryTarget::new(m1, m2, m1 * m2 + (1.0 - m1) * (1.0 - m2)).unwrap();
        assert!(decide_k2(0.0, &t, DEFAULT_BOUNDARY_TOL).unwrap().is_feasible());
        assert!(BinaryTarget::new(0.1, 0.1, 0.1).is_err());
    }

    #[test]
    fn interior_strategy_hits_target() {
        for rho in [0.4, -0.4] {
            let (lo, hi) = corr_bounds(rho, 0.3, 0.6).unwrap();
            let eta = 0.3 * lo + 0.7 * hi;
            let t = BinaryTarget::new(0.3, 0.6, eta).unwrap();
            let Verdict::Feasible { strategy, .. } = decide_k2(rho, &t, 1e-6).unwrap() else {
                panic!()
            };
            assert!((strategy.agreement - eta).abs() < 1e-9);
            assert_eq!(strategy.reflected, rho < 0.0);
            let (rate, se) = strategy.simulate(rho, 200_000, 5).unwrap();
            assert!((rate - eta).abs() < 4.0 * se, "rho={rho} rate={rate} eta={eta}");
        }
    }

    #[test]
    fn max_correlation_examples() {
        assert_eq!(max_correlation(&FiniteJoint::equality(2)).unwrap().rho, 1.0);
        let prod = FiniteJoint::product(&[0.3, 0.7], &[0.2, 0.5, 0.3]);
        assert!(max_correlation(&prod).unwrap().rho < 1e-10);
        let bsc = max_correlation(&FiniteJoint::binary_symmetric(0.1)).unwrap();
        assert!((bsc.rho - 0.8).abs() < 1e-12);
        let point = FiniteJoint::new(vec![vec![0.4, 0.6], vec![0.0, 0.0]]).unwrap();
        let r = max_correlation(&point).unwrap();
        assert!(r.degenerate && r.rho == 0.0);
        assert!(FiniteJoint::new(vec![vec![0.5, 0.4]]).is_err());
    }
}
