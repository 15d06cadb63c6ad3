//! Monte-Carlo joint tables `E[f_i(X) g_j(Y)]` over ρ-correlated Gaussian pairs, and
//! empirical checks of polynomial tail and sign-stability inequalities.
//!
//! Every estimate is a batch-means estimate over 100 batches. Batch `b` draws from
//! stream `b` of the seed, batches run in parallel and are reduced in batch order, so
//! results do not depend on the thread count.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NisimError, Result};
use crate::gaussian::{GaussianPairSampler, HermitePoly, VectorFunction};
use crate::rng;

pub const BATCHES: usize = 100;
pub const MIN_SAMPLES: usize = 100;

/// Means and batch-means standard errors of a vector of statistics.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub samples: usize,
}

/// Splits `samples` into at most [`BATCHES`] batches; `fill(b, count, acc)` must add the
/// sums of `dim` statistics over `count` draws from batch `b` into `acc`.
pub fn batch_means<F>(samples: usize, dim: usize, fill: F) -> BatchStats
where
    F: Fn(usize, usize, &mut [f64]) + Sync,
{
    let nb = BATCHES.min(samples).max(1);
    let sums: Vec<(usize, Vec<f64>)> = (0..nb)
        .into_par_iter()
        .map(|b| {
            let count = samples / nb + usize::from(b < samples % nb);
            let mut acc = vec![0.0; dim];
            fill(b, count, &mut acc);
            (count, acc)
        })
        .collect();
    let nf = samples as f64;
    let mut mean = vec![0.0; dim];
    for (_, acc) in &sums {
        for (m, a) in mean.iter_mut().zip(acc) {
            *m += a;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut se = vec![0.0; dim];
    if nb > 1 {
        for (count, acc) in &sums {
            for i in 0..dim {
                let d = acc[i] / *count as f64 - mean[i];
                se[i] += d * d;
            }
        }
        let denom = (nb * (nb - 1)) as f64;
        se.iter_mut().for_each(|s| *s = (*s / denom).sqrt());
    }
    BatchStats { mean, se, samples }
}

/// `k × k` table of `E[f_i(X) g_j(Y)]` with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub k: usize,
    pub entries: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub samples: usize,
}

impl JointTable {
    /// Table with zero standard errors, e.g. a closed-form value.
    pub fn exact(entries: Vec<Vec<f64>>) -> Result<Self> {
        let k = entries.len();
        if entries.iter().any(|r| r.len() != k) {
            return Err(NisimError::DimMismatch("table must be square".into()));
        }
        Ok(JointTable {
            k,
            stderr: vec![vec![0.0; k]; k],
            entries,
            samples: 0,
        })
    }

    fn from_flat(k: usize, mean: &[f64], se: &[f64], samples: usize) -> Self {
        JointTable {
            k,
            entries: mean.chunks(k).map(<[f64]>::to_vec).collect(),
            stderr: se.chunks(k).map(<[f64]>::to_vec).collect(),
            samples,
        }
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().flatten().sum()
    }

    /// `(Σ se²)^{1/2}`.
    pub fn aggregate_se(&self) -> f64 {
        self.stderr.iter().flatten().map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.k).map(|j| self.entries.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.k).map(|i| self.entries[i][i]).sum()
    }

    /// `i,j,entry,stderr` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,entry,stderr\n");
        for i in 0..self.k {
            for j in 0..self.k {
                let _ = writeln!(s, "{i},{j},{:.16e},{:.16e}", self.entries[i][j], self.stderr[i][j]);
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(crate::json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: JointTable = serde_json::from_str(s)?;
        if t.entries.len() != t.k || t.entries.iter().any(|r| r.len() != t.k) {
            return Err(NisimError::DimMismatch("table entries do not match k".into()));
        }
        Ok(t)
    }
}

fn check_pair(f: &VectorFunction, g: &VectorFunction) -> Result<()> {
    if f.dim_in() != g.dim_in() {
        return Err(NisimError::DimMismatch(format!(
            "input dimensions {} and {}",
            f.dim_in(),
            g.dim_in()
        )));
    }
    if f.dim_out() != g.dim_out() {
        return Err(NisimError::DimMismatch(format!(
            "output dimensions {} and {}",
            f.dim_out(),
            g.dim_out()
        )));
    }
    Ok(())
}

/// Empirical `E[f_i(X) g_j(Y)]` over `samples` pairs with correlation `rho`.
pub fn estimate_table(
    f: &VectorFunction,
    g: &VectorFunction,
    rho: f64,
    samples: usize,
    seed: u64,
) -> Result<JointTable> {
    let mut v = estimate_tables(&[(f, g)], rho, samples, seed)?;
    Ok(v.tables.remove(0))
}

/// Tables for several pairs on common random numbers.
#[derive(Clone, Debug)]
pub struct CrnTables {
    pub tables: Vec<JointTable>,
    /// `tables[i] − tables[0]` for `i ≥ 1`, with standard errors of the difference.
    pub diffs: Vec<JointTable>,
}

/// Estimates the table of every pair on the same correlated samples.
pub fn estimate_tables(
    pairs: &[(&VectorFunction, &VectorFunction)],
    rho: f64,
    samples: usize,
    seed: u64,
) -> Result<CrnTables> {
    if samples < MIN_SAMPLES {
        return Err(NisimError::InvalidSamples(samples, MIN_SAMPLES));
    }
    let Some(&(f0, _)) = pairs.first() else {
        return Err(NisimError::invalid("no function pairs given"));
    };
    for (f, g) in pairs {
        check_pair(f, g)?;
        check_pair(f, f0)?;
    }
    let n = f0.dim_in();
    let k = f0.dim_out();
    let kk = k * k;
    let np = pairs.len();
    let sampler = GaussianPairSampler::new(rho, n, seed)?;
    let dim = kk * (2 * np - 1);
    let stats = batch_means(samples, dim, |b, count, acc| {
        let mut r = sampler.stream(b as u64);
        let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
        let mut fx = vec![0.0; k];
        let mut gy = vec![0.0; k];
        let mut base = vec![0.0; kk];
        for _ in 0..count {
            sampler.draw(&mut r, &mut x, &mut y);
            for (p, (f, g)) in pairs.iter().enumerate() {
                f.eval_into(&x, &mut fx);
                g.eval_into(&y, &mut gy);
                for i in 0..k {
                    for j in 0..k {
                        let v = fx[i] * gy[j];
                        acc[p * kk + i * k + j] += v;
                        if p == 0 {
                            base[i * k + j] = v;
                        } else {
                            acc[(np + p - 1) * kk + i * k + j] += v - base[i * k + j];
                        }
                    }
                }
            }
        }
    });
    let table = |slot: usize| {
        JointTable::from_flat(
            k,
            &stats.mean[slot * kk..(slot + 1) * kk],
            &stats.se[slot * kk..(slot + 1) * kk],
            samples,
        )
    };
    Ok(CrnTables {
        tables: (0..np).map(table).collect(),
        diffs: (np..2 * np - 1).map(table).collect(),
    })
}

/// `(1/2) Σ |A_ij − B_ij|`.
pub fn tv_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(NisimError::DimMismatch("tables have different shapes".into()));
    }
    Ok(0.5
        * a.iter()
            .zip(b)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
            .sum::<f64>())
}

/// How the sampled rate relates to `d·exp(−t^{2/d})` at one threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRegime {
    /// The bound holds within three standard errors and is below one.
    Valid,
    /// The bound is at least one, so it says nothing.
    Vacuous,
    /// The rate exceeds the bound by more than three standard errors.
    Violated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub rate: f64,
    pub se: f64,
    pub bound: f64,
    pub regime: TailRegime,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailCheck {
    pub degree: u32,
    pub mean: f64,
    pub variance: f64,
    pub samples: usize,
    pub rows: Vec<TailRow>,
}

/// `d·exp(−t^{2/d})`.
pub fn tail_bound(d: u32, t: f64) -> f64 {
    let d = d.max(1) as f64;
    d * (-t.powf(2.0 / d)).exp()
}

/// Sampled `Pr[|p(x) − E p| ≥ t·√Var p]` for each threshold, against `d·exp(−t^{2/d})`.
///
/// `moments` supplies exact `(E p, Var p)`; otherwise they are estimated from a
/// separate pass over the same number of samples.
pub fn tail_check<P>(
    p: P,
    n: usize,
    degree: u32,
    thresholds: &[f64],
    samples: usize,
    seed: u64,
    moments: Option<(f64, f64)>,
) -> Result<TailCheck>
where
    P: Fn(&[f64]) -> f64 + Sync,
{
    if samples < MIN_SAMPLES {
        return Err(NisimError::InvalidSamples(samples, MIN_SAMPLES));
    }
    let draw = |stream: u64, b: usize, count: usize, acc: &mut [f64], body: &dyn Fn(f64, &mut [f64])| {
        let mut r = rng::stream_rng(seed, stream + b as u64);
        let mut x = vec![0.0; n];
        for _ in 0..count {
            rng::fill_normal(&mut r, &mut x);
            body(p(&x), acc);
        }
    };
    let (mean, variance) = match moments {
        Some(m) => m,
        None => {
            let st = batch_means(samples, 2, |b, count, acc| {
                draw(rng::streams::CHECKS, b, count, acc, &|v, acc| {
                    acc[0] += v;
                    acc[1] += v * v;
                })
            });
            (st.mean[0], (st.mean[1] - st.mean[0] * st.mean[0]).max(0.0))
        }
    };
    if !(variance > 0.0) {
        return Err(NisimError::ZeroVariance);
    }
    let sd = variance.sqrt();
    let st = batch_means(samples, thresholds.len(), |b, count, acc| {
        draw(rng::streams::REPORT, b, count, acc, &|v, acc| {
            let z = (v - mean).abs();
            for (a, &t) in acc.iter_mut().zip(thresholds) {
                if z >= t * sd {
                    *a += 1.0;
                }
            }
        })
    });
    let rows = thresholds
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let bound = tail_bound(degree, t);
            let (rate, se) = (st.mean[i], st.se[i]);
            let holds = rate <= bound + 3.0 * se;
            let regime = if !holds {
                TailRegime::Violated
            } else if bound >= 1.0 {
                TailRegime::Vacuous
            } else {
                TailRegime::Valid
            };
            TailRow {
                t,
                rate,
                se,
                bound,
                regime,
                pass: holds,
            }
        })
        .collect();
    Ok(TailCheck {
        degree,
        mean,
        variance,
        samples,
        rows,
    })
}

/// [`tail_check`] for a Hermite polynomial, with exact moments.
pub fn tail_check_poly(p: &HermitePoly, thresholds: &[f64], samples: usize, seed: u64) -> Result<TailCheck> {
    tail_check(
        |x| p.eval(x),
        p.dim_in(),
        p.degree(),
        thresholds,
        samples,
        seed,
        Some((p.mean(), p.variance())),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignAgreement {
    /// Sampled `Pr[sign a ≠ sign b]`.
    pub rate: f64,
    pub se: f64,
    pub tau: f64,
    /// `rate / τ`, the constant in the `O(τ)` statement.
    pub multiple: f64,
    pub var_ratio: f64,
    /// `(τ/d)^{3d}`.
    pub var_ratio_bound: f64,
    pub samples: usize,
}

/// Sampled sign disagreement of two polynomials whose difference is small in the
/// sense `E[a − b] = 0`, `Var[a − b] ≤ (τ/d)^{3d}·Var[a]`.
pub fn sign_agree_check(
    a: &HermitePoly,
    b: &HermitePoly,
    tau: f64,
    samples: usize,
    seed: u64,
) -> Result<SignAgreement> {
    if a.dim_in() != b.dim_in() {
        return Err(NisimError::DimMismatch("polynomials have different dimensions".into()));
    }
    if samples < MIN_SAMPLES {
        return Err(NisimError::InvalidSamples(samples, MIN_SAMPLES));
    }
    if !(tau > 0.0) {
        return Err(NisimError::invalid(format!("tau must be positive, got {tau}")));
    }
    let diff = a.add_scaled(b, -1.0);
    let var_a = a.variance();
    let scale = var_a.sqrt().max(1.0);
    if diff.mean().abs() > 1e-9 * scale {
        return Err(NisimError::PreconditionViolated {
            what: "E[a - b] = 0".into(),
            measured: diff.mean(),
            bound: 0.0,
        });
    }
    let d = a.degree().max(b.degree()).max(1) as f64;
    let var_ratio_bound = (tau / d).powf(3.0 * d);
    let var_diff = diff.variance();
    let var_ratio = if var_a > 0.0 {
        var_diff / var_a
    } else if var_diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    if var_ratio > var_ratio_bound * (1.0 + 1e-12) {
        return Err(NisimError::PreconditionViolated {
            what: "Var[a - b] / Var[a] <= (tau/d)^(3d)".into(),
            measured: var_ratio,
            bound: var_ratio_bound,
        });
    }
    let n = a.dim_in();
    let st = batch_means(samples, 1, |bi, count, acc| {
        let mut r = rng::stream_rng(seed, rng::streams::CHECKS + bi as u64);
        let mut x = vec![0.0; n];
        for _ in 0..count {
            rng::fill_normal(&mut r, &mut x);
            if (a.eval(&x) > 0.0) != (b.eval(&x) > 0.0) {
                acc[0] += 1.0;
            }
        }
    });
    Ok(SignAgreement {
        rate: st.mean[0],
        se: st.se[0],
        tau,
        multiple: st.mean[0] / tau,
        var_ratio,
        var_ratio_bound,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::binorm_orthant;
    use crate::gaussian::MultiIndex;
    use crate::numeric::norm_sf;

    fn h(n: usize, terms: &[(&[u32], f64)]) -> HermitePoly {
        HermitePoly::from_terms(n, terms.iter().map(|(s, c)| (MultiIndex::new(s.to_vec()), *c)))
    }

    #[test]
    fn constant_table() {
        let e1 = VectorFunction::constant(2, vec![1.0, 0.0]);
        let t = estimate_table(&e1, &e1, 0.3, 1000, 1).unwrap();
        assert_eq!(t.entries, vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(t.stderr.iter().flatten().all(|s| *s == 0.0));
    }

    #[test]
    fn halfspace_table_matches_orthant() {
        let f = VectorFunction::halfspace(vec![1.0], 0.0);
        let t = estimate_table(&f, &f, 0.5, 200_000, 3).unwrap();
        let o = binorm_orthant(0.5, 0.0, 0.0).unwrap();
        let exact = vec![vec![o, 0.5 - o], vec![0.5 - o, o]];
        let tv = tv_distance(&t.entries, &exact).unwrap();
        assert!(tv <= 3.0 * t.aggregate_se() + 1e-12, "tv={tv}");
        assert!((t.trace() - 2.0 / 3.0).abs() <= 3.0 * (2.0f64).sqrt() * t.stderr[0][0].max(t.stderr[1][1]));
    }

    #[test]
    fn rho_one_has_no_off_diagonal() {
        let f = VectorFunction::halfspace(vec![1.0, -0.5], 0.2);
        let t = estimate_table(&f, &f, 1.0, 5000, 2).unwrap();
        assert_eq!(t.entries[0][1], 0.0);
        assert_eq!(t.entries[1][0], 0.0);
    }

    #[test]
    fn deterministic_and_crn_diffs() {
        let f = VectorFunction::halfspace(vec![1.0], 0.0);
        let g = VectorFunction::halfspace(vec![1.0], 0.01);
        let a = estimate_tables(&[(&f, &f), (&f, &g)], 0.5, 10_000, 9).unwrap();
        let b = estimate_tables(&[(&f, &f), (&f, &g)], 0.5, 10_000, 9).unwrap();
        assert_eq!(a.tables, b.tables);
        let d = &a.diffs[0];
        for i in 0..2 {
            for j in 0..2 {
                let direct = a.tables[1].entries[i][j] - a.tables[0].entries[i][j];
                assert!((d.entries[i][j] - direct).abs() < 1e-12);
                assert!(d.stderr[i][j] < a.tables[0].stderr[i][j]);
            }
        }
        assert!(estimate_table(&f, &VectorFunction::halfspace(vec![1.0, 1.0], 0.0), 0.5, 1000, 1).is_err());
        assert!(estimate_table(&f, &f, 0.5, 10, 1).is_err());
    }

    #[test]
    fn tv_examples() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let b = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_distance(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn tail_regimes() {
        let h1 = h(1, &[(&[1], 1.0)]);
        let c = tail_check_poly(&h1, &[0.5, 3.0], 200_000, 1).unwrap();
        assert_eq!(c.rows[0].regime, TailRegime::Valid);
        let r = c.rows[1];
        assert_eq!(r.regime, TailRegime::Violated);
        assert!(!r.pass);
        assert!((r.rate - 2.0 * norm_sf(3.0)).abs() < 4.0 * r.se);

        let h2 = h(1, &[(&[2], 1.0)]);
        let c = tail_check_poly(&h2, &[0.5], 10_000, 1).unwrap();
        assert_eq!(c.rows[0].regime, TailRegime::Vacuous);

        let tiny = h(1, &[(&[], 5.0), (&[1], 1e-6)]);
        let c = tail_check_poly(&tiny, &[50.0], 1000, 1).unwrap();
        assert_eq!(c.rows[0].rate, 0.0);
        assert!(c.rows[0].pass);
        assert!(matches!(
            tail_check_poly(&HermitePoly::constant(1, 2.0), &[1.0], 1000, 1),
            Err(NisimError::ZeroVariance)
        ));
    }

    #[test]
    fn tail_with_estimated_moments() {
        let p = |x: &[f64]| x[0] * x[0] - 1.0;
        let c = tail_check(p, 1, 2, &[2.0], 100_000, 4, None).unwrap();
        assert!((c.variance - 2.0).abs() < 0.1);
    }

    #[test]
    fn sign_checks() {
        let a = h(2, &[(&[1], 1.0), (&[0, 1], 0.5)]);
        let s = sign_agree_check(&a, &a, 0.1, 1000, 1).unwrap();
        assert_eq!(s.rate, 0.0);
        let eps = (0.1f64 / 2.0).powi(3) * (1.25f64).sqrt();
        let b = a.add_scaled(&h(2, &[(&[2], 1.0)]), eps);
        let s = sign_agree_check(&a, &b, 0.1, 100_000, 2).unwrap();
        assert!(s.rate <= 0.1);
        let h1 = h(1, &[(&[1], 1.0)]);
        let bad = h1.add_scaled(&h(1, &[(&[2], 1.0)]), 10.0);
        assert!(matches!(
            sign_agree_check(&h1, &bad, 0.1, 1000, 1),
            Err(NisimError::PreconditionViolated { .. })
        ));
    }
}
