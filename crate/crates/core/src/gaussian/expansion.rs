//! Sparse Hermite expansions of vector- and scalar-valued functions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::function::VectorFunction;
use super::hermite::{hermite_table, MultiIndex};
use super::quadrature::{Design, Method};
use crate::error::{NisimError, Result};
use crate::rng::streams;

/// Coefficient vectors whose largest entry is below this are not stored.
pub const DROP_TOL: f64 = 1e-12;

/// `f = Σ_S f̂(S) H_S` truncated at `max_degree`.
///
/// The Ornstein-Uhlenbeck operator is applied lazily: the stored coefficients are
/// multiplied by `exp(-noise_time·|S|)` on read, which makes `P_s ∘ P_t = P_{s+t}`
/// hold bit-for-bit.
#[derive(Clone, Debug)]
pub struct HermiteExpansion {
    n: usize,
    k: usize,
    max_degree: u32,
    coeffs: BTreeMap<MultiIndex, Vec<f64>>,
    stderr: Option<BTreeMap<MultiIndex, Vec<f64>>>,
    noise_time: f64,
    per_coord: Vec<u32>,
}

fn per_coord_degrees<'a>(n: usize, keys: impl Iterator<Item = &'a MultiIndex>) -> Vec<u32> {
    let mut per = vec![0u32; n];
    for s in keys {
        for (i, &q) in s.entries().iter().enumerate() {
            per[i] = per[i].max(q);
        }
    }
    per
}

fn negligible(v: &[f64]) -> bool {
    v.iter().all(|c| c.abs() < DROP_TOL)
}

impl HermiteExpansion {
    pub fn new(
        n: usize,
        k: usize,
        max_degree: u32,
        coeffs: impl IntoIterator<Item = (MultiIndex, Vec<f64>)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (s, v) in coeffs {
            if v.len() != k {
                return Err(NisimError::DimMismatch(format!(
                    "coefficient of {s:?} has length {}, expected {k}",
                    v.len()
                )));
            }
            if s.len() > n {
                return Err(NisimError::DimMismatch(format!(
                    "index {s:?} has more than n = {n} coordinates"
                )));
            }
            if s.degree() > max_degree {
                return Err(NisimError::DegreeExceeded {
                    requested: s.degree(),
                    max: max_degree,
                });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(NisimError::NonFiniteInput);
            }
            if !negligible(&v) {
                map.insert(s, v);
            }
        }
        Ok(HermiteExpansion {
            n,
            k,
            max_degree,
            per_coord: per_coord_degrees(n, map.keys()),
            coeffs: map,
            stderr: None,
            noise_time: 0.0,
        })
    }

    /// The constant expansion `x ↦ c`.
    pub fn constant(n: usize, c: Vec<f64>) -> Self {
        let k = c.len();
        HermiteExpansion::new(n, k, 0, [(MultiIndex::zero(), c)]).expect("valid constant")
    }

    pub fn dim_in(&self) -> usize {
        self.n
    }

    pub fn dim_out(&self) -> usize {
        self.k
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// Largest `|S|` with a stored coefficient.
    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn noise_time(&self) -> f64 {
        self.noise_time
    }

    fn factor(&self, s: &MultiIndex) -> f64 {
        if self.noise_time == 0.0 {
            1.0
        } else {
            (-self.noise_time * s.degree() as f64).exp()
        }
    }

    /// Effective coefficient `f̂(S)` (zero vector if not stored).
    pub fn coeff(&self, s: &MultiIndex) -> Vec<f64> {
        match self.coeffs.get(s) {
            Some(v) => {
                let f = self.factor(s);
                v.iter().map(|c| c * f).collect()
            }
            None => vec![0.0; self.k],
        }
    }

    /// Standard errors of the coefficients, when they were estimated by Monte Carlo.
    pub fn stderr(&self, s: &MultiIndex) -> Option<Vec<f64>> {
        let se = self.stderr.as_ref()?;
        let f = self.factor(s);
        Some(match se.get(s) {
            Some(v) => v.iter().map(|c| c * f).collect(),
            None => vec![0.0; self.k],
        })
    }

    pub fn has_stderr(&self) -> bool {
        self.stderr.is_some()
    }

    /// Stored (effective) coefficients in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, Vec<f64>)> + '_ {
        self.coeffs.iter().filter_map(move |(s, v)| {
            let f = self.factor(s);
            let v: Vec<f64> = v.iter().map(|c| c * f).collect();
            (!negligible(&v)).then_some((s, v))
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `(w_low, w_high)`: `W^{≤d}` and, when `total = E‖f‖²` is supplied, `total − W^{≤d}`.
    pub fn spectral_weight(&self, d: u32, total: Option<f64>) -> Result<(f64, Option<f64>)> {
        if d > self.max_degree {
            return Err(NisimError::DegreeExceeded {
                requested: d,
                max: self.max_degree,
            });
        }
        let w_low: f64 = self
            .iter()
            .filter(|(s, _)| s.degree() <= d)
            .map(|(_, v)| v.iter().map(|c| c * c).sum::<f64>())
            .sum();
        Ok((w_low, total.map(|t| t - w_low)))
    }

    /// `Σ_S ‖f̂(S)‖²`.
    pub fn norm_sq(&self) -> f64 {
        self.iter().map(|(_, v)| v.iter().map(|c| c * c).sum::<f64>()).sum()
    }

    /// `P_t` applied to the expansion.
    pub fn noise_apply(&self, t: f64) -> Result<Self> {
        if t.is_nan() || t < 0.0 {
            return Err(NisimError::NegativeTime(t));
        }
        let mut out = self.clone();
        if t > 0.0 {
            out.noise_time += t;
        }
        Ok(out)
    }

    /// Keeps only `|S| ≤ d`.
    pub fn truncate(&self, d: u32) -> Self {
        let mut out = self.clone();
        out.coeffs.retain(|s, _| s.degree() <= d);
        if let Some(se) = out.stderr.as_mut() {
            se.retain(|s, _| s.degree() <= d);
        }
        out.max_degree = out.max_degree.min(d);
        out.per_coord = per_coord_degrees(out.n, out.coeffs.keys());
        out
    }

    /// Coordinate `s` as a scalar polynomial.
    pub fn component(&self, s: usize) -> HermitePoly {
        HermitePoly::from_terms(self.n, self.iter().map(|(m, v)| (m.clone(), v[s])))
    }

    /// Evaluates the series at `x` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let tables: Vec<Vec<f64>> = self
            .per_coord
            .iter()
            .zip(x)
            .map(|(&q, &xi)| {
                let mut t = vec![0.0; q as usize + 1];
                hermite_table(xi, &mut t);
                t
            })
            .collect();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (s, v) in &self.coeffs {
            let h = s.eval_tables(&tables) * self.factor(s);
            for (o, c) in out.iter_mut().zip(v) {
                *o += c * h;
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.eval_into(x, &mut out);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(crate::json::to_string(&ExpansionFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ExpansionFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

impl PartialEq for HermiteExpansion {
    /// Equality of the effective coefficients.
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.k == other.k && self.max_degree == other.max_degree && self.iter().eq(other.iter())
    }
}

impl Serialize for HermiteExpansion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ExpansionFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermiteExpansion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ExpansionFile::deserialize(d)?
            .try_into()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct CoeffEntry {
    #[serde(rename = "S")]
    s: Vec<u32>,
    v: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    se: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ExpansionFile {
    n: usize,
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_degree: Option<u32>,
    coeffs: Vec<CoeffEntry>,
}

impl From<&HermiteExpansion> for ExpansionFile {
    fn from(e: &HermiteExpansion) -> Self {
        ExpansionFile {
            n: e.n,
            k: e.k,
            max_degree: Some(e.max_degree),
            coeffs: e
                .iter()
                .map(|(s, v)| CoeffEntry {
                    s: s.padded(e.n),
                    se: e.stderr(s),
                    v,
                })
                .collect(),
        }
    }
}

impl TryFrom<ExpansionFile> for HermiteExpansion {
    type Error = NisimError;

    fn try_from(f: ExpansionFile) -> Result<Self> {
        let inferred = f.coeffs.iter().map(|c| c.s.iter().sum()).max().unwrap_or(0);
        let max_degree = f.max_degree.unwrap_or(inferred);
        let has_se = f.coeffs.iter().any(|c| c.se.is_some());
        let mut se = BTreeMap::new();
        let mut terms = Vec::with_capacity(f.coeffs.len());
        for c in f.coeffs {
            let s = MultiIndex::new(c.s);
            if let Some(v) = c.se {
                se.insert(s.clone(), v);
            }
            terms.push((s, c.v));
        }
        let mut e = HermiteExpansion::new(f.n, f.k, max_degree, terms)?;
        if has_se {
            e.stderr = Some(se);
        }
        Ok(e)
    }
}

/// Hermite coefficients of `f` for all `|S| ≤ d`.
///
/// Quadrature uses a tensor Gauss-Hermite grid with at least `2d + 4` nodes per axis
/// (`n ≤ 6`); Monte Carlo records per-coefficient standard errors.
pub fn expand(f: &VectorFunction, d: u32, method: Method) -> Result<HermiteExpansion> {
    let n = f.dim_in();
    let design = Design::from_method(n, method, 2 * d as usize + 4, streams::EXPAND)?;
    expand_on(f, d, &design)
}

/// Hermite coefficients of `f` against a given design.
pub fn expand_on(f: &VectorFunction, d: u32, design: &Design) -> Result<HermiteExpansion> {
    let n = f.dim_in();
    let k = f.dim_out();
    if design.dim() != n {
        return Err(NisimError::DimMismatch(format!(
            "design has dimension {}, function {}",
            design.dim(),
            n
        )));
    }
    let basis = MultiIndex::all_up_to(n, d);
    let m = basis.len();
    let mut sum = vec![0.0; m * k];
    let mut sum_sq = vec![0.0; m * k];
    let mut fx = vec![0.0; k];
    let mut tables = vec![vec![0.0; d as usize + 1]; n];
    for i in 0..design.len() {
        let x = design.point(i);
        let w = design.weight(i);
        f.eval_into(x, &mut fx);
        for (t, &xi) in tables.iter_mut().zip(x) {
            hermite_table(xi, t);
        }
        for (b, s) in basis.iter().enumerate() {
            let h = s.eval_tables(&tables);
            for j in 0..k {
                let v = fx[j] * h;
                sum[b * k + j] += w * v;
                sum_sq[b * k + j] += w * v * v;
            }
        }
    }
    let terms = basis
        .iter()
        .enumerate()
        .map(|(b, s)| (s.clone(), sum[b * k..(b + 1) * k].to_vec()));
    let mut e = HermiteExpansion::new(n, k, d, terms)?;
    if design.is_monte_carlo() {
        let nn = design.len() as f64;
        let mut se = BTreeMap::new();
        for (b, s) in basis.iter().enumerate() {
            let v: Vec<f64> = (0..k)
                .map(|j| {
                    let mean = sum[b * k + j];
                    let var = (sum_sq[b * k + j] - mean * mean).max(0.0) * nn / (nn - 1.0);
                    (var / nn).sqrt()
                })
                .collect();
            se.insert(s.clone(), v);
        }
        e.stderr = Some(se);
    }
    Ok(e)
}

/// Scalar polynomial in the Hermite basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyFile", into = "PolyFile")]
pub struct HermitePoly {
    n: usize,
    terms: BTreeMap<MultiIndex, f64>,
    per_coord: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct PolyTerm {
    #[serde(rename = "S")]
    s: Vec<u32>,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyFile {
    n: usize,
    coeffs: Vec<PolyTerm>,
}

impl TryFrom<PolyFile> for HermitePoly {
    type Error = NisimError;

    fn try_from(f: PolyFile) -> Result<Self> {
        if f.coeffs
            .iter()
            .any(|t| t.s.len() > f.n && t.s[f.n..].iter().any(|&q| q > 0))
        {
            return Err(NisimError::DimMismatch(
                "polynomial term uses more coordinates than n".into(),
            ));
        }
        Ok(HermitePoly::from_terms(
            f.n,
            f.coeffs.into_iter().map(|t| (MultiIndex::new(t.s), t.c)),
        ))
    }
}

impl From<HermitePoly> for PolyFile {
    fn from(p: HermitePoly) -> Self {
        PolyFile {
            n: p.n,
            coeffs: p.terms.iter().map(|(s, &c)| PolyTerm { s: s.padded(p.n), c }).collect(),
        }
    }
}

impl HermitePoly {
    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Self {
        let mut map: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (s, c) in terms {
            *map.entry(s).or_insert(0.0) += c;
        }
        map.retain(|_, c| c.abs() >= DROP_TOL);
        let mut per_coord = vec![0u32; n];
        for s in map.keys() {
            for (i, &q) in s.entries().iter().enumerate() {
                per_coord[i] = per_coord[i].max(q);
            }
        }
        HermitePoly {
            n,
            terms: map,
            per_coord,
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::from_terms(n, [(MultiIndex::zero(), c)])
    }

    pub fn dim_in(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(s, &c)| (s, c))
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    /// Exact `E[p]` (the constant coefficient).
    pub fn mean(&self) -> f64 {
        self.terms.get(&MultiIndex::zero()).copied().unwrap_or(0.0)
    }

    /// Exact `Var[p] = Σ_{S≠0} c_S²`.
    pub fn variance(&self) -> f64 {
        self.terms
            .iter()
            .filter(|(s, _)| !s.is_zero())
            .map(|(_, c)| c * c)
            .sum()
    }

    /// `a·p + b`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(s, &c)| (s.clone(), a * c))
            .chain(std::iter::once((MultiIndex::zero(), b)));
        Self::from_terms(self.n, terms)
    }

    /// `self + scale·other`.
    pub fn add_scaled(&self, other: &HermitePoly, scale: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(s, &c)| (s.clone(), c))
            .chain(other.terms.iter().map(|(s, &c)| (s.clone(), scale * c)));
        Self::from_terms(self.n.max(other.n), terms)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let tables: Vec<Vec<f64>> = self
            .per_coord
            .iter()
            .zip(x)
            .map(|(&q, &xi)| {
                let mut t = vec![0.0; q as usize + 1];
                hermite_table(xi, &mut t);
                t
            })
            .collect();
        self.terms.iter().map(|(s, c)| c * s.eval_tables(&tables)).sum()
    }
}
