//! Polynomial plurality functions and their mixtures.
//!
//! `PPF_{p,j}(x)` is `e_j` where `p(x) > 0` and the zero vector elsewhere.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bernstein::SmoothPoly;
use crate::error::{NisimError, Result};
use crate::gaussian::HermitePoly;

/// Scalar polynomial a PPF thresholds.
#[derive(Clone, Debug)]
pub enum PolyRef {
    /// Explicit polynomial in the Hermite basis.
    Hermite(Arc<HermitePoly>),
    /// Coordinate `coord` of a factored composed polynomial.
    Component { poly: Arc<SmoothPoly>, coord: usize },
}

impl PartialEq for PolyRef {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (PolyRef::Hermite(a), PolyRef::Hermite(b)) => a == b,
            (PolyRef::Component { poly: a, coord: i }, PolyRef::Component { poly: b, coord: j }) => {
                i == j && (Arc::ptr_eq(a, b) || a == b)
            }
            _ => false,
        }
    }
}

impl PolyRef {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PolyRef::Hermite(p) => p.eval(x),
            PolyRef::Component { poly, coord } => poly.eval(x)[*coord],
        }
    }

    fn moments(&self) -> (f64, f64) {
        match self {
            PolyRef::Hermite(p) => (p.mean(), p.variance()),
            PolyRef::Component { poly, coord } => poly.moments()[*coord],
        }
    }

    fn dim_in(&self) -> usize {
        match self {
            PolyRef::Hermite(p) => p.dim_in(),
            PolyRef::Component { poly, .. } => poly.dim_in(),
        }
    }
}

/// `PPF_{p,j}` with `p(x) = scale·base(x) + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct PpfSpec {
    pub poly: PolyRef,
    pub scale: f64,
    pub offset: f64,
    /// Zero-based output coordinate.
    pub index_j: usize,
    pub k: usize,
    /// Degree of `p`; saturates for composed polynomials whose degree does not fit.
    pub degree: u64,
    /// `(d, δ)` once the polynomial has been balanced.
    pub balance: Option<(u64, f64)>,
}

impl PpfSpec {
    /// PPF of an explicit Hermite polynomial.
    pub fn hermite(poly: HermitePoly, index_j: usize, k: usize) -> Result<Self> {
        if index_j >= k {
            return Err(NisimError::invalid(format!("index {index_j} out of range for k = {k}")));
        }
        let degree = poly.degree() as u64;
        Ok(PpfSpec {
            poly: PolyRef::Hermite(Arc::new(poly)),
            scale: 1.0,
            offset: 0.0,
            index_j,
            k,
            degree,
            balance: None,
        })
    }

    /// PPF of coordinate `coord` of a composed polynomial, shifted by `offset`.
    pub fn component(poly: Arc<SmoothPoly>, coord: usize, offset: f64, index_j: usize) -> Result<Self> {
        let k = poly.dim_out();
        if index_j >= k || coord >= k {
            return Err(NisimError::invalid(format!("index out of range for k = {k}")));
        }
        let degree = poly.composed_degree();
        Ok(PpfSpec {
            poly: PolyRef::Component { poly, coord },
            scale: 1.0,
            offset,
            index_j,
            k,
            degree,
            balance: None,
        })
    }

    pub fn dim_in(&self) -> usize {
        self.poly.dim_in()
    }

    /// `p(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.scale * self.poly.eval(x) + self.offset
    }

    /// `(E[p], Var[p])`.
    pub fn moments(&self) -> (f64, f64) {
        let (m, v) = self.poly.moments();
        (self.scale * m + self.offset, self.scale * self.scale * v)
    }
}

/// `e_j` if `p(x) > 0`, else zero.
pub fn ppf_eval(ppf: &PpfSpec, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; ppf.k];
    if ppf.value(x) > 0.0 {
        out[ppf.index_j] = 1.0;
    }
    out
}

/// `d·ln^{d/2}(1/δ)`, or infinity when it does not fit in an `f64`.
pub fn balance_bound(d: u64, delta: f64) -> f64 {
    let l = (1.0 / delta).ln();
    if d == 0 {
        return 0.0;
    }
    let log_b = (d as f64).ln() + 0.5 * d as f64 * l.ln();
    if log_b > 700.0 {
        f64::INFINITY
    } else {
        d as f64 * l.powf(0.5 * d as f64)
    }
}

/// Rescales to unit variance and clamps the mean to `±d·ln^{d/2}(1/δ)`.
///
/// The clamp replaces `p` by `p − E[p] + bound·sign(E[p])`, which only changes the
/// sign of `p` where `|p − E[p]|` exceeds `|E[p]| − bound`.
pub fn balance_ppf(ppf: &PpfSpec, delta: f64) -> Result<PpfSpec> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(NisimError::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let (mean, var) = ppf.moments();
    if !(var > 0.0) {
        return Err(NisimError::ZeroVariance);
    }
    let sd = var.sqrt();
    let mut out = ppf.clone();
    out.scale = ppf.scale / sd;
    out.offset = ppf.offset / sd;
    let m = mean / sd;
    let bound = balance_bound(ppf.degree, delta);
    if m.abs() > bound {
        out.offset += -m + bound * m.signum();
    }
    if let PolyRef::Hermite(p) = &out.poly {
        // Keep explicit polynomials in canonical form.
        let folded = p.affine(out.scale, out.offset);
        out.poly = PolyRef::Hermite(Arc::new(folded));
        out.scale = 1.0;
        out.offset = 0.0;
    }
    out.balance = Some((ppf.degree, delta));
    Ok(out)
}

/// `Σ_t w_t · PPF_t`.
#[derive(Clone, Debug)]
pub struct PpfMixture {
    n: usize,
    k: usize,
    terms: Vec<(f64, PpfSpec)>,
    // Distinct composed polynomials and, per term, the one it reads (if any).
    shared: Vec<Arc<SmoothPoly>>,
    term_source: Vec<Option<usize>>,
}

impl PartialEq for PpfMixture {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.k == other.k && self.terms == other.terms
    }
}

impl PpfMixture {
    pub fn new(k: usize, terms: Vec<(f64, PpfSpec)>) -> Result<Self> {
        let n = terms.first().map(|(_, t)| t.dim_in()).unwrap_or(0);
        let mut shared: Vec<Arc<SmoothPoly>> = Vec::new();
        let mut term_source = Vec::with_capacity(terms.len());
        for (w, t) in &terms {
            if t.k != k || t.dim_in() != n {
                return Err(NisimError::DimMismatch("mixture terms disagree on n or k".into()));
            }
            if !w.is_finite() || *w < 0.0 {
                return Err(NisimError::invalid("mixture weights must be non-negative"));
            }
            term_source.push(match &t.poly {
                PolyRef::Component { poly, .. } => Some(match shared.iter().position(|s| Arc::ptr_eq(s, poly)) {
                    Some(i) => i,
                    None => {
                        shared.push(poly.clone());
                        shared.len() - 1
                    }
                }),
                PolyRef::Hermite(_) => None,
            });
        }
        Ok(PpfMixture {
            n,
            k,
            terms,
            shared,
            term_source,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim_in(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(f64, PpfSpec)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluates the mixture, computing each shared composed polynomial once.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let values: Vec<Vec<f64>> = self.shared.iter().map(|p| p.eval(x)).collect();
        out.iter_mut().for_each(|o| *o = 0.0);
        for ((w, t), src) in self.terms.iter().zip(&self.term_source) {
            let base = match (src, &t.poly) {
                (Some(i), PolyRef::Component { coord, .. }) => values[*i][*coord],
                (_, p) => p.eval(x),
            };
            if t.scale * base + t.offset > 0.0 {
                out[t.index_j] += w;
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.eval_into(x, &mut out);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(crate::json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PolyEntry {
    Component {
        smooth: usize,
        coord: usize,
        scale: f64,
        offset: f64,
    },
    Hermite(HermitePoly),
}

#[derive(Serialize, Deserialize)]
struct TermEntry {
    w: f64,
    j: usize,
    poly: PolyEntry,
    degree: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    balance: Option<(u64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct MixtureFile {
    k: usize,
    terms: Vec<TermEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    smooth_polys: Vec<SmoothPoly>,
}

impl Serialize for PpfMixture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let terms = self
            .terms
            .iter()
            .zip(&self.term_source)
            .map(|((w, t), src)| {
                let poly = match (&t.poly, src) {
                    (PolyRef::Component { coord, .. }, Some(i)) => PolyEntry::Component {
                        smooth: *i,
                        coord: *coord,
                        scale: t.scale,
                        offset: t.offset,
                    },
                    (PolyRef::Hermite(p), _) => PolyEntry::Hermite(p.affine(t.scale, t.offset)),
                    _ => unreachable!("component terms always have a source"),
                };
                TermEntry {
                    w: *w,
                    j: t.index_j,
                    poly,
                    degree: t.degree,
                    balance: t.balance,
                }
            })
            .collect();
        MixtureFile {
            k: self.k,
            terms,
            smooth_polys: self.shared.iter().map(|p| (**p).clone()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PpfMixture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let file = MixtureFile::deserialize(d)?;
        let shared: Vec<Arc<SmoothPoly>> = file.smooth_polys.into_iter().map(Arc::new).collect();
        let mut terms = Vec::with_capacity(file.terms.len());
        for t in file.terms {
            let (poly, scale, offset) = match t.poly {
                PolyEntry::Hermite(p) => (PolyRef::Hermite(Arc::new(p)), 1.0, 0.0),
                PolyEntry::Component {
                    smooth,
                    coord,
                    scale,
                    offset,
                } => {
                    let poly = shared
                        .get(smooth)
                        .ok_or_else(|| D::Error::custom("unknown smooth polynomial index"))?
                        .clone();
                    (PolyRef::Component { poly, coord }, scale, offset)
                }
            };
            if t.j >= file.k {
                return Err(D::Error::custom("term index j out of range"));
            }
            terms.push((
                t.w,
                PpfSpec {
                    poly,
                    scale,
                    offset,
                    index_j: t.j,
                    k: file.k,
                    degree: t.degree,
                    balance: t.balance,
                },
            ));
        }
        PpfMixture::new(file.k, terms).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::MultiIndex;
    use crate::numeric::norm_sf;
    use crate::rng;

    fn h1_plus(c: f64) -> HermitePoly {
        HermitePoly::from_terms(1, [(MultiIndex::unit(0), 1.0), (MultiIndex::zero(), c)])
    }

    #[test]
    fn eval_examples() {
        let one = PpfSpec::hermite(HermitePoly::constant(1, 1.0), 1, 3).unwrap();
        assert_eq!(ppf_eval(&one, &[0.7]), vec![0.0, 1.0, 0.0]);
        let neg = PpfSpec::hermite(HermitePoly::constant(1, -1.0), 1, 3).unwrap();
        assert_eq!(ppf_eval(&neg, &[0.7]), vec![0.0; 3]);
        let h1 = PpfSpec::hermite(h1_plus(0.0), 0, 2).unwrap();
        assert_eq!(ppf_eval(&h1, &[0.5]), vec![1.0, 0.0]);
    }

    #[test]
    fn balance_rescales() {
        let p = HermitePoly::from_terms(1, [(MultiIndex::unit(0), 2.0)]);
        let b = balance_ppf(&PpfSpec::hermite(p, 0, 2).unwrap(), 0.1).unwrap();
        let (m, v) = b.moments();
        assert_eq!(m, 0.0);
        assert!((v - 1.0).abs() < 1e-15);
        assert!((b.value(&[0.8]) - 0.8).abs() < 1e-15);
        let again = balance_ppf(&b, 0.1).unwrap();
        assert!((again.value(&[0.8]) - b.value(&[0.8])).abs() < 1e-15);
    }

    #[test]
    fn balance_clamps_large_mean() {
        let p = PpfSpec::hermite(h1_plus(100.0), 0, 2).unwrap();
        let b = balance_ppf(&p, 0.01).unwrap();
        let bound = (100f64.ln()).sqrt();
        assert!((b.moments().0 - bound).abs() < 1e-12, "{:?}", b.moments());
        // Flip rate is Pr[x + bound ≤ 0] = Φ(−bound).
        let mut r = rng::stream_rng(5, 0);
        let n = 1_000_000;
        let flips = (0..n)
            .filter(|_| {
                let x = rng::normal(&mut r);
                (p.value(&[x]) > 0.0) != (b.value(&[x]) > 0.0)
            })
            .count();
        let rate = flips as f64 / n as f64;
        let want = norm_sf(bound);
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((rate - want).abs() < 4.0 * se, "rate {rate} want {want}");
    }

    #[test]
    fn zero_variance_rejected() {
        let p = PpfSpec::hermite(HermitePoly::constant(1, 3.0), 0, 2).unwrap();
        assert!(matches!(balance_ppf(&p, 0.1), Err(NisimError::ZeroVariance)));
    }

    #[test]
    fn mixture_in_unit_cube_and_round_trips() {
        let terms: Vec<(f64, PpfSpec)> = (1..=4)
            .map(|j| {
                let p = h1_plus(-(j as f64) * 0.25);
                (0.25, PpfSpec::hermite(p, j % 2, 2).unwrap())
            })
            .collect();
        let m = PpfMixture::new(2, terms).unwrap();
        for x in [-2.0, 0.1, 0.6, 3.0] {
            let v = m.eval(&[x]);
            assert!(v.iter().all(|c| (0.0..=1.0).contains(c)));
        }
        let back = PpfMixture::from_json(&m.to_json().unwrap()).unwrap();
        for x in [-2.0, 0.1, 0.6, 3.0] {
            assert_eq!(back.eval(&[x]), m.eval(&[x]));
        }
    }
}
