//! Evaluable maps `R^n → R^k` with a declared structural form.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::expansion::HermiteExpansion;
use crate::bernstein::SmoothPoly;
use crate::error::{NisimError, Result};
use crate::rng;
use crate::simplex::ppf::PpfMixture;
use crate::simplex::proj::{in_simplex, proj_simplex_into};

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Range a function promises to stay in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Codomain {
    Real,
    /// `Δ_k`.
    Simplex,
    /// Vertices `e_1, …, e_k` of `Δ_k`.
    Vertices,
    /// `[0, 1]^k`.
    UnitCube,
}

#[derive(Clone)]
pub enum Form {
    BlackBox,
    TruncatedSeries(Arc<HermiteExpansion>),
    /// `Proj ∘ p` for the polynomial map `p` given by the expansion.
    ProjectedPoly(Arc<HermiteExpansion>),
    /// Outer Bernstein polynomial composed with inner polynomials, kept factored.
    FactoredPoly(Arc<SmoothPoly>),
    PpfMixture(Arc<PpfMixture>),
}

impl Form {
    pub fn name(&self) -> &'static str {
        match self {
            Form::BlackBox => "black_box",
            Form::TruncatedSeries(_) => "truncated_series",
            Form::ProjectedPoly(_) => "projected_poly",
            Form::FactoredPoly(_) => "factored_poly",
            Form::PpfMixture(_) => "ppf_mixture",
        }
    }
}

/// Deterministic map `R^n → R^k`.
#[derive(Clone)]
pub struct VectorFunction {
    n: usize,
    k: usize,
    codomain: Codomain,
    form: Form,
    spec: Option<Arc<FunctionSpec>>,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for VectorFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFunction")
            .field("n", &self.n)
            .field("k", &self.k)
            .field("codomain", &self.codomain)
            .field("form", &self.form.name())
            .finish()
    }
}

impl VectorFunction {
    /// Black-box function from a closure writing `k` outputs.
    pub fn from_fn<F>(n: usize, k: usize, codomain: Codomain, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        VectorFunction {
            n,
            k,
            codomain,
            form: Form::BlackBox,
            spec: None,
            eval: Arc::new(f),
        }
    }

    pub fn constant(n: usize, value: Vec<f64>) -> Self {
        let codomain = if value.iter().all(|v| *v == 0.0 || *v == 1.0) && value.iter().sum::<f64>() == 1.0 {
            Codomain::Vertices
        } else if in_simplex(&value, 1e-12) {
            Codomain::Simplex
        } else {
            Codomain::Real
        };
        let spec = FunctionSpec::Constant {
            n,
            value: value.clone(),
        };
        let k = value.len();
        Self::from_fn(n, k, codomain, move |_, out| out.copy_from_slice(&value)).with_spec(spec)
    }

    /// `e_1` where `w·x > b`, else `e_2`.
    pub fn halfspace(w: Vec<f64>, b: f64) -> Self {
        let spec = FunctionSpec::Halfspace { w: w.clone(), b };
        Self::from_fn(w.len(), 2, Codomain::Vertices, move |x, out| {
            let s: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            if s > b {
                out[0] = 1.0;
                out[1] = 0.0;
            } else {
                out[0] = 0.0;
                out[1] = 1.0;
            }
        })
        .with_spec(spec)
    }

    /// Vertex of the first maximal coordinate of `W x + b` (`W` is `k × n`).
    pub fn argmax_linear(w: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let k = w.len();
        if k == 0 || b.len() != k {
            return Err(NisimError::DimMismatch(
                "argmax_linear needs k rows and k offsets".into(),
            ));
        }
        let n = w[0].len();
        if w.iter().any(|r| r.len() != n) {
            return Err(NisimError::DimMismatch("ragged weight matrix".into()));
        }
        let spec = FunctionSpec::ArgmaxLinear {
            w: w.clone(),
            b: b.clone(),
        };
        Ok(Self::from_fn(n, k, Codomain::Vertices, move |x, out| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (i, (row, bi)) in w.iter().zip(&b).enumerate() {
                let v: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bi;
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            out.iter_mut().for_each(|o| *o = 0.0);
            out[best] = 1.0;
        })
        .with_spec(spec))
    }

    pub fn from_expansion(e: HermiteExpansion) -> Self {
        let e = Arc::new(e);
        let inner = e.clone();
        VectorFunction {
            n: e.dim_in(),
            k: e.dim_out(),
            codomain: Codomain::Real,
            form: Form::TruncatedSeries(e),
            spec: None,
            eval: Arc::new(move |x, out| inner.eval_into(x, out)),
        }
    }

    /// `x ↦ Proj(p(x))` for the polynomial map `p`.
    pub fn projected(e: HermiteExpansion) -> Self {
        let e = Arc::new(e);
        let inner = e.clone();
        let k = e.dim_out();
        VectorFunction {
            n: e.dim_in(),
            k,
            codomain: Codomain::Simplex,
            form: Form::ProjectedPoly(e),
            spec: None,
            eval: Arc::new(move |x, out| {
                if k <= 64 {
                    let mut z = [0.0; 64];
                    inner.eval_into(x, &mut z[..k]);
                    proj_simplex_into(&z[..k], out);
                } else {
                    let z = inner.eval(x);
                    proj_simplex_into(&z, out);
                }
            }),
        }
    }

    pub fn factored(p: Arc<SmoothPoly>) -> Self {
        let inner = p.clone();
        VectorFunction {
            n: p.dim_in(),
            k: p.dim_out(),
            codomain: Codomain::Real,
            form: Form::FactoredPoly(p),
            spec: None,
            eval: Arc::new(move |x, out| inner.eval_into(x, out)),
        }
    }

    pub fn ppf_mixture(m: PpfMixture) -> Self {
        let m = Arc::new(m);
        let inner = m.clone();
        VectorFunction {
            n: m.dim_in(),
            k: m.k(),
            codomain: Codomain::UnitCube,
            form: Form::PpfMixture(m),
            spec: None,
            eval: Arc::new(move |x, out| inner.eval_into(x, out)),
        }
    }

    fn with_spec(mut self, spec: FunctionSpec) -> Self {
        self.spec = Some(Arc::new(spec));
        self
    }

    /// Same evaluator with a different declared codomain.
    pub fn with_codomain(mut self, codomain: Codomain) -> Self {
        self.codomain = codomain;
        self
    }

    pub fn dim_in(&self) -> usize {
        self.n
    }

    pub fn dim_out(&self) -> usize {
        self.k
    }

    pub fn codomain(&self) -> Codomain {
        self.codomain
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn is_simplex_valued(&self) -> bool {
        matches!(self.codomain, Codomain::Simplex | Codomain::Vertices)
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.eval_into(x, &mut out);
        out
    }

    /// Closure form of the evaluator, for composing new functions.
    pub fn evaluator(&self) -> Arc<EvalFn> {
        self.eval.clone()
    }

    /// Serializable description, when the function has one.
    pub fn spec(&self) -> Option<FunctionSpec> {
        if let Some(s) = &self.spec {
            return Some((**s).clone());
        }
        match &self.form {
            Form::TruncatedSeries(e) => Some(FunctionSpec::Series {
                expansion: (**e).clone(),
            }),
            Form::ProjectedPoly(e) => Some(FunctionSpec::ProjectedPoly {
                expansion: (**e).clone(),
            }),
            Form::PpfMixture(m) => Some(FunctionSpec::PpfMixture { mixture: (**m).clone() }),
            Form::FactoredPoly(p) => Some(FunctionSpec::FactoredPoly { poly: (**p).clone() }),
            Form::BlackBox => None,
        }
    }

    /// Samples `samples` Gaussian points and counts outputs outside the declared range.
    pub fn check_range(&self, samples: usize, seed: u64) -> Result<()> {
        let mut r = rng::stream_rng(seed, rng::streams::CHECKS);
        let mut x = vec![0.0; self.n];
        let mut out = vec![0.0; self.k];
        let mut bad = 0;
        for _ in 0..samples {
            rng::fill_normal(&mut r, &mut x);
            self.eval_into(&x, &mut out);
            let ok = match self.codomain {
                Codomain::Real => out.iter().all(|v| v.is_finite()),
                Codomain::Simplex => in_simplex(&out, 1e-9),
                Codomain::Vertices => in_simplex(&out, 0.0) && out.iter().all(|v| *v == 0.0 || *v == 1.0),
                Codomain::UnitCube => out.iter().all(|v| (0.0..=1.0).contains(v)),
            };
            if !ok {
                bad += 1;
            }
        }
        if bad > 0 && self.is_simplex_valued() {
            return Err(NisimError::NotSimplexValued {
                violations: bad,
                checked: samples,
            });
        }
        if bad > 0 {
            return Err(NisimError::PreconditionViolated {
                what: format!("outputs outside declared {:?} range", self.codomain),
                measured: bad as f64 / samples as f64,
                bound: 0.0,
            });
        }
        Ok(())
    }
}

/// File description of a function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionSpec {
    Constant { n: usize, value: Vec<f64> },
    Halfspace { w: Vec<f64>, b: f64 },
    ArgmaxLinear { w: Vec<Vec<f64>>, b: Vec<f64> },
    Series { expansion: HermiteExpansion },
    ProjectedPoly { expansion: HermiteExpansion },
    FactoredPoly { poly: SmoothPoly },
    PpfMixture { mixture: PpfMixture },
}

impl FunctionSpec {
    pub fn build(&self) -> Result<VectorFunction> {
        Ok(match self {
            FunctionSpec::Constant { n, value } => VectorFunction::constant(*n, value.clone()),
            FunctionSpec::Halfspace { w, b } => {
                if w.is_empty() {
                    return Err(NisimError::invalid("halfspace needs a non-empty normal"));
                }
                VectorFunction::halfspace(w.clone(), *b)
            }
            FunctionSpec::ArgmaxLinear { w, b } => VectorFunction::argmax_linear(w.clone(), b.clone())?,
            FunctionSpec::Series { expansion } => VectorFunction::from_expansion(expansion.clone()),
            FunctionSpec::ProjectedPoly { expansion } => VectorFunction::projected(expansion.clone()),
            FunctionSpec::FactoredPoly { poly } => VectorFunction::factored(Arc::new(poly.clone())),
            FunctionSpec::PpfMixture { mixture } => VectorFunction::ppf_mixture(mixture.clone()),
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(crate::json::to_string(self)?)
    }
}
