//! Spectrum matching by iterated projection.
//!
//! Given a simplex-valued `F` and an orthonormal family `g_1 ≡ 1, g_2, …, g_m`, the
//! iteration keeps `G_t = Σ κ_i g_i` and `F_t = Proj(G_t)`, and moves `G` by half the
//! spectral residual `J_t = Σ (β_i − β_{t,i}) g_i` until `ρ_t² = ‖β − β_t‖² ≤ δ`.
//! The potential `Ψ(t) = E⟨F − F_t, F − 2G_t + F_t⟩` drops by at least `ρ_t²/4` per
//! step, which bounds the run length by `4/δ`.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{NisimError, Result};
use crate::gaussian::expansion::expand_on;
use crate::gaussian::{Design, FunctionSpec, HermiteExpansion, Method, MultiIndex, VectorFunction};
use crate::rng::streams;
use crate::simplex::proj::{l1, proj_simplex_into};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Orthonormal family with `g_1 ≡ 1`.
#[derive(Clone)]
pub enum Basis {
    Hermite(Vec<MultiIndex>),
    Custom(Vec<ScalarFn>),
}

impl Basis {
    /// `{H_S : |S| ≤ d}` over `n` coordinates.
    pub fn hermite_up_to(n: usize, d: u32) -> Self {
        Basis::Hermite(MultiIndex::all_up_to(n, d))
    }

    pub fn len(&self) -> usize {
        match self {
            Basis::Hermite(v) => v.len(),
            Basis::Custom(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Basis::Hermite(idx) => {
                let d = idx.iter().map(MultiIndex::degree).max().unwrap_or(0) as usize;
                let tables: Vec<Vec<f64>> = x
                    .iter()
                    .map(|&xi| {
                        let mut t = vec![0.0; d + 1];
                        crate::gaussian::hermite_table(xi, &mut t);
                        t
                    })
                    .collect();
                for (o, s) in out.iter_mut().zip(idx) {
                    *o = s.eval_tables(&tables);
                }
            }
            Basis::Custom(fs) => {
                for (o, f) in out.iter_mut().zip(fs) {
                    *o = f(x);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub rho_sq: f64,
    pub psi: f64,
    /// `E⟨F − F_t, J_t⟩`, equal to `ρ_t²` for an orthonormal basis.
    pub alignment: f64,
    pub kappa_norm_sq: f64,
}

/// Snapshot of the iteration at step `t`.
#[derive(Clone, Debug)]
pub struct BoostState {
    pub t: usize,
    /// `β_t`, `m × k`.
    pub beta_t: Vec<Vec<f64>>,
    pub kappa: Vec<Vec<f64>>,
    pub rho_sq: f64,
    pub psi: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoostResult {
    /// `κ`, `m × k`, in basis order.
    pub kappa: Vec<Vec<f64>>,
    /// Basis multi-indices when the basis is Hermite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<MultiIndex>>,
    /// Target coefficients `β_i = E[g_i F]`.
    pub beta: Vec<Vec<f64>>,
    /// Coefficients of the output, `E[g_i F_proj]`.
    pub beta_final: Vec<Vec<f64>>,
    pub trace: Vec<TraceRow>,
    /// `t_0`, the step at which the stopping test passed.
    pub iterations: usize,
    pub delta: f64,
    /// Estimator tolerance used in the invariant checks.
    pub tol: f64,
    /// `Σ_i ‖β_i − E[g_i F_proj]‖²`.
    pub mismatch: f64,
    /// `Σ_i ‖κ_i‖²`.
    pub kappa_norm_sq: f64,
    #[serde(skip)]
    f_proj: Option<VectorFunction>,
}

impl BoostResult {
    /// `Proj(Σ κ_i g_i)`.
    pub fn f_proj(&self) -> &VectorFunction {
        self.f_proj.as_ref().expect("boost result carries its function")
    }

    /// `Σ κ_S H_S` for a Hermite basis.
    pub fn kappa_expansion(&self, n: usize) -> Option<HermiteExpansion> {
        let basis = self.basis.as_ref()?;
        let k = self.kappa.first().map_or(0, Vec::len);
        let d = basis.iter().map(MultiIndex::degree).max().unwrap_or(0);
        HermiteExpansion::new(n, k, d, basis.iter().cloned().zip(self.kappa.iter().cloned())).ok()
    }

    /// `t,rho_sq,psi` rows.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("t,rho_sq,psi\n");
        for r in &self.trace {
            let _ = writeln!(s, "{},{:.16e},{:.16e}", r.t, r.rho_sq, r.psi);
        }
        s
    }

    /// JSON with an embedded `projected_poly` function spec when the basis is Hermite.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            #[serde(flatten)]
            result: &'a BoostResult,
            #[serde(skip_serializing_if = "Option::is_none")]
            function: Option<FunctionSpec>,
        }
        Ok(crate::json::to_string(&Out {
            result: self,
            function: self.f_proj.as_ref().and_then(VectorFunction::spec),
        })?)
    }

    /// Rebuilds the projected polynomial from a JSON document written by [`to_json`].
    ///
    /// [`to_json`]: BoostResult::to_json
    pub fn function_from_json(s: &str) -> Result<VectorFunction> {
        #[derive(Deserialize)]
        struct In {
            function: FunctionSpec,
        }
        let v: In = serde_json::from_str(s)?;
        v.function.build()
    }
}

/// `E⟨F − F_t, F − 2G_t + F_t⟩` against `design`.
pub fn potential(f: &VectorFunction, f_t: &VectorFunction, g_t: &VectorFunction, design: &Design) -> Result<f64> {
    let k = f.dim_out();
    if f_t.dim_out() != k || g_t.dim_out() != k || design.dim() != f.dim_in() {
        return Err(NisimError::DimMismatch("potential operands disagree".into()));
    }
    let (mut a, mut b, mut c) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    Ok(design.mean(|x| {
        f.eval_into(x, &mut a);
        f_t.eval_into(x, &mut b);
        g_t.eval_into(x, &mut c);
        (0..k).map(|s| (a[s] - b[s]) * (a[s] - 2.0 * c[s] + b[s])).sum()
    }))
}

/// Maximum number of steps allowed before the run is declared divergent.
pub fn step_budget(delta: f64) -> usize {
    (4.0 / delta).ceil() as usize + 1
}

/// Runs the iteration for `f` against `basis`, with all expectations taken over
/// `design`.
pub fn run_boost(f: &VectorFunction, basis: &Basis, delta: f64, design: &Design) -> Result<BoostResult> {
    run_boost_observed(f, basis, delta, design, |_| {})
}

/// As [`run_boost`], calling `observe` with the state at every step.
pub fn run_boost_observed<O: FnMut(&BoostState)>(
    f: &VectorFunction,
    basis: &Basis,
    delta: f64,
    design: &Design,
    mut observe: O,
) -> Result<BoostResult> {
    if !(delta > 0.0) {
        return Err(NisimError::invalid(format!("delta must be positive, got {delta}")));
    }
    let n = f.dim_in();
    let k = f.dim_out();
    let m = basis.len();
    let np = design.len();
    if design.dim() != n {
        return Err(NisimError::DimMismatch("design and function dimensions differ".into()));
    }
    if m == 0 {
        return Err(NisimError::invalid("basis is empty"));
    }

    // Basis and target values on the design.
    let mut gv = vec![0.0; np * m];
    let mut fv = vec![0.0; np * k];
    for i in 0..np {
        basis.eval(design.point(i), &mut gv[i * m..(i + 1) * m]);
        f.eval_into(design.point(i), &mut fv[i * k..(i + 1) * k]);
    }
    let w = design.weights();
    let mc = design.is_monte_carlo();
    let nf = np as f64;

    if gv.chunks(m).any(|g| (g[0] - 1.0).abs() > 1e-12) {
        return Err(NisimError::invalid("first basis function must be the constant 1"));
    }
    check_gram(&gv, w, m, mc)?;
    let bad = fv
        .chunks(k)
        .filter(|y| !crate::simplex::proj::in_simplex(y, 1e-9))
        .count();
    if bad > 0 {
        return Err(NisimError::NotSimplexValued {
            violations: bad,
            checked: np,
        });
    }

    let coeffs = |vals: &[f64]| -> Vec<Vec<f64>> {
        let mut c = vec![vec![0.0; k]; m];
        for i in 0..np {
            let g = &gv[i * m..(i + 1) * m];
            let y = &vals[i * k..(i + 1) * k];
            for (b, cb) in c.iter_mut().enumerate() {
                let gw = w[i] * g[b];
                for s in 0..k {
                    cb[s] += gw * y[s];
                }
            }
        }
        c
    };
    let beta = coeffs(&fv);

    let mut kappa = vec![vec![0.0; k]; m];
    kappa[0] = vec![1.0 / k as f64; k];
    let mut gt = vec![1.0 / k as f64; np * k];
    let mut ft = gt.clone();
    let budget = step_budget(delta);
    let mut trace = Vec::new();
    let mut tol: f64 = if mc { 0.0 } else { 1e-8 };
    let mut t = 0;
    loop {
        let beta_t = coeffs(&ft);
        let diff: Vec<Vec<f64>> = beta
            .iter()
            .zip(&beta_t)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        let rho_sq: f64 = diff.iter().flatten().map(|v| v * v).sum();

        let (mut psi, mut align, mut q1, mut q2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..np {
            let g = &gv[i * m..(i + 1) * m];
            let (y, yt, zt) = (
                &fv[i * k..(i + 1) * k],
                &ft[i * k..(i + 1) * k],
                &gt[i * k..(i + 1) * k],
            );
            let mut p = 0.0;
            let mut a = 0.0;
            for s in 0..k {
                let e = y[s] - yt[s];
                p += e * (y[s] - 2.0 * zt[s] + yt[s]);
                let j: f64 = (0..m).map(|b| diff[b][s] * g[b]).sum();
                a += e * j;
            }
            psi += w[i] * p;
            align += w[i] * a;
            q1 += a;
            q2 += a * a;
        }
        // Half-width of ρ² for Monte-Carlo designs: Var(ρ̂²) ≈ 4 Var⟨F − F_t, J_t⟩ / N.
        let halfwidth = if mc {
            let mean = q1 / nf;
            let sd = ((q2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0)).sqrt();
            3.0 * 2.0 * sd / nf.sqrt()
        } else {
            0.0
        };
        if mc {
            tol = tol.max(halfwidth);
        }
        let kappa_norm_sq: f64 = kappa.iter().flatten().map(|v| v * v).sum();
        trace.push(TraceRow {
            t,
            rho_sq,
            psi,
            alignment: align,
            kappa_norm_sq,
        });
        observe(&BoostState {
            t,
            beta_t: beta_t.clone(),
            kappa: kappa.clone(),
            rho_sq,
            psi,
        });
        if rho_sq <= delta - halfwidth {
            let f_proj = match basis {
                Basis::Hermite(idx) => {
                    let d = idx.iter().map(MultiIndex::degree).max().unwrap_or(0);
                    let e = HermiteExpansion::new(n, k, d, idx.iter().cloned().zip(kappa.iter().cloned()))?;
                    VectorFunction::projected(e)
                }
                Basis::Custom(fs) => {
                    let fs = fs.clone();
                    let kap = kappa.clone();
                    VectorFunction::from_fn(n, k, crate::gaussian::Codomain::Simplex, move |x, out| {
                        let mut z = vec![0.0; k];
                        for (g, kb) in fs.iter().zip(&kap) {
                            let v = g(x);
                            for s in 0..k {
                                z[s] += kb[s] * v;
                            }
                        }
                        proj_simplex_into(&z, out);
                    })
                }
            };
            return Ok(BoostResult {
                kappa,
                basis: match basis {
                    Basis::Hermite(idx) => Some(idx.clone()),
                    Basis::Custom(_) => None,
                },
                beta,
                beta_final: beta_t,
                trace,
                iterations: t,
                delta,
                tol,
                mismatch: rho_sq,
                kappa_norm_sq,
                f_proj: Some(f_proj),
            });
        }
        if t + 1 > budget {
            return Err(NisimError::BudgetExceeded { budget });
        }
        for (kb, db) in kappa.iter_mut().zip(&diff) {
            for s in 0..k {
                kb[s] += 0.5 * db[s];
            }
        }
        for i in 0..np {
            let g = &gv[i * m..(i + 1) * m];
            let zt = &mut gt[i * k..(i + 1) * k];
            for s in 0..k {
                let j: f64 = (0..m).map(|b| diff[b][s] * g[b]).sum();
                zt[s] += 0.5 * j;
            }
            proj_simplex_into(&gt[i * k..(i + 1) * k], &mut ft[i * k..(i + 1) * k]);
        }
        t += 1;
    }
}

fn check_gram(gv: &[f64], w: &[f64], m: usize, mc: bool) -> Result<()> {
    let np = w.len();
    let nf = np as f64;
    let mut max_dev: f64 = 0.0;
    let mut worst_tol = 1e-8;
    for a in 0..m {
        for b in a..m {
            let (mut s1, mut s2) = (0.0, 0.0);
            for i in 0..np {
                let v = gv[i * m + a] * gv[i * m + b];
                s1 += w[i] * v;
                s2 += w[i] * v * v;
            }
            let want = if a == b { 1.0 } else { 0.0 };
            let dev = (s1 - want).abs();
            let tol = if mc {
                4.0 * ((s2 - s1 * s1).max(0.0) / (nf - 1.0)).sqrt() + 1e-12
            } else {
                1e-8
            };
            if dev > tol && dev - tol > max_dev - worst_tol {
                max_dev = dev;
                worst_tol = tol;
            }
        }
    }
    if max_dev > worst_tol {
        return Err(NisimError::NonOrthonormalBasis {
            max_dev,
            tol: worst_tol,
        });
    }
    Ok(())
}

/// Output of [`boost_match`].
#[derive(Clone, Debug)]
pub struct BoostMatch {
    pub result: BoostResult,
    /// `α_S = κ_S`.
    pub alpha: HermiteExpansion,
    /// Hermite coefficients of the output up to the matched degree.
    pub output: HermiteExpansion,
    /// Coefficients of the input up to the matched degree.
    pub target: HermiteExpansion,
    /// `Σ_{|S|≤d} ‖β_out(S) − f̂(S)‖²`.
    pub mismatch: f64,
    /// `Σ_{|S|≤d} ‖β_out(S) − α_S‖²`, reported for comparison.
    pub alpha_gap: f64,
    /// `Σ ‖α_S‖²`.
    pub alpha_norm_sq: f64,
}

impl BoostMatch {
    pub fn f_proj(&self) -> &VectorFunction {
        self.result.f_proj()
    }
}

fn design_for(n: usize, d: u32, method: Method, stream: u64) -> Result<Design> {
    Design::from_method(n, method, 2 * d as usize + 4, stream)
}

/// Runs the iteration with the Hermite basis of degree `≤ d` and re-expands the
/// output on the same design.
pub fn boost_match(f: &VectorFunction, d: u32, delta: f64, method: Method) -> Result<BoostMatch> {
    let design = design_for(f.dim_in(), d, method, streams::EXPAND)?;
    boost_match_on(f, d, delta, &design)
}

pub fn boost_match_on(f: &VectorFunction, d: u32, delta: f64, design: &Design) -> Result<BoostMatch> {
    let n = f.dim_in();
    let basis = Basis::hermite_up_to(n, d);
    let result = run_boost(f, &basis, delta, design)?;
    let alpha = result.kappa_expansion(n).expect("Hermite basis");
    let output = expand_on(result.f_proj(), d, design)?;
    let target = expand_on(f, d, design)?;
    let Basis::Hermite(idx) = &basis else { unreachable!() };
    let (mut mismatch, mut alpha_gap) = (0.0, 0.0);
    for s in idx {
        let o = output.coeff(s);
        let t = target.coeff(s);
        let a = alpha.coeff(s);
        for j in 0..o.len() {
            mismatch += (o[j] - t[j]).powi(2);
            alpha_gap += (o[j] - a[j]).powi(2);
        }
    }
    let alpha_norm_sq = alpha.norm_sq();
    Ok(BoostMatch {
        result,
        alpha,
        output,
        target,
        mismatch,
        alpha_gap,
        alpha_norm_sq,
    })
}

/// Output of [`build_fsm`].
#[derive(Clone, Debug)]
pub struct Fsm {
    /// `⌈(2/t)·ln(k²/δ)⌉`.
    pub degree: u32,
    /// Accuracy the spectrum was matched to, `δ²/k⁴`.
    pub match_delta: f64,
    pub matched: BoostMatch,
    /// `‖E f_sm − E f‖_1`.
    pub mean_drift: f64,
    /// `Var(p_{f,s})` for each coordinate of the inner polynomial.
    pub variances: Vec<f64>,
    /// `k⁸/δ⁴`.
    pub variance_bound: f64,
}

impl Fsm {
    pub fn f_sm(&self) -> &VectorFunction {
        self.matched.f_proj()
    }
}

/// `⌈(c/t)·ln(k²/δ)⌉`, at least 1.
pub fn noise_degree(c: f64, t: f64, k: usize, delta: f64) -> u32 {
    let kf = k as f64;
    ((c / t) * (kf * kf / delta).ln()).ceil().max(1.0) as u32
}

/// Projected polynomial of degree `⌈(2/t)·ln(k²/δ)⌉` whose spectrum matches `f` to
/// within `δ²/k⁴`.
pub fn build_fsm(f: &VectorFunction, t: f64, delta: f64, method: Method) -> Result<Fsm> {
    build_fsm_on_stream(f, t, delta, method, streams::EXPAND)
}

/// As [`build_fsm`], drawing a Monte-Carlo design from `stream`.
pub fn build_fsm_on_stream(f: &VectorFunction, t: f64, delta: f64, method: Method, stream: u64) -> Result<Fsm> {
    if !(t > 0.0) || !(delta > 0.0) {
        return Err(NisimError::invalid("t and delta must be positive"));
    }
    let k = f.dim_out();
    let kf = k as f64;
    let degree = noise_degree(2.0, t, k, delta);
    let match_delta = delta * delta / kf.powi(4);
    let design = design_for(f.dim_in(), degree, method, stream)?;
    let matched = boost_match_on(f, degree, match_delta, &design)?;
    let zero = MultiIndex::zero();
    let mean_drift = l1(&matched.output.coeff(&zero), &matched.target.coeff(&zero));
    let inner = matched.alpha.clone();
    let variances = (0..k).map(|s| inner.component(s).variance()).collect();
    Ok(Fsm {
        degree,
        match_delta,
        matched,
        mean_drift,
        variances,
        variance_bound: kf.powi(8) / delta.powi(4),
    })
}
