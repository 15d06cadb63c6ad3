//! Multivariate Bernstein approximation and its composition with the simplex
//! projection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NisimError, Result};
use crate::gaussian::{Design, Form, HermiteExpansion, VectorFunction};
use crate::rng;
use crate::simplex::proj::{proj_simplex_into, proj_support};

/// Binomial `(d, x)` probabilities `p_{i,d}(x)` for `i` in a window around the mode.
///
/// With `full` the window is `0..=d`; otherwise it is cut where the terms drop
/// below `1e-17` of the mode, and the kept terms are renormalised.
fn binomial_window(d: u64, x: f64, full: bool) -> (u64, Vec<f64>) {
    if d == 0 || x <= 0.0 {
        let mut v = vec![1.0];
        if full {
            v.resize(d as usize + 1, 0.0);
        }
        return (0, v);
    }
    if x >= 1.0 {
        if full {
            let mut v = vec![0.0; d as usize + 1];
            v[d as usize] = 1.0;
            return (0, v);
        }
        return (d, vec![1.0]);
    }
    let df = d as f64;
    let mode = (((df + 1.0) * x).floor() as u64).min(d);
    let mf = mode as f64;
    let log_mode = libm::lgamma(df + 1.0) - libm::lgamma(mf + 1.0) - libm::lgamma(df - mf + 1.0)
        + mf * x.ln()
        + (df - mf) * (-x).ln_1p();
    let p_mode = log_mode.exp();
    let odds = x / (1.0 - x);
    let cut = if full { 0.0 } else { 1e-17 * p_mode };

    let mut up = Vec::new();
    let mut p = p_mode;
    let mut i = mode;
    while i < d {
        p *= (df - i as f64) / (i as f64 + 1.0) * odds;
        i += 1;
        if !full && p < cut {
            break;
        }
        up.push(p);
    }
    let mut down = Vec::new();
    let mut p = p_mode;
    let mut i = mode;
    while i > 0 {
        p *= i as f64 / (df - i as f64 + 1.0) / odds;
        i -= 1;
        if !full && p < cut {
            break;
        }
        down.push(p);
    }
    let start = mode - down.len() as u64;
    let mut w: Vec<f64> = down.into_iter().rev().collect();
    w.push(p_mode);
    w.extend(up);
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    (start, w)
}

/// `(p_{0,d}(x), …, p_{d,d}(x))`.
pub fn bernstein_weights(d: u32, x: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&x) {
        return Err(NisimError::OutOfBox { value: x });
    }
    Ok(binomial_window(d as u64, x, true).1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    UnitBox,
    /// The bounding box of `B(center, radius)`; inputs outside the ball are first
    /// projected onto it.
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

/// Bernstein polynomial `BP_{f,d_1,…,d_ℓ}` stored as its value tensor (row-major,
/// last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct BernsteinApprox {
    degrees: Vec<u32>,
    values: Vec<f64>,
    domain: Domain,
}

fn tensor_len(degrees: &[u32]) -> Result<usize> {
    degrees.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d as usize + 1)
            .filter(|&n| n <= 200_000_000)
            .ok_or_else(|| NisimError::invalid("Bernstein value tensor too large"))
    })
}

/// Euclidean projection onto the closed ball `B(center, r)`.
pub fn proj_ball(z: &[f64], center: &[f64], r: f64) -> Vec<f64> {
    let dist = z.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
    if dist <= r {
        return z.to_vec();
    }
    z.iter().zip(center).map(|(a, c)| c + r * (a - c) / dist).collect()
}

/// Samples `f` on the grid `(i_1/d_1, …, i_ℓ/d_ℓ)` of the unit box.
pub fn bp_fit<F: Fn(&[f64]) -> f64>(f: F, degrees: &[u32]) -> Result<BernsteinApprox> {
    if degrees.is_empty() || degrees.contains(&0) {
        return Err(NisimError::invalid("Bernstein degrees must be at least 1"));
    }
    let values = sample_grid(degrees, tensor_len(degrees)?, |u| f(u));
    Ok(BernsteinApprox {
        degrees: degrees.to_vec(),
        values,
        domain: Domain::UnitBox,
    })
}

fn sample_grid<F: FnMut(&[f64]) -> f64>(degrees: &[u32], len: usize, mut f: F) -> Vec<f64> {
    let l = degrees.len();
    let mut idx = vec![0u32; l];
    let mut u = vec![0.0; l];
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        for j in 0..l {
            u[j] = idx[j] as f64 / degrees[j] as f64;
        }
        values.push(f(&u));
        for j in (0..l).rev() {
            idx[j] += 1;
            if idx[j] <= degrees[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    values
}

/// Evaluates `BP` at `x`; `x` must lie in the unit box for a `UnitBox` domain.
pub fn bp_eval(a: &BernsteinApprox, x: &[f64]) -> Result<f64> {
    a.eval(x)
}

/// Bernstein approximant of `f` on `B(center, r)` with sup error at most `η` for a
/// 1-Lipschitz `f`: per-variable degree `⌈ℓ·4r²/η²⌉` on the bounding box, with `f`
/// extended by `f ∘ Proj_B`.
pub fn bp_on_ball<F: Fn(&[f64]) -> f64>(f: F, center: &[f64], r: f64, eta: f64) -> Result<BernsteinApprox> {
    if !(eta > 0.0) || !(r > 0.0) {
        return Err(NisimError::invalid("radius and eta must be positive"));
    }
    let l = center.len();
    let d = ball_degree(l, r, eta);
    if d > u32::MAX as f64 {
        return Err(NisimError::invalid("Bernstein degree overflows"));
    }
    let degrees = vec![d as u32; l];
    let len = tensor_len(&degrees)?;
    let values = sample_grid(&degrees, len, |u| {
        let z: Vec<f64> = u.iter().zip(center).map(|(ui, c)| c - r + 2.0 * r * ui).collect();
        f(&proj_ball(&z, center, r))
    });
    Ok(BernsteinApprox {
        degrees,
        values,
        domain: Domain::Ball {
            center: center.to_vec(),
            radius: r,
        },
    })
}

/// `⌈ℓ·4r²/η²⌉`.
pub fn ball_degree(l: usize, r: f64, eta: f64) -> f64 {
    (l as f64 * 4.0 * r * r / (eta * eta)).ceil().max(1.0)
}

#[derive(Serialize, Deserialize)]
struct ApproxFile {
    degrees: Vec<u32>,
    domain: Domain,
    values_ref: String,
}

impl BernsteinApprox {
    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn to_unit(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.degrees.len() {
            return Err(NisimError::DimMismatch(format!(
                "point has {} coordinates, approximant {}",
                x.len(),
                self.degrees.len()
            )));
        }
        match &self.domain {
            Domain::UnitBox => {
                if let Some(&v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(NisimError::OutOfBox { value: v });
                }
                Ok(x.to_vec())
            }
            Domain::Ball { center, radius } => {
                let z = proj_ball(x, center, *radius);
                Ok(z.iter()
                    .zip(center)
                    .map(|(zi, c)| ((zi - c + radius) / (2.0 * radius)).clamp(0.0, 1.0))
                    .collect())
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let u = self.to_unit(x)?;
        let l = self.degrees.len();
        let windows: Vec<(u64, Vec<f64>)> = self
            .degrees
            .iter()
            .zip(&u)
            .map(|(&d, &ui)| binomial_window(d as u64, ui, false))
            .collect();
        let mut strides = vec![1usize; l];
        for j in (0..l.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * (self.degrees[j + 1] as usize + 1);
        }
        let mut idx = vec![0usize; l];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            let mut off = 0;
            for j in 0..l {
                w *= windows[j].1[idx[j]];
                off += (windows[j].0 as usize + idx[j]) * strides[j];
            }
            total += w * self.values[off];
            let mut j = l;
            loop {
                if j == 0 {
                    return Ok(total);
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < windows[j].1.len() {
                    break;
                }
                idx[j] = 0;
            }
        }
    }

    /// Writes `{"degrees", "domain", "values_ref"}` to `path` and the value tensor as
    /// little-endian `f64` to the sidecar `values_ref`, next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let sidecar = path.with_extension("values.bin");
        let name = sidecar
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| NisimError::invalid("bad output path"))?
            .to_string();
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&sidecar, bytes)?;
        let file = ApproxFile {
            degrees: self.degrees.clone(),
            domain: self.domain.clone(),
            values_ref: name,
        };
        fs::write(path, crate::json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ApproxFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        let sidecar = path.with_file_name(&file.values_ref);
        let bytes = fs::read(sidecar)?;
        let len = tensor_len(&file.degrees)?;
        if bytes.len() != len * 8 {
            return Err(NisimError::DimMismatch(format!(
                "value file holds {} bytes, expected {}",
                bytes.len(),
                len * 8
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(BernsteinApprox {
            degrees: file.degrees,
            values,
            domain: file.domain,
        })
    }
}

/// Bernstein approximation, of equal degree `degree` in each of `k` variables, of
/// `Proj_{Δ_k}` on the box `[lo, hi]`.
///
/// The value tensor is never materialised. `Proj` is affine on each region where
/// its support is constant, so the weighted sum over a sub-box whose corners share
/// a support equals the box's mass times `Proj` at the weighted mean. Boxes that
/// straddle a kink are refined, largest error bound first, until the bound
/// `Σ mass·diameter` over unresolved boxes is at most `tol`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjBernstein {
    pub k: usize,
    pub degree: u64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub tol: f64,
}

struct Axis {
    start: u64,
    // Prefix sums of the weights and of index-times-weight.
    mass: Vec<f64>,
    first: Vec<f64>,
}

#[derive(Clone)]
struct Cell {
    lo: [u32; MAX_K],
    hi: [u32; MAX_K],
    mass: f64,
    err: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

const MAX_K: usize = 8;

impl ProjBernstein {
    pub fn new(k: usize, degree: u64, lo: Vec<f64>, hi: Vec<f64>, tol: f64) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(NisimError::invalid(format!("k must lie in 1..={MAX_K}")));
        }
        if lo.len() != k || hi.len() != k || lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return Err(NisimError::invalid("box bounds must satisfy lo < hi"));
        }
        if degree == 0 || degree > u32::MAX as u64 {
            return Err(NisimError::invalid("degree must lie in 1..=u32::MAX"));
        }
        Ok(ProjBernstein { k, degree, lo, hi, tol })
    }

    #[inline]
    fn grid(&self, s: usize, i: f64) -> f64 {
        self.lo[s] + (self.hi[s] - self.lo[s]) * i / self.degree as f64
    }

    /// `BP(z)`; coordinates outside the box are clamped to it.
    pub fn eval_into(&self, z: &[f64], out: &mut [f64]) {
        let k = self.k;
        let axes: Vec<Axis> = (0..k)
            .map(|s| {
                let u = ((z[s] - self.lo[s]) / (self.hi[s] - self.lo[s])).clamp(0.0, 1.0);
                let (start, w) = binomial_window(self.degree, u, false);
                let mut mass = Vec::with_capacity(w.len() + 1);
                let mut first = Vec::with_capacity(w.len() + 1);
                let (mut a, mut b) = (0.0, 0.0);
                mass.push(0.0);
                first.push(0.0);
                for (i, wi) in w.iter().enumerate() {
                    a += wi;
                    b += wi * i as f64;
                    mass.push(a);
                    first.push(b);
                }
                Axis { start, mass, first }
            })
            .collect();

        out.iter_mut().for_each(|o| *o = 0.0);
        let mut heap = BinaryHeap::new();
        let mut pending = 0.0;
        let mut root = Cell {
            lo: [0; MAX_K],
            hi: [0; MAX_K],
            mass: 0.0,
            err: 0.0,
        };
        for s in 0..k {
            root.hi[s] = (axes[s].mass.len() - 1) as u32;
        }
        let mut scratch = vec![0.0; k];
        if let Some(c) = self.classify(&axes, root, out, &mut scratch) {
            pending += c.err;
            heap.push(c);
        }
        while pending > self.tol {
            let Some(c) = heap.pop() else { break };
            pending -= c.err;
            let s = (0..k).max_by_key(|&s| c.hi[s] - c.lo[s]).unwrap();
            let mid = (c.lo[s] + c.hi[s]) / 2;
            let mut left = c.clone();
            left.hi[s] = mid;
            let mut right = c;
            right.lo[s] = mid;
            for child in [left, right] {
                if let Some(c) = self.classify(&axes, child, out, &mut scratch) {
                    pending += c.err;
                    heap.push(c);
                }
            }
        }
        for c in heap {
            self.add_at_mean(&axes, &c, out, &mut scratch);
        }
    }

    fn mean_point(&self, axes: &[Axis], c: &Cell, z: &mut [f64]) -> f64 {
        let mut mass = 1.0;
        for (s, ax) in axes.iter().enumerate() {
            let (a, b) = (c.lo[s] as usize, c.hi[s] as usize);
            let m = ax.mass[b] - ax.mass[a];
            mass *= m;
            let mean_idx = if m > 0.0 {
                (ax.first[b] - ax.first[a]) / m
            } else {
                0.5 * (a + b - 1) as f64
            };
            z[s] = self.grid(s, ax.start as f64 + mean_idx);
        }
        mass
    }

    fn add_at_mean(&self, axes: &[Axis], c: &Cell, out: &mut [f64], z: &mut [f64]) {
        let mass = self.mean_point(axes, c, z);
        let mut p = [0.0; MAX_K];
        proj_simplex_into(z, &mut p[..self.k]);
        for (o, v) in out.iter_mut().zip(&p[..self.k]) {
            *o += mass * v;
        }
    }

    /// Adds the cell's contribution if it is exact; otherwise returns it with its
    /// error bound for refinement.
    fn classify(&self, axes: &[Axis], mut c: Cell, out: &mut [f64], z: &mut [f64]) -> Option<Cell> {
        let k = self.k;
        let mut mass = 1.0;
        for (s, ax) in axes.iter().enumerate() {
            mass *= ax.mass[c.hi[s] as usize] - ax.mass[c.lo[s] as usize];
        }
        if mass <= 1e-300 {
            return None;
        }
        let single = (0..k).all(|s| c.hi[s] - c.lo[s] == 1);
        let mut affine = true;
        let mut diam_sq = 0.0;
        if !single {
            let mut corner = [0.0; MAX_K];
            let mut support = None;
            for bits in 0..(1u32 << k) {
                for s in 0..k {
                    let i = if bits >> s & 1 == 0 { c.lo[s] } else { c.hi[s] - 1 };
                    corner[s] = self.grid(s, (axes[s].start + i as u64) as f64);
                }
                let m = proj_support(&corner[..k]);
                match support {
                    None => support = Some(m),
                    Some(prev) if prev != m => {
                        affine = false;
                        break;
                    }
                    _ => {}
                }
            }
            for s in 0..k {
                let w = self.grid(s, (c.hi[s] - 1 - c.lo[s]) as f64) - self.lo[s];
                diam_sq += w * w;
            }
        }
        if single || affine {
            self.add_at_mean(axes, &c, out, z);
            return None;
        }
        c.mass = mass;
        c.err = mass * diam_sq.sqrt();
        Some(c)
    }
}

/// Composition `p′ = BP_Proj ∘ (p_1, …, p_k)` kept in factored form.
///
/// Inner values outside `B(center, radius)` are projected onto the ball before the
/// outer polynomial is evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothPoly {
    pub inner: HermiteExpansion,
    pub outer: ProjBernstein,
    pub center: Vec<f64>,
    pub radius: f64,
    /// `(E, Var)` of each output coordinate.
    pub moments: Vec<(f64, f64)>,
    pub composed_degree: u64,
}

impl SmoothPoly {
    pub fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }

    pub fn dim_out(&self) -> usize {
        self.inner.dim_out()
    }

    pub fn moments(&self) -> &[(f64, f64)] {
        &self.moments
    }

    pub fn composed_degree(&self) -> u64 {
        self.composed_degree
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let z = self.inner.eval(x);
        let z = proj_ball(&z, &self.center, self.radius);
        self.outer.eval_into(&z, out);
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out()];
        self.eval_into(x, &mut out);
        out
    }
}

/// Parameters and diagnostics of [`smooth_poly`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothPolyInfo {
    pub inner_degree: u32,
    /// `σ_sm = k⁴/δ²`.
    pub sigma_sm: f64,
    /// `ln^{d/2}(2dk/δ)·σ_sm`.
    pub radius_nominal: f64,
    pub radius_used: f64,
    /// `k·4r²·16/δ²` at the nominal radius.
    pub degree_nominal: f64,
    pub degree_used: u64,
    /// `d·k·degree_nominal`.
    pub composed_degree_nominal: f64,
    pub composed_degree_used: u64,
    pub degree_cap: u64,
    /// Set when the nominal composed degree exceeded the cap.
    pub degree_blowup: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct SmoothPolyConfig {
    /// Cap on the composed degree `d·k·D`; the per-variable degree `D` is also
    /// capped by it.
    pub degree_cap: u64,
    /// Absolute error allowed in evaluating the outer polynomial.
    pub eval_tol: f64,
    /// Monte-Carlo sample count for moments when `n > 6`.
    pub moment_samples: usize,
    pub seed: u64,
    pub stream: u64,
}

impl Default for SmoothPolyConfig {
    fn default() -> Self {
        SmoothPolyConfig {
            degree_cap: 1_000_000,
            eval_tol: 1e-5,
            moment_samples: 100_000,
            seed: 0,
            stream: rng::streams::CHECKS,
        }
    }
}

/// Replaces `Proj` in a projected polynomial by a Bernstein polynomial on the ball
/// of radius `r_sm` about the inner means, giving a pure (factored) polynomial.
pub fn smooth_poly(f_sm: &VectorFunction, delta: f64, cfg: &SmoothPolyConfig) -> Result<(SmoothPoly, SmoothPolyInfo)> {
    let Form::ProjectedPoly(inner) = f_sm.form() else {
        return Err(NisimError::invalid("smooth_poly needs a projected polynomial"));
    };
    if !(delta > 0.0 && delta < 1.0) {
        return Err(NisimError::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let inner = (**inner).clone();
    let k = inner.dim_out();
    let kf = k as f64;
    let d = inner.degree();
    let sigma_sm = kf.powi(4) / (delta * delta);
    let comps: Vec<_> = (0..k).map(|s| inner.component(s)).collect();
    for p in &comps {
        let v = p.variance();
        if v > sigma_sm * sigma_sm {
            return Err(NisimError::PreconditionViolated {
                what: "variance of an inner polynomial".into(),
                measured: v,
                bound: sigma_sm * sigma_sm,
            });
        }
    }
    let center: Vec<f64> = comps.iter().map(|p| p.mean()).collect();
    let df = d.max(1) as f64;
    let log_term = (2.0 * df * kf / delta).ln();
    let radius_nominal = log_term.powf(0.5 * d as f64) * sigma_sm;
    let degree_nominal = 64.0 * kf * radius_nominal * radius_nominal / (delta * delta);
    let composed_nominal = d as f64 * kf * degree_nominal;
    let cap = cfg.degree_cap.max(1);
    let per_var_cap = if d == 0 {
        cap
    } else {
        (cap / (d as u64 * k as u64)).max(1)
    };
    let (degree_used, radius_used, blowup) = if degree_nominal.ceil() <= per_var_cap as f64 {
        (degree_nominal.ceil().max(1.0) as u64, radius_nominal, false)
    } else {
        let dd = per_var_cap;
        // Largest radius the capped degree supports at the same accuracy.
        let r = delta * (dd as f64 / (64.0 * kf)).sqrt();
        (dd, r, composed_nominal > cap as f64 || d == 0)
    };
    if blowup {
        log::warn!(
            "DEGREE_BLOWUP: composed degree {composed_nominal:.3e} exceeds cap {cap}; \
             using per-variable degree {degree_used} on radius {radius_used:.4}"
        );
    }
    let lo: Vec<f64> = center.iter().map(|c| c - radius_used).collect();
    let hi: Vec<f64> = center.iter().map(|c| c + radius_used).collect();
    let outer = ProjBernstein::new(k, degree_used, lo, hi, cfg.eval_tol)?;
    let composed_degree = (d as u64).saturating_mul(k as u64).saturating_mul(degree_used);
    let mut poly = SmoothPoly {
        inner,
        outer,
        center,
        radius: radius_used,
        moments: Vec::new(),
        composed_degree,
    };
    poly.moments = estimate_moments(&poly, cfg)?;
    let info = SmoothPolyInfo {
        inner_degree: d,
        sigma_sm,
        radius_nominal,
        radius_used,
        degree_nominal,
        degree_used,
        composed_degree_nominal: composed_nominal,
        composed_degree_used: composed_degree,
        degree_cap: cap,
        degree_blowup: blowup,
    };
    Ok((poly, info))
}

fn estimate_moments(p: &SmoothPoly, cfg: &SmoothPolyConfig) -> Result<Vec<(f64, f64)>> {
    let n = p.dim_in();
    let k = p.dim_out();
    let design = if n <= crate::gaussian::quadrature::MAX_QUADRATURE_DIM {
        Design::quadrature(n, 2)?
    } else {
        Design::monte_carlo(n, cfg.moment_samples, cfg.seed, cfg.stream)?
    };
    let mut s1 = vec![0.0; k];
    let mut s2 = vec![0.0; k];
    let mut v = vec![0.0; k];
    for i in 0..design.len() {
        p.eval_into(design.point(i), &mut v);
        let w = design.weight(i);
        for s in 0..k {
            s1[s] += w * v[s];
            s2[s] += w * v[s] * v[s];
        }
    }
    Ok((0..k).map(|s| (s1[s], (s2[s] - s1[s] * s1[s]).max(0.0))).collect())
}

/// Sampled `Pr[‖a(x) − b(x)‖_∞ > thr]` with its standard error.
pub fn linf_exceedance(
    a: &VectorFunction,
    b: &VectorFunction,
    thr: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(NisimError::InvalidSamples(samples, 2));
    }
    let mut r = rng::stream_rng(seed, rng::streams::CHECKS);
    let mut x = vec![0.0; a.dim_in()];
    let mut va = vec![0.0; a.dim_out()];
    let mut vb = vec![0.0; b.dim_out()];
    let mut hits = 0usize;
    for _ in 0..samples {
        rng::fill_normal(&mut r, &mut x);
        a.eval_into(&x, &mut va);
        b.eval_into(&x, &mut vb);
        let m = va.iter().zip(&vb).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        if m > thr {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok((p, (p * (1.0 - p) / samples as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::MultiIndex;

    fn binom_pmf(d: u32, k: u32, x: f64) -> f64 {
        let mut c = 1.0;
        for i in 0..k {
            c *= (d - i) as f64 / (i + 1) as f64;
        }
        c * x.powi(k as i32) * (1.0 - x).powi((d - k) as i32)
    }

    #[test]
    fn weights_examples() {
        assert_eq!(bernstein_weights(1, 0.25).unwrap(), vec![0.75, 0.25]);
        assert_eq!(bernstein_weights(4, 0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let w = bernstein_weights(2, 0.5).unwrap();
        for (a, b) in w.iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
        let w = bernstein_weights(30, 0.37).unwrap();
        for (k, v) in w.iter().enumerate() {
            assert!((v - binom_pmf(30, k as u32, 0.37)).abs() < 1e-14);
        }
        assert!(matches!(bernstein_weights(3, 1.2), Err(NisimError::OutOfBox { .. })));
    }

    #[test]
    fn reproduces_affine() {
        let a = bp_fit(|u| u[0], &[7]).unwrap();
        for x in [0.0, 0.13, 0.5, 0.99, 1.0] {
            assert!((a.eval(&[x]).unwrap() - x).abs() < 1e-12);
        }
        let b = bp_fit(|u| u[0] + u[1], &[3, 5]).unwrap();
        for (x, y) in [(0.2, 0.7), (0.9, 0.1), (1.0, 0.0)] {
            assert!((b.eval(&[x, y]).unwrap() - (x + y)).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_degree_formula() {
        assert_eq!(ball_degree(1, 1.0, 0.5), 16.0);
        let c = bp_on_ball(|_| 2.5, &[0.3], 1.0, 0.5).unwrap();
        assert_eq!(c.degrees(), &[16]);
        assert!((c.eval(&[0.9]).unwrap() - 2.5).abs() < 1e-13);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = std::env::temp_dir().join(format!("bp-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let a = bp_on_ball(|z| z[0] * z[1], &[0.0, 1.0], 2.0, 1.0).unwrap();
        let path = dir.join("approx.json");
        a.save(&path).unwrap();
        assert_eq!(BernsteinApprox::load(&path).unwrap(), a);
        fs::remove_dir_all(dir).ok();
    }

    fn brute_proj_bp(pb: &ProjBernstein, z: &[f64]) -> Vec<f64> {
        let k = pb.k;
        let ws: Vec<Vec<f64>> = (0..k)
            .map(|s| {
                let u = ((z[s] - pb.lo[s]) / (pb.hi[s] - pb.lo[s])).clamp(0.0, 1.0);
                bernstein_weights(pb.degree as u32, u).unwrap()
            })
            .collect();
        let d = pb.degree as usize;
        let mut out = vec![0.0; k];
        let mut idx = vec![0usize; k];
        let mut g = vec![0.0; k];
        let mut p = vec![0.0; k];
        loop {
            let mut w = 1.0;
            for s in 0..k {
                w *= ws[s][idx[s]];
                g[s] = pb.grid(s, idx[s] as f64);
            }
            proj_simplex_into(&g, &mut p);
            for s in 0..k {
                out[s] += w * p[s];
            }
            let mut s = k;
            loop {
                if s == 0 {
                    return out;
                }
                s -= 1;
                idx[s] += 1;
                if idx[s] <= d {
                    break;
                }
                idx[s] = 0;
            }
        }
    }

    #[test]
    fn proj_bernstein_matches_direct_sum() {
        for k in [2usize, 3] {
            let pb = ProjBernstein::new(k, 40, vec![-1.5; k], vec![2.0; k], 1e-13).unwrap();
            for z in [[0.1, 0.7, 0.3], [1.2, -0.4, 0.5], [-3.0, 0.0, 5.0], [0.33, 0.33, 0.34]] {
                let fast = {
                    let mut o = vec![0.0; k];
                    pb.eval_into(&z[..k], &mut o);
                    o
                };
                let slow = brute_proj_bp(&pb, &z[..k]);
                for s in 0..k {
                    assert!((fast[s] - slow[s]).abs() < 1e-11, "k={k} z={z:?} {fast:?} {slow:?}");
                }
            }
        }
    }

    #[test]
    fn smooth_poly_of_constant() {
        let e = HermiteExpansion::constant(1, vec![0.7, 0.3]);
        let f = VectorFunction::projected(e);
        let (p, info) = smooth_poly(&f, 0.1, &SmoothPolyConfig::default()).unwrap();
        assert_eq!(info.inner_degree, 0);
        let v = p.eval(&[0.4]);
        assert!(
            (v[0] - 0.7).abs() < 0.1 / 4.0 && (v[1] - 0.3).abs() < 0.1 / 4.0,
            "{v:?}"
        );
    }

    #[test]
    fn smooth_poly_tail_small() {
        let e = HermiteExpansion::new(
            1,
            2,
            1,
            [
                (MultiIndex::zero(), vec![0.5, 0.5]),
                (MultiIndex::unit(0), vec![0.8, -0.8]),
            ],
        )
        .unwrap();
        let f = VectorFunction::projected(e);
        let delta = 0.2;
        let (p, info) = smooth_poly(&f, delta, &SmoothPolyConfig::default()).unwrap();
        assert!(info.degree_blowup);
        let g = VectorFunction::factored(std::sync::Arc::new(p));
        let (rate, _) = linf_exceedance(&f, &g, delta / 4.0, 100_000, 3).unwrap();
        assert!(rate <= delta / 2.0, "rate {rate}");
    }
}
