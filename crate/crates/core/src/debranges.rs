//! Hermite–Biehler functions `E = A + iB`, the de Branges kernel in the
//! integrable form `(A(x)B(y) - B(x)A(y))/(x - y)`, and verifiers for the
//! factorization `K(x,y) = Φ(x) K_E(x,y) Φ(y)` and for its gauge freedom.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::poly;
use crate::specfun::{self, complex_step_derivative, default_step, SeriesParams, SpecfunError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DebrangesError {
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
    #[error("sample {re}+{im}i is not in the open upper half plane")]
    NotUpperHalfPlane { re: f64, im: f64 },
    #[error("multiplier vanishes or is undefined at x = {0}")]
    Multiplier(f64),
    #[error("kernel evaluation failed at ({x}, {y}): {reason}")]
    Kernel { x: f64, y: f64, reason: String },
    #[error("every candidate pair has a vanishing denominator")]
    NoUsablePair,
    #[error("all gauge probes degenerate at y = {0}")]
    GaugeDegenerate(f64),
    #[error("empty grid")]
    EmptyGrid,
}

pub type Result<T> = std::result::Result<T, DebrangesError>;

type Evaluator = dyn Fn(Complex64) -> Result<Complex64> + Send + Sync;

/// How a [`RealEntireFunction`] was built.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntireDescriptor {
    ClosedForm {
        name: String,
        params: BTreeMap<String, f64>,
    },
    /// Real coefficients, lowest degree first.
    Polynomial { coeffs: Vec<f64> },
    /// Polynomial given by its values at real nodes.
    Interpolated { nodes: Vec<f64>, values: Vec<f64> },
}

/// An entire function real on the real axis, evaluable at complex points.
#[derive(Clone)]
pub struct RealEntireFunction {
    descriptor: EntireDescriptor,
    eval: Arc<Evaluator>,
}

impl fmt::Debug for RealEntireFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RealEntireFunction")
            .field("descriptor", &self.descriptor)
            .finish()
    }
}

impl RealEntireFunction {
    pub fn closed_form<F>(name: &str, params: &[(&str, f64)], f: F) -> Self
    where
        F: Fn(Complex64) -> Result<Complex64> + Send + Sync + 'static,
    {
        Self {
            descriptor: EntireDescriptor::ClosedForm {
                name: name.to_owned(),
                params: params.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect(),
            },
            eval: Arc::new(f),
        }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let c = coeffs.clone();
        Self {
            descriptor: EntireDescriptor::Polynomial { coeffs },
            eval: Arc::new(move |z| Ok(poly::eval_real(&c, z))),
        }
    }

    /// Real polynomial through `(nodes[i], values[i])`, evaluated in
    /// barycentric form.
    pub fn interpolated(nodes: Vec<f64>, values: Vec<f64>) -> Self {
        let it = poly::Interpolant::new(
            nodes.clone(),
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        );
        Self {
            descriptor: EntireDescriptor::Interpolated { nodes, values },
            eval: Arc::new(move |z| Ok(it.eval(z))),
        }
    }

    /// `z ↦ scale·cos(b z)`
    pub fn cos(b: f64, scale: f64) -> Self {
        Self::closed_form("cos", &[("b", b), ("scale", scale)], move |z| {
            Ok((z * b).cos() * scale)
        })
    }

    /// `z ↦ scale·sin(b z)`
    pub fn sin(b: f64, scale: f64) -> Self {
        Self::closed_form("sin", &[("b", b), ("scale", scale)], move |z| {
            Ok((z * b).sin() * scale)
        })
    }

    /// `z ↦ e^{rate·z}`, a real zero-free entire function.
    pub fn exp(rate: f64) -> Self {
        Self::closed_form("exp", &[("rate", rate)], move |z| Ok((z * rate).exp()))
    }

    /// Pointwise product with another real entire function.
    pub fn times(&self, other: &RealEntireFunction) -> Self {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        let mut params = BTreeMap::new();
        params.insert("factors".to_owned(), 2.0);
        Self {
            descriptor: EntireDescriptor::ClosedForm {
                name: "product".to_owned(),
                params,
            },
            eval: Arc::new(move |z| Ok(f(z)? * g(z)?)),
        }
    }

    pub fn descriptor(&self) -> &EntireDescriptor {
        &self.descriptor
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        specfun::check_finite(z)?;
        (self.eval)(z)
    }

    pub fn eval_real(&self, x: f64) -> Result<f64> {
        Ok(self.eval(Complex64::new(x, 0.0))?.re)
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        complex_step_derivative(|z| self.eval(z), x, default_step(x))
    }
}

/// `E = A + iB` with `A`, `B` real entire functions.
#[derive(Debug, Clone)]
pub struct HermiteBiehler {
    pub a: RealEntireFunction,
    pub b: RealEntireFunction,
}

impl HermiteBiehler {
    pub fn new(a: RealEntireFunction, b: RealEntireFunction) -> Self {
        Self { a, b }
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let i = Complex64::new(0.0, 1.0);
        Ok(self.a.eval(z)? + i * self.b.eval(z)?)
    }

    /// `e^{-ibz}` written as `(cos bz, -sin bz)`.
    pub fn exponential(b: f64) -> Self {
        Self::new(RealEntireFunction::cos(b, 1.0), RealEntireFunction::sin(b, -1.0))
    }

    /// Both components multiplied by the same real entire function.
    pub fn gauged(&self, w: &RealEntireFunction) -> Self {
        Self::new(self.a.times(w), self.b.times(w))
    }
}

/// Multiplier `Φ` on the evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Multiplier {
    Constant { value: f64 },
    /// `x^exponent` for `x > 0`.
    Power { exponent: f64 },
    /// Tabulated values, sorted by point.
    Values { points: Vec<f64>, values: Vec<f64> },
}

impl Multiplier {
    pub fn from_values(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (points, values) = pairs.into_iter().unzip();
        Multiplier::Values { points, values }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = match self {
            Multiplier::Constant { value } => *value,
            Multiplier::Power { exponent } => {
                if x <= 0.0 {
                    return Err(DebrangesError::Multiplier(x));
                }
                x.powf(*exponent)
            }
            Multiplier::Values { points, values } => {
                match points.binary_search_by(|p| p.total_cmp(&x)) {
                    Ok(i) => values[i],
                    Err(_) => return Err(DebrangesError::Multiplier(x)),
                }
            }
        };
        if v == 0.0 || !v.is_finite() {
            return Err(DebrangesError::Multiplier(x));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HbReport {
    /// `min |E(z)| - |E(z̄)|` over the samples.
    pub min_margin: f64,
    /// `min |E(Re z)|` over the real projections of the samples.
    pub min_real_modulus: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Default upper-half-plane probe set.
pub fn default_upper_samples() -> Vec<Complex64> {
    let mut out = Vec::new();
    for &re in &[-40.0, -10.0, -3.0, -1.0, -0.3, 0.0, 0.3, 1.0, 3.0, 10.0, 40.0] {
        for &im in &[0.05, 0.5, 2.0, 8.0] {
            out.push(Complex64::new(re, im));
        }
    }
    out
}

/// Checks `|E(z)| > |E(z̄)|` at every sample and that `E` has no zero at the
/// real projections of the samples.
pub fn hb_check(e: &HermiteBiehler, samples: &[Complex64]) -> Result<HbReport> {
    let mut min_margin = f64::INFINITY;
    let mut min_real = f64::INFINITY;
    for &z in samples {
        if !(z.im > 0.0) {
            return Err(DebrangesError::NotUpperHalfPlane { re: z.re, im: z.im });
        }
        let up = e.eval(z)?.norm();
        let down = e.eval(z.conj())?.norm();
        min_margin = min_margin.min(up - down);
        min_real = min_real.min(e.eval(Complex64::new(z.re, 0.0))?.norm());
    }
    Ok(HbReport {
        min_margin,
        min_real_modulus: min_real,
        samples: samples.len(),
        pass: !samples.is_empty() && min_margin > 0.0 && min_real > 0.0,
    })
}

/// Below this separation the kernel quotient is replaced by its limit.
pub fn diagonal_switch(x: f64, y: f64) -> f64 {
    1e-6 * x.abs().max(y.abs()).max(1.0)
}

/// `(A(x)B(y) - B(x)A(y))/(x - y)`, with the removable value
/// `A'(m)B(m) - B'(m)A(m)` at the midpoint `m` when `x ≈ y`.
pub fn db_kernel_eval(e: &HermiteBiehler, x: f64, y: f64) -> Result<f64> {
    if (x - y).abs() < diagonal_switch(x, y) {
        let m = 0.5 * (x + y);
        let (a, b) = (e.a.eval_real(m)?, e.b.eval_real(m)?);
        let (da, db) = (e.a.derivative(m)?, e.b.derivative(m)?);
        return Ok(da * b - db * a);
    }
    let (ax, bx) = (e.a.eval_real(x)?, e.b.eval_real(x)?);
    let (ay, by) = (e.a.eval_real(y)?, e.b.eval_real(y)?);
    Ok((ax * by - bx * ay) / (x - y))
}

/// Kernel formula with a complex second argument,
/// `(A(x)conj B(y) - B(x)conj A(y))/(x - conj y)`.
pub fn db_kernel_complex(e: &HermiteBiehler, x: Complex64, y: Complex64) -> Result<Complex64> {
    let (ax, bx) = (e.a.eval(x)?, e.b.eval(x)?);
    let (ay, by) = (e.a.eval(y)?, e.b.eval(y)?);
    Ok((ax * by.conj() - bx * ay.conj()) / (x - y.conj()))
}

/// `E(t) = π/√2 (t j_{s+1}(√t) + i j_s(√t))`.
pub fn bessel_hb(s: f64) -> Result<HermiteBiehler> {
    if !s.is_finite() || s <= -1.0 {
        return Err(SpecfunError::Domain {
            func: "bessel_hb",
            arg: s,
            reason: "order must satisfy s > -1",
        }
        .into());
    }
    let c = PI * FRAC_1_SQRT_2;
    let p = SeriesParams::default();
    let a = RealEntireFunction::closed_form("bessel_hb_a", &[("s", s)], move |t| {
        Ok(t * specfun::entire_bessel(s + 1.0, t, p)? * c)
    });
    let b = RealEntireFunction::closed_form("bessel_hb_b", &[("s", s)], move |t| {
        Ok(specfun::entire_bessel(s, t, p)? * c)
    });
    Ok(HermiteBiehler::new(a, b))
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    pub c: f64,
    pub max_relative_residual: f64,
    pub worst_pair: (f64, f64),
}

/// Relative floor for residual denominators: `1e-6·√|K(x,x)K(y,y)|`.
pub const RESIDUAL_FLOOR: f64 = 1e-6;

/// Compares `K(x,y)` with `c·Φ(x)K_E(x,y)Φ(y)` over all grid pairs.
///
/// The residual at a pair is `|K - cΦK_EΦ| / max(|K|, ε)` with
/// `ε = 1e-6·√|K(x,x)K(y,y)|`. With `fit_constant`, `c` is read off the first
/// off-diagonal pair whose model value is nonzero.
pub fn factorization_check<K>(
    kernel: K,
    phi: &Multiplier,
    e: &HermiteBiehler,
    grid: &[f64],
    fit_constant: bool,
) -> Result<FactorizationReport>
where
    K: Fn(f64, f64) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(DebrangesError::EmptyGrid);
    }
    let n = grid.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = (grid[i], grid[j]);
            let k = kernel(x, y)?;
            let model = phi.eval(x)? * db_kernel_eval(e, x, y)? * phi.eval(y)?;
            Ok((k, model))
        })
        .collect::<Result<_>>()?;

    let c = if fit_constant {
        pairs
            .iter()
            .zip(&values)
            .find(|((i, j), (_, m))| i != j && m.abs() > 1e-300)
            .map(|(_, (k, m))| k / m)
            .ok_or(DebrangesError::NoUsablePair)?
    } else {
        1.0
    };

    let mut diag = vec![0.0; n];
    for (&(i, j), &(k, _)) in pairs.iter().zip(&values) {
        if i == j {
            diag[i] = k.abs();
        }
    }
    let mut worst = 0.0;
    let mut worst_pair = (grid[0], grid[0]);
    for (&(i, j), &(k, m)) in pairs.iter().zip(&values) {
        let floor = RESIDUAL_FLOOR * (diag[i] * diag[j]).sqrt();
        let r = (k - c * m).abs() / k.abs().max(floor).max(f64::MIN_POSITIVE);
        if !(r <= worst) {
            worst = r;
            worst_pair = (grid[i], grid[j]);
        }
    }
    Ok(FactorizationReport {
        c,
        max_relative_residual: worst,
        worst_pair,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeReport {
    pub grid: Vec<f64>,
    /// Recovered `W(y)` on the grid, normalized positive at the anchor probe.
    pub w: Vec<f64>,
    pub constancy_residual: f64,
    pub zero_free: bool,
}

const GAUGE_PROBES: usize = 4;
const GAUGE_DEGENERATE: f64 = 1e-8;

/// Recovers `W` from `K_{E1}(x,y) = W(x) K_{E2}(x,y) W(y)` using four probe
/// abscissae per grid point and reports the spread of the estimates.
pub fn gauge_check(e1: &HermiteBiehler, e2: &HermiteBiehler, grid: &[f64]) -> Result<GaugeReport> {
    if grid.is_empty() {
        return Err(DebrangesError::EmptyGrid);
    }
    let n = grid.len();
    let probe_idx: Vec<usize> = if n <= GAUGE_PROBES {
        (0..n).collect()
    } else {
        let mut v: Vec<usize> = (0..GAUGE_PROBES)
            .map(|k| k * (n - 1) / (GAUGE_PROBES - 1))
            .collect();
        v.dedup();
        v
    };
    let k1 = |x: f64, y: f64| db_kernel_eval(e1, x, y);
    let k2 = |x: f64, y: f64| db_kernel_eval(e2, x, y);

    let diag2: Vec<f64> = grid.iter().map(|&x| k2(x, x)).collect::<Result<_>>()?;
    let diag1: Vec<f64> = grid.iter().map(|&x| k1(x, x)).collect::<Result<_>>()?;

    // anchor: probe with the largest diagonal, W(anchor) > 0
    let anchor = *probe_idx
        .iter()
        .max_by(|&&a, &&b| diag2[a].total_cmp(&diag2[b]))
        .expect("non-empty probes");
    let ra = diag1[anchor] / diag2[anchor];
    if !(ra > 0.0) {
        return Err(DebrangesError::GaugeDegenerate(grid[anchor]));
    }
    let wa = ra.sqrt();
    let mut probes = vec![(grid[anchor], anchor, wa)];
    for &p in &probe_idx {
        if p == anchor {
            continue;
        }
        let d = k2(grid[anchor], grid[p])?;
        if d.abs() < GAUGE_DEGENERATE * (diag2[anchor] * diag2[p]).sqrt() {
            continue;
        }
        let wp = k1(grid[anchor], grid[p])? / d / wa;
        probes.push((grid[p], p, wp));
    }

    let mut w = Vec::with_capacity(n);
    let mut residual: f64 = 0.0;
    for (j, &y) in grid.iter().enumerate() {
        let mut cands = Vec::with_capacity(probes.len());
        for &(x, p, wp) in &probes {
            let d = k2(x, y)?;
            if d.abs() < GAUGE_DEGENERATE * (diag2[p] * diag2[j]).sqrt() {
                continue;
            }
            cands.push(k1(x, y)? / d / wp);
        }
        if cands.is_empty() {
            return Err(DebrangesError::GaugeDegenerate(y));
        }
        let mean = cands.iter().sum::<f64>() / cands.len() as f64;
        let (lo, hi) = cands
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &c| (l.min(c), h.max(c)));
        let scale = mean.abs().max(f64::MIN_POSITIVE);
        let spread = (hi - lo) / scale;
        let r_yy = diag1[j] / diag2[j];
        let diag_gap = (mean * mean - r_yy).abs() / r_yy.abs().max(f64::MIN_POSITIVE);
        residual = residual.max(spread).max(diag_gap);
        w.push(mean);
    }
    let zero_free = w.iter().all(|v| v.abs() > 1e-10);
    Ok(GaugeReport {
        grid: grid.to_vec(),
        w,
        constancy_residual: residual,
        zero_free,
    })
}

/// JSON report shape shared by the verifiers.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub grid: Vec<f64>,
    pub residual: f64,
    pub pass: bool,
}
