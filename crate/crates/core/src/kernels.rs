//! Correlation-kernel families (continuous sine, discrete sine, Bessel and
//! kernels derived from a Hermite–Biehler function), kernel matrices on
//! finite grids, and the Paley–Wiener normality counterexample.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::debranges::{self, DebrangesError, HermiteBiehler, Multiplier};
use crate::linalg;
use crate::specfun::{self, complex_step_derivative, default_step, SeriesParams, SpecfunError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("parameter {name} = {value} outside {range}")]
    Parameter {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("evaluation point {0} outside the kernel domain")]
    Point(f64),
    #[error("grid points must be finite and distinct")]
    Grid,
    #[error("symmetric eigensolver failed")]
    Eigensolver,
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
    #[error(transparent)]
    Debranges(#[from] DebrangesError),
}

pub type Result<T> = std::result::Result<T, KernelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    ContinuousSine,
    DiscreteSine,
    Bessel,
    DebrangesDerived,
}

#[derive(Debug, Clone)]
pub enum KernelSpec {
    ContinuousSine {
        b: f64,
    },
    /// `wide_band` relaxes the band range from (0, π/2) to (0, π).
    DiscreteSine {
        b: f64,
        wide_band: bool,
    },
    Bessel {
        s: f64,
    },
    DebrangesDerived {
        e: HermiteBiehler,
        phi: Multiplier,
    },
}

fn check_discrete_band(b: f64, wide_band: bool) -> Result<()> {
    let (hi, range) = if wide_band {
        (PI, "(0, pi)")
    } else {
        (FRAC_PI_2, "(0, pi/2)")
    };
    if !(b > 0.0 && b < hi) {
        return Err(KernelError::Parameter {
            name: "b",
            value: b,
            range,
        });
    }
    Ok(())
}

fn check_order(s: f64) -> Result<()> {
    if !(s.is_finite() && s > -1.0) {
        return Err(KernelError::Parameter {
            name: "s",
            value: s,
            range: "(-1, inf)",
        });
    }
    Ok(())
}

impl KernelSpec {
    pub fn continuous_sine(b: f64) -> Result<Self> {
        let spec = KernelSpec::ContinuousSine { b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn discrete_sine(b: f64) -> Result<Self> {
        let spec = KernelSpec::DiscreteSine { b, wide_band: false };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bessel(s: f64) -> Result<Self> {
        let spec = KernelSpec::Bessel { s };
        spec.validate()?;
        Ok(spec)
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            KernelSpec::ContinuousSine { .. } => KernelFamily::ContinuousSine,
            KernelSpec::DiscreteSine { .. } => KernelFamily::DiscreteSine,
            KernelSpec::Bessel { .. } => KernelFamily::Bessel,
            KernelSpec::DebrangesDerived { .. } => KernelFamily::DebrangesDerived,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::ContinuousSine { b } => {
                if !(b.is_finite() && b > 0.0) {
                    return Err(KernelError::Parameter {
                        name: "b",
                        value: b,
                        range: "(0, inf)",
                    });
                }
                Ok(())
            }
            KernelSpec::DiscreteSine { b, wide_band } => check_discrete_band(b, wide_band),
            KernelSpec::Bessel { s } => check_order(s),
            KernelSpec::DebrangesDerived { .. } => Ok(()),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        match self {
            KernelSpec::ContinuousSine { b } => continuous_sine_eval(*b, x, y),
            KernelSpec::DiscreteSine { b, wide_band } => {
                check_discrete_band(*b, *wide_band)?;
                let m = lattice_point(x)?;
                let n = lattice_point(y)?;
                Ok(discrete_sine_unchecked(*b, m, n))
            }
            KernelSpec::Bessel { s } => bessel_eval(*s, x, y),
            KernelSpec::DebrangesDerived { e, phi } => {
                Ok(phi.eval(x)? * debranges::db_kernel_eval(e, x, y)? * phi.eval(y)?)
            }
        }
    }
}

fn lattice_point(x: f64) -> Result<i64> {
    if x.is_finite() && x.fract() == 0.0 && x.abs() < 9.0e15 {
        Ok(x as i64)
    } else {
        Err(KernelError::Point(x))
    }
}

fn discrete_sine_unchecked(b: f64, m: i64, n: i64) -> f64 {
    let d = m - n;
    if d == 0 {
        b / PI
    } else {
        let d = d as f64;
        (b * d).sin() / (PI * d)
    }
}

/// `sin(b(m-n))/(π(m-n))`, diagonal `b/π`, for `b ∈ (0, π/2)`.
pub fn discrete_sine_eval(b: f64, m: i64, n: i64) -> Result<f64> {
    check_discrete_band(b, false)?;
    Ok(discrete_sine_unchecked(b, m, n))
}

/// `sin(b(x-y))/(π(x-y))`, diagonal `b/π`.
pub fn continuous_sine_eval(b: f64, x: f64, y: f64) -> Result<f64> {
    if !(b.is_finite() && b > 0.0) {
        return Err(KernelError::Parameter {
            name: "b",
            value: b,
            range: "(0, inf)",
        });
    }
    let u = x - y;
    if u == 0.0 {
        Ok(b / PI)
    } else {
        Ok((b * u).sin() / (PI * u))
    }
}

// √z J_{s+1}(√z) = z^{s/2+1} j_{s+1}(√z), analytic off the negative axis
fn bessel_numer_a(s: f64, z: Complex64) -> specfun::Result<Complex64> {
    Ok(z.powf(0.5 * s + 1.0) * specfun::entire_bessel(s + 1.0, z, SeriesParams::default())?)
}

// J_s(√z) = z^{s/2} j_s(√z)
fn bessel_numer_b(s: f64, z: Complex64) -> specfun::Result<Complex64> {
    Ok(z.powf(0.5 * s) * specfun::entire_bessel(s, z, SeriesParams::default())?)
}

/// Bessel kernel
/// `(√x J_{s+1}(√x) J_s(√y) - √y J_{s+1}(√y) J_s(√x)) / (2(x-y))`.
///
/// Within `1e-6·max(1,|x|)` of the diagonal the removable value is taken at
/// the midpoint from complex-step derivatives of the numerator factors.
pub fn bessel_eval(s: f64, x: f64, y: f64) -> Result<f64> {
    check_order(s)?;
    for p in [x, y] {
        if !(p.is_finite() && p > 0.0) {
            return Err(KernelError::Point(p));
        }
    }
    if (x - y).abs() < debranges::diagonal_switch(x, y) {
        let m = 0.5 * (x + y);
        let h = default_step(m);
        let a = bessel_numer_a(s, Complex64::new(m, 0.0))?.re;
        let b = bessel_numer_b(s, Complex64::new(m, 0.0))?.re;
        let da = complex_step_derivative(|z| bessel_numer_a(s, z), m, h)?;
        let db = complex_step_derivative(|z| bessel_numer_b(s, z), m, h)?;
        return Ok(0.5 * (da * b - a * db));
    }
    let (rx, ry) = (x.sqrt(), y.sqrt());
    let ax = rx * specfun::bessel_j(s + 1.0, rx)?;
    let ay = ry * specfun::bessel_j(s + 1.0, ry)?;
    let bx = specfun::bessel_j(s, rx)?;
    let by = specfun::bessel_j(s, ry)?;
    Ok((ax * by - ay * bx) / (2.0 * (x - y)))
}

/// Symmetric matrix of kernel values on an ordered point set.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub points: Vec<f64>,
    pub entries: DMatrix<f64>,
    pub family: Option<KernelFamily>,
}

impl KernelMatrix {
    /// Wraps a matrix, mirroring the upper triangle so the result is exactly
    /// symmetric. Rejects inputs asymmetric beyond `1e-14` relative.
    pub fn from_matrix(points: Vec<f64>, entries: DMatrix<f64>) -> Result<Self> {
        let n = points.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(KernelError::Grid);
        }
        let scale = entries.amax().max(f64::MIN_POSITIVE);
        let mut m = entries;
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-14 * scale {
                    return Err(KernelError::Grid);
                }
                m[(j, i)] = m[(i, j)];
            }
        }
        Ok(Self {
            points,
            entries: m,
            family: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// `x,y,K` rows for every ordered pair, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,K\n");
        for (i, x) in self.points.iter().enumerate() {
            for (j, y) in self.points.iter().enumerate() {
                let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", x, y, self.entries[(i, j)]);
            }
        }
        out
    }
}

fn check_grid(points: &[f64]) -> Result<()> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(KernelError::Grid);
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(KernelError::Grid);
    }
    Ok(())
}

/// Kernel values on all pairs of `points`.
pub fn kernel_grid(spec: &KernelSpec, points: &[f64]) -> Result<KernelMatrix> {
    spec.validate()?;
    check_grid(points)?;
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| spec.eval(points[i], points[j]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            let j = i + k;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(KernelMatrix {
        points: points.to_vec(),
        entries: m,
        family: Some(spec.family()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub spectral_radius: f64,
    /// Whether the contraction bound `λ_max ≤ 1 + 1e-10` was also enforced.
    pub contraction_checked: bool,
    pub pass: bool,
}

/// Smallest eigenvalue against `-1e-10·ρ`; discrete sine matrices must also
/// be contractions.
pub fn psd_check(k: &KernelMatrix) -> Result<PsdReport> {
    if k.is_empty() {
        return Err(KernelError::Grid);
    }
    let (vals, _) = linalg::sym_eigen_sorted(&k.entries).ok_or(KernelError::Eigensolver)?;
    let min = vals[0];
    let max = vals[vals.len() - 1];
    let rho = min.abs().max(max.abs());
    let contraction_checked = k.family == Some(KernelFamily::DiscreteSine);
    let mut pass = min >= -1e-10 * rho;
    if contraction_checked {
        pass &= max <= 1.0 + 1e-10;
    }
    Ok(PsdReport {
        min_eigenvalue: min,
        max_eigenvalue: max,
        spectral_radius: rho,
        contraction_checked,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalityWitness {
    pub n: u32,
    /// `max_x |e_n(x)|·(n-1)/|e_0(x)|` over a grid of [-1, 1].
    pub pointwise_ratio_bound: f64,
    /// `‖(n-1)e_n‖ / ‖e_0‖` in L²(ℝ).
    pub norm_ratio: f64,
}

const NORM_HALF_WIDTH: i64 = 1_000_000; // R = 1e4 at step 1e-2
const NORM_STEP: f64 = 1e-2;
const POINTWISE_STEPS: i64 = 20_000;

// sin(πx)/(x - shift) at x = k·h, with the removable value at x = shift
fn shifted_sinc(k: i64, shift: i64, h: f64) -> f64 {
    let x = k as f64 * h;
    let d = k - (shift as f64 / h).round() as i64;
    if d == 0 {
        PI * (PI * x).cos()
    } else {
        (PI * x).sin() / (d as f64 * h)
    }
}

/// Compares `e_n = sin(πx)/(x-n)` with `e_0` on [-1,1] pointwise and in the
/// Paley–Wiener norm. Norms use the trapezoid rule on [-10⁴, 10⁴], step
/// 10⁻², which is exact up to the truncated tails because the squared
/// integrands are band-limited.
pub fn normality_witness(n: u32) -> Result<NormalityWitness> {
    if n < 2 {
        return Err(KernelError::Parameter {
            name: "n",
            value: n as f64,
            range: "[2, inf)",
        });
    }
    let h = 2.0 / POINTWISE_STEPS as f64;
    let mut bound: f64 = 0.0;
    for k in -POINTWISE_STEPS / 2..=POINTWISE_STEPS / 2 {
        let x = k as f64 * h;
        let s = (PI * x).sin();
        if s == 0.0 {
            continue;
        }
        let en = s / (x - n as f64);
        let e0 = s / x;
        bound = bound.max(en.abs() * (n as f64 - 1.0) / e0.abs());
    }

    let norm_sq = |shift: i64| {
        linalg::kahan_sum((-NORM_HALF_WIDTH..=NORM_HALF_WIDTH).map(|k| {
            let v = shifted_sinc(k, shift, NORM_STEP);
            let w = if k.abs() == NORM_HALF_WIDTH { 0.5 } else { 1.0 };
            w * v * v
        })) * NORM_STEP
    };
    let (en, e0) = rayon::join(|| norm_sq(n as i64), || norm_sq(0));
    Ok(NormalityWitness {
        n,
        pointwise_ratio_bound: bound,
        norm_ratio: (n as f64 - 1.0) * (en / e0).sqrt(),
    })
}
