//! Special functions used by the kernel families and the Hermite–Biehler
//! constructions: Gamma on the positive axis, the entire Bessel-type series
//! `j_s(√t) = J_s(√t)·t^{-s/2}`, and complex-step differentiation.
//!
//! The Bessel series is summed strictly as a power series in `t`. For real
//! `t = x²` the terms peak near `k ≈ x/2` with magnitude close to `e^x`, so a
//! plain double sum loses about `x/ln 10` digits. Terms and partial sums are
//! therefore carried in double-double precision; the number of terms needed
//! to reach the double-precision floor grows roughly like `e·√|t|/2 + 20`
//! (about 30 terms at `|t| = 40`, 90 at `|t| = 2500`).

use num_complex::Complex64;
use thiserror::Error;

use crate::dd::{CDd, Dd};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecfunError {
    #[error("argument {arg} outside the domain of {func}: {reason}")]
    Domain {
        func: &'static str,
        arg: f64,
        reason: &'static str,
    },
    #[error("non-finite complex argument ({re}, {im})")]
    NonFinite { re: f64, im: f64 },
    #[error("series for {func} did not meet its tail bound within {max_terms} terms")]
    NonConvergence { func: &'static str, max_terms: usize },
    #[error("invalid series parameters: {0}")]
    Params(&'static str),
}

pub type Result<T> = std::result::Result<T, SpecfunError>;

/// Truncation control for power series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesParams {
    pub max_terms: usize,
    /// Summation stops once a term falls below `tail_tolerance·(1+|partial sum|)`
    /// and the term ratio has dropped below one half.
    pub tail_tolerance: f64,
}

impl Default for SeriesParams {
    fn default() -> Self {
        Self {
            max_terms: 400,
            tail_tolerance: 1e-16,
        }
    }
}

impl SeriesParams {
    pub fn new(max_terms: usize, tail_tolerance: f64) -> Result<Self> {
        let p = Self {
            max_terms,
            tail_tolerance,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.max_terms < 1 {
            return Err(SpecfunError::Params("max_terms must be at least 1"));
        }
        if !(self.tail_tolerance > 0.0) || !self.tail_tolerance.is_finite() {
            return Err(SpecfunError::Params("tail_tolerance must be positive"));
        }
        Ok(())
    }
}

pub(crate) fn check_finite(z: Complex64) -> Result<Complex64> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(SpecfunError::NonFinite { re: z.re, im: z.im })
    }
}

// Lanczos approximation, g = 7, nine coefficients.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) for real `x > 0`.
pub fn gamma_real(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(SpecfunError::Domain {
            func: "gamma_real",
            arg: x,
            reason: "requires a finite x > 0",
        });
    }
    Ok(gamma_pos(x))
}

fn gamma_pos(x: f64) -> f64 {
    use std::f64::consts::PI;
    if x < 0.5 {
        // Γ(x)Γ(1-x) = π / sin(πx)
        return PI / ((PI * x).sin() * gamma_pos(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let w = x + LANCZOS_G + 0.5;
    // w^(x+1/2) split in two halves keeps the intermediate finite near x = 171.
    let half = w.powf(0.5 * (x + 0.5));
    (2.0 * PI).sqrt() * half * (-w).exp() * half * acc
}

/// The entire function `t ↦ j_s(√t) = 2^{-s} Σ_k (-t/4)^k / (k! Γ(k+s+1))`.
pub fn entire_bessel(s: f64, t: Complex64, params: SeriesParams) -> Result<Complex64> {
    if !s.is_finite() || s <= -1.0 {
        return Err(SpecfunError::Domain {
            func: "entire_bessel",
            arg: s,
            reason: "order must satisfy s > -1",
        });
    }
    check_finite(t)?;
    params.validate()?;

    let step_re = -0.25 * t.re;
    let step_im = -0.25 * t.im;
    let quarter = 0.25 * t.norm();

    let mut term = CDd::ONE;
    let mut sum = CDd::ONE;
    let mut converged = false;
    for k in 0..params.max_terms {
        let k1 = (k + 1) as f64;
        let denom = Dd::from_f64(k1) * Dd::sum(k1, s);
        term = term.mul_f64_pair(step_re, step_im).div_real(denom);
        sum = sum.add(term);
        let ratio = quarter / (k1 * (k1 + 1.0 + s));
        let mag = term.norm_f64();
        if ratio < 0.5 && mag <= params.tail_tolerance * (1.0 + sum.norm_f64()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SpecfunError::NonConvergence {
            func: "entire_bessel",
            max_terms: params.max_terms,
        });
    }
    let scale = (-s).exp2() / gamma_pos(s + 1.0);
    Ok(Complex64::new(
        sum.re.to_f64() * scale,
        sum.im.to_f64() * scale,
    ))
}

/// Bessel function of the first kind `J_s(x) = x^s · j_s(x)` for `x > 0`.
pub fn bessel_j(s: f64, x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(SpecfunError::Domain {
            func: "bessel_j",
            arg: x,
            reason: "requires x > 0",
        });
    }
    let v = entire_bessel(s, Complex64::new(x * x, 0.0), SeriesParams::default())?;
    Ok(x.powf(s) * v.re)
}

/// Default complex step `1e-8·max(1,|x|)`.
pub fn default_step(x: f64) -> f64 {
    1e-8 * x.abs().max(1.0)
}

/// `Im f(x+ih)/h`, an O(h²) approximation of `f'(x)` free of subtractive
/// cancellation. `f` must be analytic and real on the real axis near `x`.
pub fn complex_step_derivative<F, E>(f: F, x: f64, h: f64) -> std::result::Result<f64, E>
where
    F: Fn(Complex64) -> std::result::Result<Complex64, E>,
{
    debug_assert!(h > 0.0);
    let v = f(Complex64::new(x, h))?;
    Ok(v.im / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn gamma_small_integers_and_half() {
        assert!(rel(gamma_real(1.0).unwrap(), 1.0) < 1e-14);
        assert!(rel(gamma_real(5.0).unwrap(), 24.0) < 1e-14);
        assert!(rel(gamma_real(0.5).unwrap(), PI.sqrt()) < 1e-14);
    }

    #[test]
    fn gamma_rejects_nonpositive() {
        assert!(gamma_real(0.0).is_err());
        assert!(gamma_real(-1.5).is_err());
        assert!(gamma_real(f64::NAN).is_err());
        assert!(gamma_real(f64::INFINITY).is_err());
    }

    #[test]
    fn gamma_factorials_up_to_sixty() {
        let mut fact = 1.0f64;
        for n in 1..=59u32 {
            // Γ(n+1) = n!
            fact *= n as f64;
            let g = gamma_real(n as f64 + 1.0).unwrap();
            assert!(rel(g, fact) < 1e-12, "n = {n}: {g} vs {fact}");
        }
    }

    #[test]
    fn gamma_recurrence_on_grid() {
        for i in 0..100 {
            let x = 0.1 + (30.0 - 0.1) * i as f64 / 99.0;
            let lhs = gamma_real(x + 1.0).unwrap();
            let rhs = x * gamma_real(x).unwrap();
            assert!(rel(lhs, rhs) < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn entire_bessel_at_origin() {
        let v = entire_bessel(0.0, Complex64::new(0.0, 0.0), SeriesParams::default()).unwrap();
        assert!((v.re - 1.0).abs() < 1e-15 && v.im == 0.0);
    }

    #[test]
    fn entire_bessel_half_order_zero_at_pi_squared() {
        let v = entire_bessel(0.5, Complex64::new(PI * PI, 0.0), SeriesParams::default()).unwrap();
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn entire_bessel_half_order_closed_form() {
        // j_{1/2}(u) = √(2/π)·sin(u)/u
        let v = entire_bessel(0.5, Complex64::new(1.0, 0.0), SeriesParams::default()).unwrap();
        let want = (2.0 / PI).sqrt() * 1f64.sin();
        assert!(rel(v.re, want) < 1e-14);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn entire_bessel_non_convergence_reported() {
        let p = SeriesParams::new(3, 1e-16).unwrap();
        let e = entire_bessel(0.0, Complex64::new(100.0, 0.0), p).unwrap_err();
        assert!(matches!(e, SpecfunError::NonConvergence { .. }));
    }

    #[test]
    fn entire_bessel_rejects_bad_order_and_nan() {
        let p = SeriesParams::default();
        assert!(entire_bessel(-1.0, Complex64::new(1.0, 0.0), p).is_err());
        assert!(entire_bessel(0.0, Complex64::new(f64::NAN, 0.0), p).is_err());
        assert!(SeriesParams::new(0, 1e-16).is_err());
        assert!(SeriesParams::new(10, 0.0).is_err());
    }

    #[test]
    fn bessel_j_half_order_zero_at_pi() {
        assert!(bessel_j(0.5, PI).unwrap().abs() < 1e-15);
    }

    #[test]
    fn bessel_j_order_zero_near_origin() {
        assert!(rel(bessel_j(0.0, 1e-8).unwrap(), 1.0) < 1e-15);
        assert!(bessel_j(0.0, 0.0).is_err());
        assert!(bessel_j(0.0, -1.0).is_err());
    }

    #[test]
    fn complex_step_on_polynomials() {
        let id = |z: Complex64| Ok::<_, ()>(z);
        assert!((complex_step_derivative(id, 3.0, default_step(3.0)).unwrap() - 1.0).abs() < 1e-15);
        let sq = |z: Complex64| Ok::<_, ()>(z * z);
        assert!((complex_step_derivative(sq, 2.0, default_step(2.0)).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn complex_step_matches_central_difference() {
        let f = |z: Complex64| entire_bessel(0.0, z, SeriesParams::default());
        let d = complex_step_derivative(f, 1.0, default_step(1.0)).unwrap();
        let h = 1e-5;
        let fd = (f(Complex64::new(1.0 + h, 0.0)).unwrap().re
            - f(Complex64::new(1.0 - h, 0.0)).unwrap().re)
            / (2.0 * h);
        assert!((d - fd).abs() < 1e-6);
        // d/dt j_0(√t) at t = 0 is -1/4
        let d0 = complex_step_derivative(f, 0.0, default_step(0.0)).unwrap();
        assert!((d0 + 0.25).abs() < 1e-15);
    }
}
