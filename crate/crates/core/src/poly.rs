//! Dense polynomials with complex coefficients stored lowest degree first.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

pub type CPoly = Vec<Complex64>;

pub fn eval(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

pub fn eval_real(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Value and first derivative by Horner's scheme.
pub fn eval_with_derivative(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    let mut p = zero;
    let mut dp = zero;
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Multiplies `p` in place by `(z - root)`.
pub fn mul_linear(p: &mut CPoly, root: Complex64) {
    p.push(Complex64::new(0.0, 0.0));
    for i in (0..p.len()).rev() {
        let lower = if i > 0 { p[i - 1] } else { Complex64::new(0.0, 0.0) };
        p[i] = lower - root * p[i];
    }
}

/// Monic polynomial `∏ (z - r)`.
pub fn from_roots(roots: &[Complex64]) -> CPoly {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        mul_linear(&mut p, r);
    }
    p
}

pub fn scale(p: &[Complex64], c: Complex64) -> CPoly {
    p.iter().map(|&a| a * c).collect()
}

pub fn add_assign(acc: &mut CPoly, p: &[Complex64]) {
    if acc.len() < p.len() {
        acc.resize(p.len(), Complex64::new(0.0, 0.0));
    }
    for (a, &b) in acc.iter_mut().zip(p) {
        *a += b;
    }
}

/// Index of the highest coefficient whose modulus exceeds `rel_tol·max|c|`.
pub fn degree(coeffs: &[Complex64], rel_tol: f64) -> Option<usize> {
    let max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return None;
    }
    coeffs.iter().rposition(|c| c.norm() > rel_tol * max)
}

/// All complex roots: eigenvalues of the companion matrix, polished by a
/// few Newton steps on the original coefficients.
pub fn roots(coeffs: &[Complex64]) -> Option<Vec<Complex64>> {
    let deg = degree(coeffs, 1e-300)?;
    if deg == 0 {
        return Some(Vec::new());
    }
    let lead = coeffs[deg];
    let mut companion = DMatrix::<Complex64>::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let schur = Schur::try_new(companion, f64::EPSILON, 10_000)?;
    let (_, t) = schur.unpack();
    let coeffs = &coeffs[..=deg];
    let mut out: Vec<Complex64> = (0..deg).map(|i| t[(i, i)]).collect();
    for r in out.iter_mut() {
        *r = polish(coeffs, *r);
    }
    Some(out)
}

/// Polynomial of degree `< nodes.len()` held by its values at distinct real
/// nodes and evaluated with the first barycentric form
/// `p(z) = ℓ(z) Σ_j w_j f_j / (z - x_j)`, which is backward stable at every
/// complex `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolant {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<Complex64>,
}

/// `count` Chebyshev points of the second kind on `[lo, hi]`, ascending.
pub fn chebyshev_nodes(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count)
        .map(|k| {
            let t = -(std::f64::consts::PI * k as f64 / (count - 1) as f64).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        })
        .collect()
}

impl Interpolant {
    pub fn new(nodes: Vec<f64>, values: Vec<Complex64>) -> Self {
        assert_eq!(nodes.len(), values.len());
        let weights = nodes
            .iter()
            .enumerate()
            .map(|(j, &xj)| {
                let prod: f64 = nodes
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .map(|(_, &xk)| xj - xk)
                    .product();
                1.0 / prod
            })
            .collect();
        Self {
            nodes,
            weights,
            values,
        }
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(nodes: Vec<f64>, f: F) -> Self {
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self::new(nodes, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn map_values<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Self {
        Self {
            nodes: self.nodes.clone(),
            weights: self.weights.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Coefficient of `z^{len-1}`.
    pub fn leading(&self) -> Complex64 {
        self.weights
            .iter()
            .zip(&self.values)
            .map(|(&w, &f)| f * w)
            .sum()
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        if let Some(j) = self.nodes.iter().position(|&x| z == Complex64::new(x, 0.0)) {
            return self.values[j];
        }
        let mut ell = Complex64::new(1.0, 0.0);
        let mut s = Complex64::new(0.0, 0.0);
        for ((&x, &w), &f) in self.nodes.iter().zip(&self.weights).zip(&self.values) {
            let d = z - x;
            ell *= d;
            s += f * w / d;
        }
        ell * s
    }

    /// Value and derivative from the Lagrange form, accumulating each basis
    /// product with the product rule so nothing cancels near a node.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let mut value = zero;
        let mut deriv = zero;
        for (j, (&w, &f)) in self.weights.iter().zip(&self.values).enumerate() {
            let mut p = Complex64::new(w, 0.0);
            let mut dp = zero;
            for (k, &x) in self.nodes.iter().enumerate() {
                if k != j {
                    dp = dp * (z - x) + p;
                    p *= z - x;
                }
            }
            value += f * p;
            deriv += f * dp;
        }
        (value, deriv)
    }

    /// Monomial coefficients, lowest degree first, via divided differences.
    pub fn to_monomial(&self) -> CPoly {
        let n = self.nodes.len();
        let mut dd = self.values.clone();
        for level in 1..n {
            for i in (level..n).rev() {
                dd[i] = (dd[i] - dd[i - 1]) / (self.nodes[i] - self.nodes[i - level]);
            }
        }
        let mut p: CPoly = vec![dd[n - 1]];
        for k in (0..n - 1).rev() {
            mul_linear(&mut p, Complex64::new(self.nodes[k], 0.0));
            p[0] += dd[k];
        }
        p
    }
}

fn polish(coeffs: &[Complex64], mut z: Complex64) -> Complex64 {
    let (mut pz, _) = eval_with_derivative(coeffs, z);
    for _ in 0..4 {
        let (p, dp) = eval_with_derivative(coeffs, z);
        if dp.norm() == 0.0 {
            break;
        }
        let cand = z - p / dp;
        let (pc, _) = eval_with_derivative(coeffs, cand);
        if pc.norm() < pz.norm() {
            z = cand;
            pz = pc;
        } else {
            break;
        }
    }
    z
}
