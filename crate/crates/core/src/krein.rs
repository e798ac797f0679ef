//! Krein model of the multiplication operator on a finite-rank space with the
//! division property, carried through to an Hermite–Biehler function `E` and
//! a multiplier `Φ` with `K(x,y) = Φ(x) K_E(x,y) Φ(y)` on the point set.
//!
//! Coordinates: a space is an `n×m` basis matrix `V` whose rows are
//! orthonormal in `ℓ²(U, μ)`. A vector `c ∈ ℂⁿ` stands for the function
//! `f(t_i) = Σ_k c_k V[k,i]`, so the inner product of `H` is the Euclidean
//! one on coordinates. Internally the weighted matrix `Q = V·diag(√μ)` has
//! orthonormal rows in plain `ℓ²`.
//!
//! Pipeline stages, each with its own check:
//!
//! 1. division property at every point of `U`;
//! 2. the domain `D = {f : tf ∈ H}` and the compression `T_H` of `t`;
//! 3. the deficiency vector `ξ ⊥ Ran(A - w)`, nonvanishing on `U`;
//! 4. a selfadjoint extension `Ã(θ)` and its spectral measure at `ξ`;
//! 5. the zero set `S` of `Ψ` and the polynomial `R`;
//! 6. Parseval's identity for the transform `f ↦ f_ξ`;
//! 7. the reproducing kernel of `𝒳 = R·X` and its integrable form;
//! 8. the constant `Ω`, then `E = A^κ + iB^κ` and `Φ = ξ/(RΩ)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debranges::{
    self, DebrangesError, HbReport, HermiteBiehler, Multiplier, RealEntireFunction,
};
use crate::linalg;
use crate::poly::{self, CPoly, Interpolant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KreinError {
    #[error("invalid space: {0}")]
    Space(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("division fails at t = {point}: residual {residual:e}")]
    Division { point: f64, residual: f64 },
    #[error("singular value {0:e} falls in the rank ambiguity window")]
    IllConditioned(f64),
    #[error("domain of t has dimension {dim}, expected {expected}")]
    DomainDimension { dim: usize, expected: usize },
    #[error("deficiency subspace at {re}{im:+}i has dimension {dim}")]
    Deficiency { re: f64, im: f64, dim: usize },
    #[error("deficiency vector vanishes at t = {0}")]
    XiVanishes(f64),
    #[error("theta = {theta} gives eigenvalue gap {gap:e}; perturb theta")]
    RepeatedEigenvalue { theta: f64, gap: f64 },
    #[error("extension spectra do not interlace")]
    Interlacing,
    #[error("transform differs between extensions by {0:e}")]
    ExtensionDependence(f64),
    #[error("{re}{im:+}i is a pole of the transform")]
    Pole { re: f64, im: f64 },
    #[error("zero of Psi at {re}{im:+}i is within 1e-8 of the real axis")]
    RealZero { re: f64, im: f64 },
    #[error("expected {expected} zeros of Psi, found {found}")]
    ZeroCount { expected: usize, found: usize },
    #[error("polynomial root finding failed")]
    Roots,
    #[error("Parseval residual {0:e} exceeds 1e-10")]
    Parseval(f64),
    #[error("no probe pair gives a well-conditioned integrable solve")]
    Probe,
    #[error("integrable representation residual {0:e} exceeds 1e-9")]
    Integrable(f64),
    #[error("extracted A and B are proportional")]
    Collinear,
    #[error("A and B share a zero near {re}{im:+}i")]
    CommonZero { re: f64, im: f64 },
    #[error("zeros of A are not closed under conjugation (mismatch {0:e})")]
    NotConjugateClosed(f64),
    #[error("symmetrized coefficients keep imaginary parts of size {0:e}")]
    NotReal(f64),
    #[error("E fails the Hermite-Biehler check (margin {0:e})")]
    NotHermiteBiehler(f64),
    #[error("multiplier is not real after phase normalization ({0:e})")]
    MultiplierPhase(f64),
    #[error("factorization residual {0:e} exceeds 1e-9")]
    Factorization(f64),
    #[error("adaptive quadrature did not converge")]
    Quadrature,
    #[error("eigensolver failed")]
    Eigensolver,
    #[error(transparent)]
    Debranges(#[from] DebrangesError),
}

pub type Result<T> = std::result::Result<T, KreinError>;

const GRAM_TOL: f64 = 1e-12;
const POINT_FUNCTION_TOL: f64 = 1e-10;
const DIVISION_TOL: f64 = 1e-10;
const RANK_NULL: f64 = 1e-10;
const RANK_FULL: f64 = 1e-6;
const XI_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-10;
const CLUSTER_RADIUS: f64 = 1e-7;
const REAL_AXIS_TOL: f64 = 1e-8;
const PARSEVAL_TOL: f64 = 1e-10;
const EXTENSION_TOL: f64 = 1e-10;
const PROBE_COND: f64 = 1e8;
const INTEGRABLE_TOL: f64 = 1e-9;
const COMMON_ZERO_TOL: f64 = 1e-8;
const REAL_COEFF_TOL: f64 = 1e-11;
const FACTORIZATION_TOL: f64 = 1e-9;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Finite-rank subspace of `ℓ²(U, μ)` given by an orthonormal row basis.
#[derive(Debug, Clone)]
pub struct FiniteRankSpace {
    points: Vec<f64>,
    weights: Vec<f64>,
    basis: DMatrix<f64>,
}

impl FiniteRankSpace {
    /// Validates an orthonormal basis (`n×m`, rows = functions).
    pub fn new(points: Vec<f64>, weights: Vec<f64>, basis: DMatrix<f64>) -> Result<Self> {
        check_measure(&points, &weights)?;
        let (n, m) = basis.shape();
        if m != points.len() {
            return Err(KreinError::Space(format!(
                "basis has {m} columns for {} points",
                points.len()
            )));
        }
        if n < 2 || m < n + 1 {
            return Err(KreinError::Space(format!("need n >= 2 and m >= n+1, got n = {n}, m = {m}")));
        }
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(KreinError::Space("non-finite basis entry".into()));
        }
        let space = Self {
            points,
            weights,
            basis,
        };
        let q = space.weighted();
        let gram = &q * q.transpose();
        let dev = (gram - DMatrix::identity(n, n)).amax();
        if dev > GRAM_TOL {
            return Err(KreinError::Space(format!("Gram matrix deviates from I by {dev:e}")));
        }
        for i in 0..m {
            let col = q.column(i);
            if col.amax() == 0.0 {
                return Err(KreinError::Space(format!(
                    "every function vanishes at t = {}",
                    space.points[i]
                )));
            }
            // residual of projecting the unit mass at t_i onto H
            let mut r = -(q.transpose() * col);
            r[i] += 1.0;
            if r.norm() <= POINT_FUNCTION_TOL {
                return Err(KreinError::Space(format!(
                    "the point function at t = {} lies in H",
                    space.points[i]
                )));
            }
        }
        Ok(space)
    }

    /// Orthonormalizes the rows of `span` (function values on the points)
    /// and validates the result.
    pub fn from_span(points: Vec<f64>, weights: Vec<f64>, span: DMatrix<f64>) -> Result<Self> {
        check_measure(&points, &weights)?;
        if span.ncols() != points.len() {
            return Err(KreinError::Space("span width differs from the point count".into()));
        }
        let sq: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let mut rows: Vec<DVector<f64>> = Vec::with_capacity(span.nrows());
        for k in 0..span.nrows() {
            let mut v = DVector::from_iterator(sq.len(), span.row(k).iter().zip(&sq).map(|(a, s)| a * s));
            let scale = v.norm();
            for _ in 0..2 {
                for q in &rows {
                    let p = q.dot(&v);
                    v.axpy(-p, q, 1.0);
                }
            }
            let nv = v.norm();
            if !(nv > 1e-12 * scale) {
                return Err(KreinError::Space(format!("span row {k} is linearly dependent")));
            }
            rows.push(v / nv);
        }
        let basis = DMatrix::from_fn(rows.len(), sq.len(), |k, i| rows[k][i] / sq[i]);
        Self::new(points, weights, basis)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `n×m` basis matrix, rows orthonormal in `ℓ²(U, μ)`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn weighted(&self) -> DMatrix<f64> {
        let mut q = self.basis.clone();
        for (i, w) in self.weights.iter().enumerate() {
            q.column_mut(i).scale_mut(w.sqrt());
        }
        q
    }

    /// Values `f(t_i)` of the function with coordinates `coords`.
    pub fn values(&self, coords: &[Complex64]) -> Vec<Complex64> {
        (0..self.len())
            .map(|i| {
                coords
                    .iter()
                    .enumerate()
                    .map(|(k, &ck)| ck * self.basis[(k, i)])
                    .sum()
            })
            .collect()
    }

    /// Reproducing kernel `K(t_i, t_j) = Σ_k V[k,i] V[k,j]`.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        self.basis.transpose() * &self.basis
    }
}

fn check_measure(points: &[f64], weights: &[f64]) -> Result<()> {
    if points.len() != weights.len() {
        return Err(KreinError::Space("points and weights differ in length".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(KreinError::Space("non-finite point".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(KreinError::Space("weights must be positive and finite".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(KreinError::Space("points must be distinct".into()));
    }
    Ok(())
}

/// JSON description of a space: a polynomial space of dimension `n`, or an
/// explicit span of functions given by their values on the points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceInput {
    Span {
        points: Vec<f64>,
        weights: Vec<f64>,
        basis: Vec<Vec<f64>>,
    },
    Polynomial {
        points: Vec<f64>,
        weights: Vec<f64>,
        n: usize,
    },
}

impl SpaceInput {
    pub fn build(&self) -> Result<FiniteRankSpace> {
        match self {
            SpaceInput::Polynomial { points, weights, n } => {
                make_polynomial_space(points, weights, *n)
            }
            SpaceInput::Span {
                points,
                weights,
                basis,
            } => {
                let m = points.len();
                if basis.iter().any(|r| r.len() != m) {
                    return Err(KreinError::Space("basis rows must have one value per point".into()));
                }
                let span = DMatrix::from_fn(basis.len(), m, |k, i| basis[k][i]);
                FiniteRankSpace::from_span(points.clone(), weights.clone(), span)
            }
        }
    }
}

/// First `n` orthonormal polynomials of the discrete measure, by the
/// Stieltjes recurrence with full reorthogonalization. Leading coefficients
/// are positive.
pub fn make_polynomial_space(points: &[f64], weights: &[f64], n: usize) -> Result<FiniteRankSpace> {
    check_measure(points, weights)?;
    let m = points.len();
    if n < 2 || m < n + 1 {
        return Err(KreinError::Space(format!("need m >= n+1 >= 3, got n = {n}, m = {m}")));
    }
    let sq: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let scale = points.iter().fold(1.0f64, |a, p| a.max(p.abs()));
    let first = DVector::from_vec(sq.clone());
    let mut q: Vec<DVector<f64>> = vec![&first / first.norm()];
    while q.len() < n {
        let last = q.last().expect("non-empty");
        let mut v = DVector::from_iterator(m, last.iter().zip(points).map(|(a, t)| a * t));
        for _ in 0..2 {
            for qk in &q {
                let p = qk.dot(&v);
                v.axpy(-p, qk, 1.0);
            }
        }
        let beta = v.norm();
        if !(beta > 1e-13 * scale) {
            return Err(KreinError::Space("degenerate measure".into()));
        }
        q.push(v / beta);
    }
    let basis = DMatrix::from_fn(n, m, |k, i| q[k][i] / sq[i]);
    FiniteRankSpace::new(points.to_vec(), weights.to_vec(), basis)
}

#[derive(Debug, Clone, Serialize)]
pub struct DivisionReport {
    /// Coordinates of the quotient `g`.
    pub g: Vec<f64>,
    pub residual: f64,
    /// Normal equations of the solve are nonsingular.
    pub unique: bool,
    pub pass: bool,
}

/// Least-squares solve of `f(t) = (t - t_k) g(t)` for `g ∈ H`.
pub fn division_check(space: &FiniteRankSpace, f: &[f64], k: usize) -> Result<DivisionReport> {
    let n = space.dim();
    if f.len() != n || k >= space.len() {
        return Err(KreinError::Argument("coordinate length or point index out of range".into()));
    }
    let fv = DVector::from_column_slice(f);
    let norm = fv.norm();
    let fk: f64 = (0..n).map(|r| f[r] * space.basis[(r, k)]).sum();
    if fk.abs() > 1e-10 * norm {
        return Err(KreinError::Argument(format!("f does not vanish at t = {}", space.points[k])));
    }
    let q = space.weighted();
    let tk = space.points[k];
    let mut mat = q.transpose();
    for (i, t) in space.points.iter().enumerate() {
        mat.row_mut(i).scale_mut(t - tk);
    }
    let rhs = q.transpose() * &fv;
    let svd = linalg::svd(&mat).ok_or(KreinError::Eigensolver)?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let g = svd.solve(&rhs, 1e-14 * smax);
    let residual = (&rhs - &mat * &g).norm();
    Ok(DivisionReport {
        g: g.iter().copied().collect(),
        residual,
        unique: smin > 1e-10 * smax,
        pass: residual <= DIVISION_TOL * norm.max(f64::MIN_POSITIVE),
    })
}

/// Orthonormal basis (columns) of the complement of `v` in `ℝⁿ`.
fn orth_complement(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let nv = v.norm();
    let mut u = v.clone();
    let s = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += s * nv;
    let nu = u.norm();
    let h = if nu == 0.0 {
        DMatrix::identity(n, n)
    } else {
        let u = u / nu;
        DMatrix::identity(n, n) - 2.0 * &u * u.transpose()
    };
    h.columns(1, n - 1).into_owned()
}

/// Division property at every point of `U`: every function vanishing at
/// `t_k` is `(t - t_k)` times a function of `H`. Returns the worst relative
/// residual.
pub fn division_property(space: &FiniteRankSpace) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..space.len() {
        let col = space.basis.column(k).into_owned();
        let comp = orth_complement(&col);
        for j in 0..comp.ncols() {
            let f: Vec<f64> = comp.column(j).iter().copied().collect();
            let rep = division_check(space, &f, k)?;
            if !rep.pass || !rep.unique {
                return Err(KreinError::Division {
                    point: space.points[k],
                    residual: rep.residual,
                });
            }
            worst = worst.max(rep.residual);
        }
    }
    Ok(worst)
}

/// Multiplication by `t` restricted to `D = {f ∈ H : tf ∈ H}`.
#[derive(Debug, Clone)]
pub struct MultiplicationOperator {
    /// Orthonormal basis of `D` (columns, coordinates in `H`).
    pub domain_basis: DMatrix<f64>,
    /// Compression `T_H = Q diag(t) Qᵀ`; equals `f ↦ tf` on `D`.
    pub action: DMatrix<f64>,
    /// Unit vector spanning `H ⊖ D` when `dim D = n - 1`.
    pub complement: Option<DVector<f64>>,
    /// `max |⟨tf,g⟩ - ⟨f,tg⟩|` over basis pairs of `D`.
    pub symmetry_residual: f64,
}

impl MultiplicationOperator {
    pub fn dim_domain(&self) -> usize {
        self.domain_basis.ncols()
    }
}

fn fix_sign(v: &mut DVector<f64>) {
    let i = v.iamax();
    if v[i] < 0.0 {
        v.neg_mut();
    }
}

/// Null space of `(I - P_H)·t` on `H`.
pub fn mult_domain(space: &FiniteRankSpace) -> Result<MultiplicationOperator> {
    let n = space.dim();
    let q = space.weighted();
    let scale = space.points.iter().fold(1.0f64, |a, p| a.max(p.abs()));
    let mut tq = q.transpose();
    for (i, t) in space.points.iter().enumerate() {
        tq.row_mut(i).scale_mut(*t);
    }
    let action = &q * &tq;
    let outside = &tq - q.transpose() * &action;
    let svd = linalg::svd(&outside).ok_or(KreinError::Eigensolver)?;
    let vt = &svd.v_t;
    let mut null = Vec::new();
    let mut range = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < RANK_NULL * scale {
            null.push(i);
        } else if s <= RANK_FULL * scale {
            return Err(KreinError::IllConditioned(s));
        } else {
            range.push(i);
        }
    }
    if null.len() + 1 < n {
        return Err(KreinError::DomainDimension {
            dim: null.len(),
            expected: n - 1,
        });
    }
    let mut domain_basis = DMatrix::zeros(n, null.len());
    for (col, &i) in null.iter().enumerate() {
        let mut v = vt.row(i).transpose();
        fix_sign(&mut v);
        domain_basis.set_column(col, &v);
    }
    let complement = if range.len() == 1 {
        let mut u = vt.row(range[0]).transpose();
        fix_sign(&mut u);
        Some(u)
    } else {
        None
    };
    let on_d = domain_basis.transpose() * &action * &domain_basis;
    let symmetry_residual = (&on_d - on_d.transpose()).amax();
    Ok(MultiplicationOperator {
        domain_basis,
        action,
        complement,
        symmetry_residual,
    })
}

/// Unit vector spanning `Ran(A - w)^⊥`, with its largest coordinate real
/// positive. Fails unless that complement is one-dimensional and `ξ` has no
/// zero on `U`.
pub fn deficiency_subspace(
    space: &FiniteRankSpace,
    op: &MultiplicationOperator,
    w: Complex64,
) -> Result<DVector<Complex64>> {
    if w.im == 0.0 || !w.re.is_finite() || !w.im.is_finite() {
        return Err(KreinError::Argument("base point must be finite and nonreal".into()));
    }
    let xi = deficiency_vector(op, w)?;
    let values = space.values(xi.as_slice());
    let sup = values.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    for (v, t) in values.iter().zip(&space.points) {
        if v.norm() <= XI_TOL * sup {
            return Err(KreinError::XiVanishes(*t));
        }
    }
    Ok(xi)
}

fn deficiency_vector(op: &MultiplicationOperator, w: Complex64) -> Result<DVector<Complex64>> {
    let n = op.action.nrows();
    let d = op.dim_domain();
    let shifted = op.action.map(|v| c(v, 0.0)) - DMatrix::from_diagonal_element(n, n, w);
    let range = shifted * op.domain_basis.map(|v| c(v, 0.0));
    // pad to square so the left singular vectors span all of ℂⁿ
    let mut padded = DMatrix::<Complex64>::zeros(n, n);
    padded.columns_mut(0, d).copy_from(&range);
    let svd = linalg::svd(&padded).ok_or(KreinError::Eigensolver)?;
    let u = &svd.u;
    let scale = op.action.amax().max(w.norm()).max(1.0);
    let small: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s < RANK_NULL * scale)
        .map(|(i, _)| i)
        .collect();
    if small.len() != 1 {
        return Err(KreinError::Deficiency {
            re: w.re,
            im: w.im,
            dim: small.len(),
        });
    }
    let mut xi = u.column(small[0]).into_owned();
    let big = xi.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).map(|(i, _)| i).unwrap_or(0);
    let phase = xi[big].conj() / xi[big].norm();
    xi *= phase;
    let nrm = xi.norm();
    Ok(xi / c(nrm, 0.0))
}

/// Dimension of `Ran(A - w)^⊥`.
pub fn deficiency_dimension(op: &MultiplicationOperator, w: Complex64) -> usize {
    match deficiency_vector(op, w) {
        Ok(_) => 1,
        Err(KreinError::Deficiency { dim, .. }) => dim,
        Err(_) => 0,
    }
}

/// Selfadjoint extension `Ã(θ) = T_H + (θ - uᵀT_H u)·uuᵀ`: agrees with `t`
/// on `D` and has `θ` as its diagonal entry on `H ⊖ D`.
#[derive(Debug, Clone)]
pub struct Extension {
    pub theta: f64,
    pub matrix: DMatrix<f64>,
    /// Ascending eigenvalues.
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

pub fn selfadjoint_extension(op: &MultiplicationOperator, theta: f64) -> Result<Extension> {
    let n = op.action.nrows();
    let u = op.complement.as_ref().ok_or(KreinError::DomainDimension {
        dim: op.dim_domain(),
        expected: n - 1,
    })?;
    if !theta.is_finite() {
        return Err(KreinError::Argument("theta must be finite".into()));
    }
    let diag = u.dot(&(&op.action * u));
    let mut matrix = op.action.clone() + (theta - diag) * u * u.transpose();
    matrix = 0.5 * (&matrix + matrix.transpose());
    let (mut eigenvalues, eigenvectors) =
        linalg::sym_eigen_sorted(&matrix).ok_or(KreinError::Eigensolver)?;
    // atoms can sit within 1e-5 of a point of U, where factors t - x_j
    // cancel; the solver's few-ulp eigenvalue error then shows up in K
    linalg::refine_eigenvalues(&matrix, &eigenvectors, &mut eigenvalues);
    let scale = eigenvalues.amax().max(1.0);
    let gap = eigenvalues
        .as_slice()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if gap < GAP_TOL * scale {
        return Err(KreinError::RepeatedEigenvalue { theta, gap });
    }
    Ok(Extension {
        theta,
        matrix,
        eigenvalues,
        eigenvectors,
    })
}

/// Strict interlacing of two ascending spectra of equal length.
pub fn interlace(a: &[f64], b: &[f64]) -> bool {
    if a.len() != b.len() || a.is_empty() {
        return false;
    }
    let (lo, hi) = if a[0] < b[0] { (a, b) } else { (b, a) };
    (0..lo.len()).all(|j| lo[j] < hi[j] && (j + 1 == lo.len() || hi[j] < lo[j + 1]))
}

/// Spectral measure of `Ã` at `ξ`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralMeasure {
    pub atoms: Vec<f64>,
    pub masses: Vec<f64>,
}

impl SpectralMeasure {
    pub fn total_mass(&self) -> f64 {
        linalg::kahan_sum(self.masses.iter().copied())
    }
}

/// `Ã`, `ξ` and `w` together: everything the transform `f ↦ f_ξ` needs.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    pub w: Complex64,
    pub xi: DVector<Complex64>,
    pub extension: Extension,
    /// `c_j = ⟨ξ, e_j⟩` for the unit eigenvectors `e_j`.
    pub overlaps: Vec<Complex64>,
}

impl SpectralModel {
    pub fn new(xi: DVector<Complex64>, w: Complex64, extension: Extension) -> Self {
        let n = xi.len();
        let overlaps = (0..n)
            .map(|j| (0..n).map(|k| xi[k] * extension.eigenvectors[(k, j)]).sum())
            .collect();
        Self {
            w,
            xi,
            extension,
            overlaps,
        }
    }

    pub fn atoms(&self) -> &[f64] {
        self.extension.eigenvalues.as_slice()
    }

    pub fn measure(&self) -> SpectralMeasure {
        SpectralMeasure {
            atoms: self.atoms().to_vec(),
            masses: self.overlaps.iter().map(|c| c.norm_sqr()).collect(),
        }
    }

    fn eigen_coords(&self, f: &[Complex64]) -> Vec<Complex64> {
        let n = self.xi.len();
        (0..n)
            .map(|j| (0..n).map(|k| f[k] * self.extension.eigenvectors[(k, j)]).sum())
            .collect()
    }

    /// `Ψ(λ) = Σ_j |c_j|² (x_j - w)/(x_j - λ)`.
    pub fn psi(&self, lambda: Complex64) -> Complex64 {
        self.atoms()
            .iter()
            .zip(&self.overlaps)
            .map(|(&x, cj)| cj.norm_sqr() * (x - self.w) / (x - lambda))
            .sum()
    }

    /// `N(λ) = Ψ(λ)·∏_j (x_j - λ)`, a polynomial of degree `n - 1`.
    pub fn psi_numerator(&self) -> CPoly {
        let x = self.atoms();
        let n = x.len();
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 }; // (-1)^{n-1}
        let mut acc: CPoly = Vec::new();
        for j in 0..n {
            let others: Vec<Complex64> = (0..n).filter(|&k| k != j).map(|k| c(x[k], 0.0)).collect();
            let p = poly::from_roots(&others);
            let w = self.overlaps[j].norm_sqr() * (x[j] - self.w) * sign;
            poly::add_assign(&mut acc, &poly::scale(&p, w));
        }
        acc
    }

    /// `f_ξ(λ) = ⟨f, φ(λ̄)⟩ / Ψ(λ)` without pole detection. At an eigenvalue
    /// `x_j` the removable value `f_j / c_j` is returned.
    pub fn transform_raw(&self, f: &[Complex64], lambda: Complex64) -> Complex64 {
        let fj = self.eigen_coords(f);
        let x = self.atoms();
        let scale = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if let Some(j) = x.iter().position(|&xj| (lambda - xj).norm() <= 1e-12 * scale) {
            return fj[j] / self.overlaps[j];
        }
        let mut num = c(0.0, 0.0);
        let mut den = c(0.0, 0.0);
        for j in 0..x.len() {
            let r = (x[j] - self.w) / (x[j] - lambda);
            num += fj[j] * self.overlaps[j].conj() * r;
            den += self.overlaps[j].norm_sqr() * r;
        }
        num / den
    }
}

/// A zero of `Ψ` with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Zero {
    pub re: f64,
    pub im: f64,
    pub mult: usize,
}

impl Zero {
    pub fn z(&self) -> Complex64 {
        c(self.re, self.im)
    }
}

/// Newton steps on the partial-fraction form of `Ψ`, which is evaluated
/// more accurately than the expanded numerator.
fn polish_on_psi(model: &SpectralModel, mut z: Complex64) -> Complex64 {
    let eval = |z: Complex64| -> (Complex64, Complex64) {
        let mut v = c(0.0, 0.0);
        let mut d = c(0.0, 0.0);
        for (&x, cj) in model.atoms().iter().zip(&model.overlaps) {
            let a = cj.norm_sqr() * (x - model.w);
            let inv = 1.0 / (x - z);
            v += a * inv;
            d += a * inv * inv;
        }
        (v, d)
    };
    let mut best = eval(z).0.norm();
    for _ in 0..8 {
        let (v, d) = eval(z);
        if d.norm() == 0.0 {
            break;
        }
        let cand = z - v / d;
        let cv = eval(cand).0.norm();
        if cv < best {
            z = cand;
            best = cv;
        } else {
            break;
        }
    }
    z
}

/// `R(λ)` evaluated as the product over the zeros.
pub fn eval_r(zeros: &[Zero], lambda: Complex64) -> Complex64 {
    zeros
        .iter()
        .map(|z| (lambda - z.z()).powu(z.mult as u32))
        .product()
}

/// Zeros of `Ψ` from the numerator polynomial, clustered at radius `1e-7`.
pub fn find_s(model: &SpectralModel) -> Result<Vec<Zero>> {
    let num = model.psi_numerator();
    let roots = poly::roots(&num).ok_or(KreinError::Roots)?;
    let expected = model.atoms().len() - 1;
    if roots.len() != expected {
        return Err(KreinError::ZeroCount {
            expected,
            found: roots.len(),
        });
    }
    let roots: Vec<Complex64> = roots.into_iter().map(|z| polish_on_psi(model, z)).collect();
    let mut used = vec![false; roots.len()];
    let mut out = Vec::new();
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let mut members = vec![roots[i]];
        used[i] = true;
        for j in (i + 1)..roots.len() {
            if !used[j] && (roots[j] - roots[i]).norm() <= CLUSTER_RADIUS * roots[i].norm().max(1.0) {
                used[j] = true;
                members.push(roots[j]);
            }
        }
        let mean = members.iter().sum::<Complex64>() / members.len() as f64;
        if mean.im.abs() <= REAL_AXIS_TOL * mean.norm().max(1.0) {
            return Err(KreinError::RealZero {
                re: mean.re,
                im: mean.im,
            });
        }
        out.push(Zero {
            re: mean.re,
            im: mean.im,
            mult: members.len(),
        });
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(out)
}

/// `f_ξ(λ)`; errors at zeros of `Ψ` (poles), removable at eigenvalues.
pub fn krein_transform(
    model: &SpectralModel,
    zeros: &[Zero],
    f: &[Complex64],
    lambda: Complex64,
) -> Result<Complex64> {
    if f.len() != model.xi.len() {
        return Err(KreinError::Argument("coordinate length differs from dim H".into()));
    }
    for z in zeros {
        if (lambda - z.z()).norm() <= CLUSTER_RADIUS * z.z().norm().max(1.0) {
            return Err(KreinError::Pole { re: z.re, im: z.im });
        }
    }
    Ok(model.transform_raw(f, lambda))
}

/// `|⟨f,g⟩_H - Σ_j f_ξ(x_j) conj g_ξ(x_j) ν{x_j}|`. The transforms at the
/// atoms of `model` are evaluated through `companion`, a second extension
/// whose spectrum avoids them.
pub fn parseval_check(
    model: &SpectralModel,
    companion: &SpectralModel,
    f: &[Complex64],
    g: &[Complex64],
) -> f64 {
    let direct: Complex64 = f.iter().zip(g).map(|(a, b)| a * b.conj()).sum();
    let measure = model.measure();
    let mut spectral = c(0.0, 0.0);
    for (&x, &nu) in measure.atoms.iter().zip(&measure.masses) {
        let lam = c(x, 0.0);
        spectral += companion.transform_raw(f, lam) * companion.transform_raw(g, lam).conj() * nu;
    }
    (direct - spectral).norm()
}

/// `R(λ) = ∏_{z∈S} (λ - z)^{mult}`.
pub fn canonical_r(zeros: &[Zero]) -> CPoly {
    let roots: Vec<Complex64> = zeros
        .iter()
        .flat_map(|z| std::iter::repeat(z.z()).take(z.mult))
        .collect();
    poly::from_roots(&roots)
}

/// Reproducing kernel of `𝒳 = R·X`. The images `h_j = R·(e_j)_ξ` of the
/// eigenvectors form an orthonormal basis of `𝒳`, and
/// `h_j(λ) = conj(c_j)(x_j - w)/L · ∏_{k≠j}(λ - x_k)` with
/// `L = Σ_k |c_k|²(x_k - w)`, so `K^𝒳(x,y) = Σ_j h_j(x) conj h_j(y)`.
#[derive(Debug, Clone)]
pub struct XKernel {
    atoms: Vec<f64>,
    coef: Vec<Complex64>,
}

impl XKernel {
    pub fn new(model: &SpectralModel) -> Self {
        let atoms = model.atoms().to_vec();
        let lead: Complex64 = atoms
            .iter()
            .zip(&model.overlaps)
            .map(|(&x, cj)| cj.norm_sqr() * (x - model.w))
            .sum();
        let coef = atoms
            .iter()
            .zip(&model.overlaps)
            .map(|(&x, cj)| cj.conj() * (x - model.w) / lead)
            .collect();
        Self { atoms, coef }
    }

    fn basis_value(&self, j: usize, z: Complex64) -> Complex64 {
        let mut p = self.coef[j];
        for (k, &x) in self.atoms.iter().enumerate() {
            if k != j {
                p *= z - x;
            }
        }
        p
    }

    pub fn eval(&self, x: Complex64, y: Complex64) -> Complex64 {
        (0..self.atoms.len())
            .map(|j| self.basis_value(j, x) * self.basis_value(j, y).conj())
            .sum()
    }
}

/// `(A, B)` with `K^𝒳(x,y) = (A(x) conj B(y) - B(x) conj A(y))/(x - y)`,
/// held by their values at Chebyshev nodes spanning `U`.
#[derive(Debug, Clone)]
pub struct ExtractedPair {
    pub a: Interpolant,
    pub b: Interpolant,
    pub probes: (f64, f64),
    /// Max relative residual of the representation on the validation grid.
    pub residual: f64,
}

impl ExtractedPair {
    /// Pair given by monomial coefficients, sampled on `nodes`.
    pub fn from_coeffs(a: &[Complex64], b: &[Complex64], nodes: Vec<f64>) -> Self {
        Self {
            a: Interpolant::from_fn(nodes.clone(), |x| poly::eval(a, c(x, 0.0))),
            b: Interpolant::from_fn(nodes, |x| poly::eval(b, c(x, 0.0))),
            probes: (f64::NAN, f64::NAN),
            residual: f64::NAN,
        }
    }
}

fn integrable_residual(xk: &XKernel, a: &Interpolant, b: &Interpolant, grid: &[f64]) -> f64 {
    let vals: Vec<(Complex64, Complex64, Complex64, Complex64)> = grid
        .iter()
        .map(|&x| {
            let (av, ad) = a.eval_with_derivative(c(x, 0.0));
            let (bv, bd) = b.eval_with_derivative(c(x, 0.0));
            (av, ad, bv, bd)
        })
        .collect();
    let diag: Vec<f64> = grid.iter().map(|&x| xk.eval(c(x, 0.0), c(x, 0.0)).re).collect();
    let mut worst: f64 = 0.0;
    for (i, &x) in grid.iter().enumerate() {
        for (j, &y) in grid.iter().enumerate().skip(i) {
            let k = xk.eval(c(x, 0.0), c(y, 0.0));
            let model = if i == j {
                let (av, ad, bv, bd) = vals[i];
                ad * bv.conj() - bd * av.conj()
            } else {
                let (ax, _, bx, _) = vals[i];
                let (ay, _, by, _) = vals[j];
                (ax * by.conj() - bx * ay.conj()) / (x - y)
            };
            let floor = 1e-6 * (diag[i] * diag[j]).abs().sqrt();
            worst = worst.max((k - model).norm() / k.norm().max(floor).max(f64::MIN_POSITIVE));
        }
    }
    worst
}

fn column_condition(a: &[Complex64], b: &[Complex64]) -> f64 {
    let len = a.len().max(b.len());
    let get = |p: &[Complex64], i: usize| p.get(i).copied().unwrap_or(c(0.0, 0.0));
    let m = DMatrix::from_fn(len, 2, |i, j| if j == 0 { get(a, i) } else { get(b, i) });
    let na = m.column(0).norm();
    let nb = m.column(1).norm();
    if na == 0.0 || nb == 0.0 {
        return f64::INFINITY;
    }
    let mut m = m;
    m.column_mut(0).scale_mut(1.0 / na);
    m.column_mut(1).scale_mut(1.0 / nb);
    let s = m.singular_values();
    s.max() / s.min()
}

/// `n + 1` Chebyshev nodes on the hull of `points` widened by a tenth.
fn interpolation_nodes(points: &[f64], count: usize) -> Vec<f64> {
    let lo = points.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo).max(1.0);
    poly::chebyshev_nodes(lo - pad, hi + pad, count)
}

/// Solves the integrable representation from the sections at two probe
/// points: `A = (· - y₁)K_{y₁}` and `B = -(· - y₂)K_{y₂} / conj A(y₂)`, so
/// that `A(y₁) = B(y₂) = 0` and `B(y₁) = 1`. Every well-conditioned probe
/// pair is scored on the validation grid and the best one is kept; ties go
/// to the pair of larger kernel diagonals.
pub fn extract_ab(xk: &XKernel, candidates: &[f64], validation: &[f64]) -> Result<ExtractedPair> {
    let nodes = interpolation_nodes(candidates, xk.atoms.len() + 1);
    let mut order: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&y| (y, xk.eval(c(y, 0.0), c(y, 0.0)).re))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let sections: Vec<Interpolant> = order
        .iter()
        .map(|&(y, _)| Interpolant::from_fn(nodes.clone(), |x| (x - y) * xk.eval(c(x, 0.0), c(y, 0.0))))
        .collect();
    let mut best: Option<ExtractedPair> = None;
    for i in 0..order.len() {
        for j in (i + 1)..order.len() {
            let (y1, d1) = order[i];
            let (y2, d2) = order[j];
            let k12 = xk.eval(c(y1, 0.0), c(y2, 0.0));
            if k12.norm() < 1e-8 * (d1 * d2).abs().sqrt() {
                continue;
            }
            let (f1, f2) = (&sections[i], &sections[j]);
            if column_condition(f1.values(), f2.values()) > PROBE_COND {
                continue;
            }
            let a_y2 = ((y2 - y1) * k12.conj()).conj();
            let b = f2.map_values(|v| -v / a_y2);
            let residual = integrable_residual(xk, f1, &b, validation);
            if best.as_ref().is_none_or(|p| residual < p.residual) {
                best = Some(ExtractedPair {
                    a: f1.clone(),
                    b,
                    probes: (y1, y2),
                    residual,
                });
            }
        }
    }
    let pair = best.ok_or(KreinError::Probe)?;
    if pair.residual > INTEGRABLE_TOL {
        return Err(KreinError::Integrable(pair.residual));
    }
    Ok(pair)
}

/// `Ω` and the real pair `(A^κ, B^κ) = (ΩA, ΩB)`.
#[derive(Debug, Clone)]
pub struct Symmetrized {
    pub omega: Complex64,
    pub nodes: Vec<f64>,
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    /// Monomial coefficients, lowest degree first.
    pub a_coeffs: Vec<f64>,
    pub b_coeffs: Vec<f64>,
    /// Largest discarded imaginary part relative to the largest value.
    pub imag_residual: f64,
    /// Largest distance between a zero of `A` and the conjugate of its match.
    pub conjugation_mismatch: f64,
}

fn conjugation_mismatch(roots: &[Complex64]) -> f64 {
    let mut used = vec![false; roots.len()];
    let mut worst: f64 = 0.0;
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let target = roots[i].conj();
        let (j, d) = (0..roots.len())
            .filter(|&j| !used[j])
            .map(|j| (j, (roots[j] - target).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("i itself is unused");
        used[i] = true;
        used[j] = true;
        worst = worst.max(d / roots[i].norm().max(1.0));
    }
    worst
}

fn trimmed(p: CPoly) -> Result<CPoly> {
    let deg = poly::degree(&p, 1e-13).ok_or(KreinError::Collinear)?;
    Ok(p[..=deg].to_vec())
}

/// In the polynomial case `A* = (c̄/c)·A` with `c` the leading coefficient of
/// `A`, so `Ω = √(c̄/c)` (principal branch).
pub fn omega_symmetrize(pair: &ExtractedPair) -> Result<Symmetrized> {
    if column_condition(pair.a.values(), pair.b.values()) > 1e12 {
        return Err(KreinError::Collinear);
    }
    let a = trimmed(pair.a.to_monomial())?;
    let b = trimmed(pair.b.to_monomial())?;
    let ra = poly::roots(&a).ok_or(KreinError::Roots)?;
    let rb = poly::roots(&b).ok_or(KreinError::Roots)?;
    for za in &ra {
        for zb in &rb {
            if (za - zb).norm() <= COMMON_ZERO_TOL * za.norm().max(1.0) {
                return Err(KreinError::CommonZero { re: za.re, im: za.im });
            }
        }
    }
    let mismatch = conjugation_mismatch(&ra);
    if mismatch > 1e-6 {
        return Err(KreinError::NotConjugateClosed(mismatch));
    }
    let lead = a[a.len() - 1];
    let omega = (lead.conj() / lead).sqrt();
    let ak = pair.a.map_values(|v| v * omega);
    let bk = pair.b.map_values(|v| v * omega);
    let all = || ak.values().iter().chain(bk.values());
    let scale = all().fold(0.0f64, |m, v| m.max(v.norm()));
    let imag = all().fold(0.0f64, |m, v| m.max(v.im.abs())) / scale;
    if imag > REAL_COEFF_TOL {
        return Err(KreinError::NotReal(imag));
    }
    let re = |p: &Interpolant| p.values().iter().map(|v| v.re).collect::<Vec<f64>>();
    let nodes = pair.a.nodes().to_vec();
    let a_values = re(&ak);
    let b_values = re(&bk);
    let real_coeffs = |vals: &[f64]| -> Vec<f64> {
        let it = Interpolant::new(nodes.clone(), vals.iter().map(|&v| c(v, 0.0)).collect());
        let p = it.to_monomial();
        let deg = poly::degree(&p, 1e-13).unwrap_or(0);
        p[..=deg].iter().map(|v| v.re).collect()
    };
    Ok(Symmetrized {
        omega,
        a_coeffs: real_coeffs(&a_values),
        b_coeffs: real_coeffs(&b_values),
        nodes,
        a_values,
        b_values,
        imag_residual: imag,
        conjugation_mismatch: mismatch,
    })
}

/// `E`, `Φ` and the checks on them.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub e: HermiteBiehler,
    pub phi: Multiplier,
    pub hb: HbReport,
    pub factorization_residual: f64,
    /// Largest `|Im Φ|/|Φ|` after the phase normalization.
    pub phase_residual: f64,
}

/// `E = A^κ + iB^κ` and `Φ = ξ/(RΩ)` on `U`, normalized so `Φ(t₁) > 0`.
pub fn assemble_e_phi(
    space: &FiniteRankSpace,
    xi: &DVector<Complex64>,
    zeros: &[Zero],
    sym: &Symmetrized,
) -> Result<Assembled> {
    let e = HermiteBiehler::new(
        RealEntireFunction::interpolated(sym.nodes.clone(), sym.a_values.clone()),
        RealEntireFunction::interpolated(sym.nodes.clone(), sym.b_values.clone()),
    );
    let hb = debranges::hb_check(&e, &debranges::default_upper_samples())?;
    if !hb.pass {
        return Err(KreinError::NotHermiteBiehler(hb.min_margin));
    }
    let xv = space.values(xi.as_slice());
    let raw: Vec<Complex64> = xv
        .iter()
        .zip(&space.points)
        .map(|(x, &t)| x / (eval_r(zeros, c(t, 0.0)) * sym.omega))
        .collect();
    let phase = raw[0].conj() / raw[0].norm();
    let mut phase_residual: f64 = 0.0;
    let mut pairs = Vec::with_capacity(raw.len());
    for (v, &t) in raw.iter().zip(&space.points) {
        let v = v * phase;
        phase_residual = phase_residual.max(v.im.abs() / v.norm());
        pairs.push((t, v.re));
    }
    if phase_residual > 1e-9 {
        return Err(KreinError::MultiplierPhase(phase_residual));
    }
    let phi = Multiplier::from_values(pairs);
    let kh = space.kernel_matrix();
    let index: HashMap<u64, usize> = space
        .points
        .iter()
        .enumerate()
        .map(|(i, t)| (t.to_bits(), i))
        .collect();
    let kernel = |x: f64, y: f64| -> debranges::Result<f64> {
        match (index.get(&x.to_bits()), index.get(&y.to_bits())) {
            (Some(&i), Some(&j)) => Ok(kh[(i, j)]),
            _ => Err(DebrangesError::Kernel {
                x,
                y,
                reason: "not a point of U".into(),
            }),
        }
    };
    let fac = debranges::factorization_check(kernel, &phi, &e, &space.points, false)?;
    if fac.max_relative_residual > FACTORIZATION_TOL {
        return Err(KreinError::Factorization(fac.max_relative_residual));
    }
    Ok(Assembled {
        e,
        phi,
        hb,
        factorization_residual: fac.max_relative_residual,
        phase_residual,
    })
}

/// Least-squares residual of dividing `u = f - α h ∈ X` (with `u(z) = 0`) by
/// `(· - z)` inside `X`, relative to the size of `u` on the sample set.
pub fn division_transport_check(
    model: &SpectralModel,
    f: &[Complex64],
    h: &[Complex64],
    z: Complex64,
    samples: &[Complex64],
) -> Result<f64> {
    let n = model.xi.len();
    let hz = model.transform_raw(h, z);
    if hz.norm() == 0.0 {
        return Err(KreinError::Argument("h_ξ vanishes at z".into()));
    }
    let alpha = model.transform_raw(f, z) / hz;
    let u: Vec<Complex64> = f.iter().zip(h).map(|(a, b)| a - alpha * b).collect();
    let rows = samples.len();
    let mut mat = DMatrix::<Complex64>::zeros(rows, n);
    let mut rhs = DVector::<Complex64>::zeros(rows);
    let mut unit = vec![c(0.0, 0.0); n];
    for (r, &lam) in samples.iter().enumerate() {
        rhs[r] = model.transform_raw(&u, lam);
        for k in 0..n {
            unit[k] = c(1.0, 0.0);
            mat[(r, k)] = model.transform_raw(&unit, lam) * (lam - z);
            unit[k] = c(0.0, 0.0);
        }
    }
    let svd = linalg::svd(&mat).ok_or(KreinError::Eigensolver)?;
    let eps = 1e-14 * svd.singular_values.max();
    let d = svd.solve(&rhs, eps);
    let res = (&rhs - &mat * d).norm();
    Ok(res / rhs.norm().max(f64::MIN_POSITIVE))
}

/// Max relative difference of `f_ξ` computed from two extensions, over the
/// unit coordinate vectors and the given `λ`.
pub fn extension_independence(a: &SpectralModel, b: &SpectralModel, lambdas: &[Complex64]) -> f64 {
    let n = a.xi.len();
    let mut worst: f64 = 0.0;
    let mut unit = vec![c(0.0, 0.0); n];
    for k in 0..n {
        unit[k] = c(1.0, 0.0);
        for &lam in lambdas {
            let va = a.transform_raw(&unit, lam);
            let vb = b.transform_raw(&unit, lam);
            worst = worst.max((va - vb).norm() / va.norm().max(vb.norm()).max(1.0));
        }
        unit[k] = c(0.0, 0.0);
    }
    worst
}

/// Pipeline stages, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    DivisionCheck,
    MultDomain,
    Deficiency,
    Extension,
    ZeroSet,
    Parseval,
    Integrable,
    Omega,
    Assemble,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::DivisionCheck => "division_check",
            Stage::MultDomain => "mult_domain",
            Stage::Deficiency => "deficiency_subspace",
            Stage::Extension => "selfadjoint_extension",
            Stage::ZeroSet => "find_S",
            Stage::Parseval => "parseval_check",
            Stage::Integrable => "extract_AB",
            Stage::Omega => "omega_symmetrize",
            Stage::Assemble => "assemble_E_phi",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("stage {stage}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    pub source: KreinError,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub w: Complex64,
    pub theta: f64,
    /// Offset of the companion extension used for the Parseval and
    /// extension-independence checks.
    pub companion_offset: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            w: c(0.0, 1.0),
            theta: 0.0,
            companion_offset: 1.0,
        }
    }
}

/// Everything the pipeline produced.
#[derive(Debug, Clone)]
pub struct KreinArtifacts {
    pub options: PipelineOptions,
    pub dim_domain: usize,
    pub model: SpectralModel,
    pub companion: SpectralModel,
    pub zeros: Vec<Zero>,
    pub r: CPoly,
    pub pair: ExtractedPair,
    pub symmetrized: Symmetrized,
    pub assembled: Assembled,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub division: f64,
    pub symmetry: f64,
    pub psi_at_w: f64,
    pub total_mass: f64,
    pub extension_independence: f64,
    pub parseval: f64,
    pub integrable: f64,
    pub omega_imag: f64,
    pub phase: f64,
    pub factorization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CValue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for CValue {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

/// JSON shape of a successful run.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "dimD")]
    pub dim_d: usize,
    pub w: CValue,
    pub theta: f64,
    pub xi: Vec<CValue>,
    pub spectral_measure: SpectralMeasure,
    #[serde(rename = "S")]
    pub s: Vec<Zero>,
    #[serde(rename = "R_coeffs")]
    pub r_coeffs: Vec<CValue>,
    pub omega: CValue,
    #[serde(rename = "A_coeffs")]
    pub a_coeffs: Vec<f64>,
    #[serde(rename = "B_coeffs")]
    pub b_coeffs: Vec<f64>,
    pub probes: [f64; 2],
    pub points: Vec<f64>,
    pub phi: Vec<f64>,
    pub hb: HbReport,
    pub residuals: Residuals,
    pub pass: bool,
}

impl KreinArtifacts {
    pub fn e(&self) -> &HermiteBiehler {
        &self.assembled.e
    }

    pub fn phi(&self) -> &Multiplier {
        &self.assembled.phi
    }

    pub fn report(&self, space: &FiniteRankSpace) -> PipelineReport {
        let phi = space
            .points()
            .iter()
            .map(|&t| self.assembled.phi.eval(t).unwrap_or(f64::NAN))
            .collect();
        PipelineReport {
            m: space.len(),
            n: space.dim(),
            dim_d: self.dim_domain,
            w: self.options.w.into(),
            theta: self.options.theta,
            xi: self.model.xi.iter().map(|&z| z.into()).collect(),
            spectral_measure: self.model.measure(),
            s: self.zeros.clone(),
            r_coeffs: self.r.iter().map(|&z| z.into()).collect(),
            omega: self.symmetrized.omega.into(),
            a_coeffs: self.symmetrized.a_coeffs.clone(),
            b_coeffs: self.symmetrized.b_coeffs.clone(),
            probes: [self.pair.probes.0, self.pair.probes.1],
            points: space.points().to_vec(),
            phi,
            hb: self.assembled.hb.clone(),
            residuals: self.residuals,
            pass: true,
        }
    }
}

/// Deterministic off-axis sample points around the support of `U`.
fn probe_lambdas(space: &FiniteRankSpace, zeros: &[Zero], count: usize) -> Vec<Complex64> {
    let lo = space.points.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = space.points.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut out = Vec::with_capacity(count);
    let mut k = 0usize;
    while out.len() < count && k < 10 * count {
        let s = (k as f64 + 0.5) / count as f64;
        let im = if k % 2 == 0 { 0.37 + 0.11 * (k % 5) as f64 } else { -0.29 - 0.13 * (k % 3) as f64 };
        let lam = c(lo + (hi - lo) * (s % 1.0), im);
        if zeros.iter().all(|z| (lam - z.z()).norm() > 1e-3) {
            out.push(lam);
        }
        k += 1;
    }
    out
}

fn validation_grid(points: &[f64]) -> Vec<f64> {
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(2 * sorted.len());
    for (i, &t) in sorted.iter().enumerate() {
        out.push(t);
        if i + 1 < sorted.len() {
            out.push(0.5 * (t + sorted[i + 1]));
        }
    }
    out
}

/// Runs every stage and returns the artifacts, or the first failing stage.
pub fn run_pipeline(
    space: &FiniteRankSpace,
    options: &PipelineOptions,
) -> std::result::Result<KreinArtifacts, PipelineError> {
    let n = space.dim();
    let w = options.w;

    let division = division_property(space).at(Stage::DivisionCheck)?;

    let op = mult_domain(space).at(Stage::MultDomain)?;
    if op.dim_domain() != n - 1 {
        return Err(PipelineError {
            stage: Stage::MultDomain,
            source: KreinError::DomainDimension {
                dim: op.dim_domain(),
                expected: n - 1,
            },
        });
    }

    let xi = deficiency_subspace(space, &op, w).at(Stage::Deficiency)?;
    deficiency_vector(&op, w.conj()).at(Stage::Deficiency)?;

    let ext = selfadjoint_extension(&op, options.theta).at(Stage::Extension)?;
    let ext2 =
        selfadjoint_extension(&op, options.theta + options.companion_offset).at(Stage::Extension)?;
    if !interlace(ext.eigenvalues.as_slice(), ext2.eigenvalues.as_slice()) {
        return Err(PipelineError {
            stage: Stage::Extension,
            source: KreinError::Interlacing,
        });
    }
    let model = SpectralModel::new(xi.clone(), w, ext);
    let companion = SpectralModel::new(xi.clone(), w, ext2);

    let zeros = find_s(&model).at(Stage::ZeroSet)?;
    let psi_at_w = (model.psi(w) - 1.0).norm();
    let total_mass = (model.measure().total_mass() - 1.0).abs();
    let lambdas = probe_lambdas(space, &zeros, 20);
    let ext_dep = extension_independence(&model, &companion, &lambdas);
    if ext_dep > EXTENSION_TOL {
        return Err(PipelineError {
            stage: Stage::ZeroSet,
            source: KreinError::ExtensionDependence(ext_dep),
        });
    }
    let r = canonical_r(&zeros);

    let mut parseval: f64 = 0.0;
    let mut ek = vec![c(0.0, 0.0); n];
    let mut el = vec![c(0.0, 0.0); n];
    for k in 0..n {
        ek[k] = c(1.0, 0.0);
        for l in 0..n {
            el[l] = c(1.0, 0.0);
            parseval = parseval.max(parseval_check(&model, &companion, &ek, &el));
            el[l] = c(0.0, 0.0);
        }
        ek[k] = c(0.0, 0.0);
    }
    if parseval > PARSEVAL_TOL {
        return Err(PipelineError {
            stage: Stage::Parseval,
            source: KreinError::Parseval(parseval),
        });
    }

    let xk = XKernel::new(&model);
    let pair = extract_ab(&xk, space.points(), &validation_grid(space.points())).at(Stage::Integrable)?;
    let symmetrized = omega_symmetrize(&pair).at(Stage::Omega)?;
    let assembled = assemble_e_phi(space, &xi, &zeros, &symmetrized).at(Stage::Assemble)?;

    let residuals = Residuals {
        division,
        symmetry: op.symmetry_residual,
        psi_at_w,
        total_mass,
        extension_independence: ext_dep,
        parseval,
        integrable: pair.residual,
        omega_imag: symmetrized.imag_residual,
        phase: assembled.phase_residual,
        factorization: assembled.factorization_residual,
    };
    Ok(KreinArtifacts {
        options: *options,
        dim_domain: op.dim_domain(),
        model,
        companion,
        zeros,
        r,
        pair,
        symmetrized,
        assembled,
        residuals,
    })
}

/// Polynomial space with `m` jittered points in `[-3, 3]` and weights in
/// `[0.5, 2]`, drawn from the given seed.
pub fn random_polynomial_space_with(seed: u64, m: usize, n: usize) -> Result<FiniteRankSpace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<f64> = (0..m)
        .map(|i| -3.0 + 6.0 * (i as f64 + 0.5 + rng.random_range(-0.3..0.3)) / m as f64)
        .collect();
    let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    make_polynomial_space(&points, &weights, n)
}

/// Random polynomial space with `3 ≤ m ≤ 16` and `2 ≤ n ≤ min(12, m - 1)`.
pub fn random_polynomial_space(seed: u64) -> Result<FiniteRankSpace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let m = rng.random_range(3..=16usize);
    let n = rng.random_range(2..=12usize.min(m - 1));
    random_polynomial_space_with(seed, m, n)
}

/// Values of the transform for the discrete sine space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteSineTransform {
    /// `(w̄-λ)/(2 sin b(w̄-λ)) · √(2π)(Ŵf)(λ)` with the transform in closed form.
    pub closed_form: Complex64,
    /// The same expression with `(Ŵf)(λ)` from adaptive quadrature.
    pub quadrature: Complex64,
    /// `R f_ξ = (1/b)√(π/2)(Ŵf)(λ)`.
    pub r_normalized: Complex64,
}

// ∫_{-b}^{b} e^{iax} dx = 2 sin(ab)/a
fn band_integral(a: Complex64, b: f64) -> Complex64 {
    let u = a * b;
    if u.norm() < 1e-4 {
        let u2 = u * u;
        return 2.0 * b * (1.0 - u2 / 6.0 + u2 * u2 / 120.0);
    }
    2.0 * u.sin() / a
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_GAUSS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let centre = f(mid);
    let mut kron = centre * GK_KRONROD[7];
    let mut gauss = centre * GK_GAUSS[3];
    for i in 0..7 {
        let dx = half * GK_NODES[i];
        let s = f(mid - dx) + f(mid + dx);
        kron += s * GK_KRONROD[i];
        if i % 2 == 1 {
            gauss += s * GK_GAUSS[i / 2];
        }
    }
    (kron * half, ((kron - gauss) * half).norm())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of a complex integrand.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: f64) -> Result<Complex64> {
    let mut stack = vec![(a, b, 0u32)];
    let mut total = c(0.0, 0.0);
    let (whole, _) = gk15(&f, a, b);
    let scale = whole.norm().max(f64::MIN_POSITIVE);
    let mut evaluations = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        evaluations += 1;
        if err <= tol * scale * (hi - lo) / (b - a) || err <= 1e-15 * v.norm() {
            total += v;
        } else if depth >= 40 || evaluations > 20_000 {
            return Err(KreinError::Quadrature);
        } else {
            let m = 0.5 * (lo + hi);
            stack.push((m, hi, depth + 1));
            stack.push((lo, m, depth + 1));
        }
    }
    Ok(total)
}

/// `f_ξ(λ)` for the discrete sine space with band `b` and base point `w`.
/// The sequence `f` is given by its finitely many nonzero terms; the
/// function of `H` it stands for is its projection `Kf`, whose image under
/// `Wa = Σ a_n e^{inx}` is the series restricted to `[-b, b]`.
pub fn discrete_sine_fxi(
    b: f64,
    w: Complex64,
    f: &[(i64, f64)],
    lambda: Complex64,
) -> Result<DiscreteSineTransform> {
    if !(b > 0.0 && b < PI / 2.0) {
        return Err(KreinError::Argument(format!("band b = {b} outside (0, pi/2)")));
    }
    if w.im == 0.0 {
        return Err(KreinError::Argument("base point must be nonreal".into()));
    }
    let u = (w.conj() - lambda) * b;
    let k = (u.re / PI).round();
    if k != 0.0 && (u - c(k * PI, 0.0)).norm() < 1e-10 {
        let pole = w.conj() - c(k * PI / b, 0.0);
        return Err(KreinError::Pole {
            re: pole.re,
            im: pole.im,
        });
    }
    // (w̄-λ)/(2 sin(b(w̄-λ))) = u/(2b sin u)
    let factor = if u.norm() < 1e-6 {
        (1.0 + u * u / 6.0) / (2.0 * b)
    } else {
        u / (2.0 * b * u.sin())
    };
    let sqrt_2pi = (2.0 * PI).sqrt();
    let closed_hat: Complex64 =
        f.iter().map(|&(n, a)| a * band_integral(c(n as f64, 0.0) - lambda, b)).sum::<Complex64>() / sqrt_2pi;
    let integrand = |x: f64| -> Complex64 {
        let series: Complex64 = f.iter().map(|&(n, a)| a * c(0.0, n as f64 * x).exp()).sum();
        series * (c(0.0, -x) * lambda).exp()
    };
    let quad_hat = integrate(integrand, -b, b, 1e-13)? / sqrt_2pi;
    Ok(DiscreteSineTransform {
        closed_form: factor * sqrt_2pi * closed_hat,
        quadrature: factor * sqrt_2pi * quad_hat,
        r_normalized: closed_hat * (PI / 2.0).sqrt() / b,
    })
}

/// The deficiency sequence `ξ_n = sin(b(w̄-n))/(π(w̄-n))`, the Fourier
/// coefficients of `e^{iw̄x}χ_{[-b,b]}`.
pub fn discrete_sine_xi(b: f64, w: Complex64, n: i64) -> Complex64 {
    let a = w.conj() - n as f64;
    band_integral(a, b) / (2.0 * PI)
}

/// `(Kf)(m) = Σ_n K(m,n) f_n` for the discrete sine kernel.
pub fn discrete_sine_projection(b: f64, f: &[(i64, f64)], m: i64) -> f64 {
    f.iter()
        .map(|&(n, a)| {
            let d = (m - n) as f64;
            let k = if m == n { b / PI } else { (b * d).sin() / (PI * d) };
            a * k
        })
        .sum()
}
