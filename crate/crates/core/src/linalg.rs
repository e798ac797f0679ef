//! Dense decompositions. Storage is nalgebra throughout; SVD and the
//! symmetric eigensolver run in faer, whose results stay at rounding level
//! when singular values nearly coincide (nalgebra 0.35 can return factors
//! that reconstruct the input only to ~1e-9 there).

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::dd::Dd;

/// Scalars the decompositions accept: `f64` and `Complex64`.
pub trait Scalar: faer::traits::ComplexField + nalgebra::ComplexField<RealField = f64> + Copy {}
impl Scalar for f64 {}
impl Scalar for num_complex::Complex64 {}

fn to_faer<T: Scalar>(m: &DMatrix<T>) -> Mat<T> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer<T: Scalar>(m: faer::MatRef<'_, T>) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin singular value decomposition `m = u·diag(σ)·v_t`, `σ` nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd<T: Scalar> {
    pub u: DMatrix<T>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<T>,
}

impl<T: Scalar> Svd<T> {
    /// Least-squares solution with singular values `≤ eps` dropped.
    pub fn solve(&self, rhs: &DVector<T>, eps: f64) -> DVector<T> {
        let mut coef = self.u.adjoint() * rhs;
        for (c, &s) in coef.iter_mut().zip(self.singular_values.iter()) {
            *c = if s > eps { c.unscale(s) } else { T::zero() };
        }
        self.v_t.adjoint() * coef
    }
}

pub fn svd<T: Scalar>(m: &DMatrix<T>) -> Option<Svd<T>> {
    let dec = to_faer(m).thin_svd().ok()?;
    let s = dec.S().column_vector();
    Some(Svd {
        u: from_faer(dec.U()),
        singular_values: DVector::from_iterator(s.nrows(), (0..s.nrows()).map(|i| s[i].real())),
        v_t: from_faer(dec.V()).adjoint(),
    })
}

/// Eigen-decomposition of a real symmetric matrix with eigenvalues in
/// ascending order and matching eigenvector columns.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let eig = to_faer(m).self_adjoint_eigen(Side::Lower).ok()?;
    let s = eig.S().column_vector();
    let vals = DVector::from_iterator(n, (0..n).map(|i| s[i]));
    if vals.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((vals, from_faer(eig.U())))
}

/// Replaces each eigenvalue by the Rayleigh quotient `vᵀMv / vᵀv` of its
/// eigenvector, accumulated in double-double. The error becomes quadratic in
/// the eigenvector error, so the result is correctly rounded in practice.
pub fn refine_eigenvalues(m: &DMatrix<f64>, vecs: &DMatrix<f64>, vals: &mut DVector<f64>) {
    let n = m.nrows();
    for j in 0..n {
        let v = vecs.column(j);
        let mut num = Dd::ZERO;
        let mut den = Dd::ZERO;
        for a in 0..n {
            let va = Dd::from_f64(v[a]);
            den = den + va.mul_f64(v[a]);
            let mut row = Dd::ZERO;
            for b in 0..n {
                row = row + Dd::from_f64(m[(a, b)]).mul_f64(v[b]);
            }
            num = num + row.mul_f64(v[a]);
        }
        vals[j] = (num / den).to_f64();
    }
}

/// Kahan-compensated sum; the result depends only on the order of `xs`.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}
