//! Determinantal point processes on finite windows: exact sampling from a
//! kernel truncation and Monte-Carlo checks of
//! `E ∏ g(x) = det(I + (g - 1)K)` and of the first intensity.

use std::collections::HashMap;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{self, KernelError, KernelMatrix, KernelSpec};
use crate::linalg;

/// Eigenvalues this far outside `[0, 1]` are clamped; anything further is
/// rejected.
pub const CLAMP_TOL: f64 = 1e-10;
/// Norm of a newly chosen row, after projection, below which deflation is
/// declared broken down.
pub const DEFLATION_TOL: f64 = 1e-12;
pub const MIN_TRIALS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DppError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("eigenvalue {0} outside [0, 1] beyond the clamp tolerance")]
    Contraction(f64),
    #[error("empty window")]
    Window,
    #[error("deflation broke down in trial {trial}: residual {residual:e} with {remaining} selections left")]
    Deflation {
        trial: u64,
        residual: f64,
        remaining: usize,
    },
    #[error("{got} trials, at least {min} required")]
    Trials { got: usize, min: usize },
    #[error("test function multiplier {0} must be finite and nonnegative")]
    Multiplier(f64),
    #[error("test function support must be bounded")]
    Support,
    #[error("symmetric eigensolver failed")]
    Eigensolver,
}

pub type Result<T> = std::result::Result<T, DppError>;

/// A sample: window points in ascending order, with the generator seed and
/// the trial substream that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<u64>,
    pub points: Vec<f64>,
}

impl PointConfiguration {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

pub fn write_json_lines<W: Write>(samples: &[PointConfiguration], mut out: W) -> io::Result<()> {
    for s in samples {
        writeln!(out, "{}", s.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Points(Vec<f64>),
    /// Closed interval.
    Interval(f64, f64),
}

impl Support {
    fn contains(&self, x: f64) -> bool {
        match self {
            Support::Points(ps) => ps.contains(&x),
            Support::Interval(lo, hi) => *lo <= x && x <= *hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub support: Support,
    pub multiplier: f64,
}

/// `g = 1` off the bumps; on overlapping bumps the multipliers multiply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub bumps: Vec<Bump>,
}

impl TestFunction {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn new(bumps: Vec<Bump>) -> Result<Self> {
        for b in &bumps {
            if !b.multiplier.is_finite() || b.multiplier < 0.0 {
                return Err(DppError::Multiplier(b.multiplier));
            }
            if let Support::Interval(lo, hi) = b.support {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(DppError::Support);
                }
            }
            if let Support::Points(ps) = &b.support {
                if ps.iter().any(|p| !p.is_finite()) {
                    return Err(DppError::Support);
                }
            }
        }
        Ok(Self { bumps })
    }

    /// `1 + (multiplier - 1)·χ_[lo, hi]`.
    pub fn interval(lo: f64, hi: f64, multiplier: f64) -> Result<Self> {
        Self::new(vec![Bump {
            support: Support::Interval(lo, hi),
            multiplier,
        }])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.bumps
            .iter()
            .filter(|b| b.support.contains(x))
            .map(|b| b.multiplier)
            .product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// The integers `-n..=n`.
    Integers(u32),
    Grid(Vec<f64>),
}

impl Window {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Window::Integers(n) => (-(*n as i64)..=*n as i64).map(|k| k as f64).collect(),
            Window::Grid(ps) => ps.clone(),
        }
    }
}

/// A kernel matrix whose spectrum lies in `[0, 1]`, with its eigenpairs.
#[derive(Debug, Clone)]
pub struct DppKernel {
    pub matrix: KernelMatrix,
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    /// Largest distance an eigenvalue was moved by clamping.
    pub clamped: f64,
}

impl DppKernel {
    pub fn new(matrix: KernelMatrix) -> Result<Self> {
        if matrix.is_empty() {
            return Err(DppError::Window);
        }
        let (mut vals, vecs) = linalg::sym_eigen_sorted(&matrix.entries).ok_or(DppError::Eigensolver)?;
        let mut clamped: f64 = 0.0;
        for v in vals.iter_mut() {
            if *v < -CLAMP_TOL || *v > 1.0 + CLAMP_TOL {
                return Err(DppError::Contraction(*v));
            }
            let c = v.clamp(0.0, 1.0);
            clamped = clamped.max((c - *v).abs());
            *v = c;
        }
        let matrix = if clamped > 0.0 {
            let entries = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
            KernelMatrix {
                entries: (&entries + entries.transpose()) * 0.5,
                ..matrix
            }
        } else {
            matrix
        };
        Ok(Self {
            matrix,
            eigenvalues: vals,
            eigenvectors: vecs,
            clamped,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.matrix.points
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    /// True when every eigenvalue is within the clamp tolerance of 0 or 1.
    pub fn is_projection(&self) -> bool {
        self.eigenvalues
            .iter()
            .all(|&v| v <= CLAMP_TOL || v >= 1.0 - CLAMP_TOL)
    }
}

/// Kernel matrix of `spec` on the window points.
pub fn truncate(spec: &KernelSpec, window: &Window) -> Result<DppKernel> {
    let points = window.points();
    if points.is_empty() {
        return Err(DppError::Window);
    }
    DppKernel::new(kernels::kernel_grid(spec, &points)?)
}

fn substream(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// One sample on the given substream of `seed`: eigenvectors are kept
/// independently with probability equal to their eigenvalue, then points are
/// chosen one at a time with probability proportional to the squared norm of
/// their frame row after projecting off the rows already chosen. The chosen
/// rows are orthonormalized by Gram–Schmidt as they come in.
pub fn dpp_sample_stream(k: &DppKernel, seed: u64, trial: u64) -> Result<PointConfiguration> {
    let mut rng = substream(seed, trial);
    let n = k.len();
    let kept: Vec<usize> = (0..n)
        .filter(|&j| {
            let u: f64 = rng.random();
            u < k.eigenvalues[j]
        })
        .collect();
    let rank = kept.len();
    let frame = DMatrix::from_fn(n, rank, |i, c| k.eigenvectors[(i, kept[c])]);
    let mut resid: Vec<f64> = (0..n).map(|i| frame.row(i).norm_squared()).collect();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(rank);
    let mut chosen = Vec::with_capacity(rank);
    for step in 0..rank {
        let total: f64 = resid.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &r) in resid.iter().enumerate() {
            if r > 0.0 {
                pick = Some(i);
                if target < r {
                    break;
                }
                target -= r;
            }
        }
        let breakdown = |residual| DppError::Deflation {
            trial,
            residual,
            remaining: rank - step,
        };
        let pick = pick.ok_or(breakdown(0.0))?;
        let mut u = frame.row(pick).transpose();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&u);
                u.axpy(-proj, b, 1.0);
            }
        }
        let norm = u.norm();
        if norm < DEFLATION_TOL {
            return Err(breakdown(norm));
        }
        u /= norm;
        let along = &frame * &u;
        for (r, a) in resid.iter_mut().zip(along.iter()) {
            *r = (*r - a * a).max(0.0);
        }
        resid[pick] = 0.0;
        basis.push(u);
        chosen.push(pick);
    }
    chosen.sort_unstable();
    Ok(PointConfiguration {
        seed,
        trial: Some(trial),
        points: chosen.into_iter().map(|i| k.points()[i]).collect(),
    })
}

pub fn dpp_sample(k: &DppKernel, seed: u64) -> Result<PointConfiguration> {
    dpp_sample_stream(k, seed, 0)
}

/// `trials` samples on substreams `0..trials`, in trial order.
pub fn sample_many(k: &DppKernel, seed: u64, trials: usize) -> Result<Vec<PointConfiguration>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| dpp_sample_stream(k, seed, t))
        .collect()
}

/// `det(I + diag(g - 1)·K)` by LU with partial pivoting.
pub fn expectation_product(k: &DppKernel, g: &TestFunction) -> f64 {
    let n = k.len();
    let d: Vec<f64> = k.points().iter().map(|&x| g.eval(x) - 1.0).collect();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id + d[i] * k.matrix.entries[(i, j)]
    });
    m.lu().determinant()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

fn mean_and_stderr(values: &[f64]) -> McEstimate {
    let n = values.len();
    let mean = linalg::kahan_sum(values.iter().copied()) / n as f64;
    let ss = linalg::kahan_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
    McEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        trials: n,
    }
}

fn check_trials(n: usize) -> Result<()> {
    if n < MIN_TRIALS {
        return Err(DppError::Trials { got: n, min: MIN_TRIALS });
    }
    Ok(())
}

/// Mean of `∏_{x ∈ sample} g(x)` over given samples.
pub fn mc_from_samples(samples: &[PointConfiguration], g: &TestFunction) -> Result<McEstimate> {
    check_trials(samples.len())?;
    let values: Vec<f64> = samples
        .iter()
        .map(|s| s.points.iter().map(|&x| g.eval(x)).product())
        .collect();
    Ok(mean_and_stderr(&values))
}

pub fn mc_estimate(k: &DppKernel, g: &TestFunction, trials: usize, seed: u64) -> Result<McEstimate> {
    check_trials(trials)?;
    mc_from_samples(&sample_many(k, seed, trials)?, g)
}

/// Sample mean and standard error of the configuration size.
pub fn cardinality(samples: &[PointConfiguration]) -> McEstimate {
    let sizes: Vec<f64> = samples.iter().map(|s| s.len() as f64).collect();
    mean_and_stderr(&sizes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intensity {
    pub points: Vec<f64>,
    pub frequency: Vec<f64>,
    /// Binomial standard error `√(p(1-p)/trials)`.
    pub stderr: Vec<f64>,
    pub trials: usize,
}

/// Fraction of samples containing each window point.
pub fn empirical_intensity(samples: &[PointConfiguration], window: &[f64]) -> Result<Intensity> {
    check_trials(samples.len())?;
    let index: HashMap<u64, usize> = window
        .iter()
        .enumerate()
        .map(|(i, x)| (x.to_bits(), i))
        .collect();
    let mut counts = vec![0u64; window.len()];
    for s in samples {
        for x in &s.points {
            if let Some(&i) = index.get(&x.to_bits()) {
                counts[i] += 1;
            }
        }
    }
    let trials = samples.len();
    let frequency: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    let stderr = frequency
        .iter()
        .map(|&p| (p * (1.0 - p) / trials as f64).sqrt())
        .collect();
    Ok(Intensity {
        points: window.to_vec(),
        frequency,
        stderr,
        trials,
    })
}

/// The statistics report `{estimate, stderr, determinant, pass}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterminantReport {
    pub estimate: f64,
    pub stderr: f64,
    pub determinant: f64,
    pub pass: bool,
}

impl DeterminantReport {
    pub fn new(mc: McEstimate, determinant: f64) -> Self {
        Self {
            estimate: mc.mean,
            stderr: mc.stderr,
            determinant,
            pass: (mc.mean - determinant).abs() <= 3.0 * mc.stderr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn matrix(points: Vec<f64>, m: DMatrix<f64>) -> DppKernel {
        DppKernel::new(KernelMatrix::from_matrix(points, m).unwrap()).unwrap()
    }

    fn rank_one_third() -> DppKernel {
        matrix(vec![0.0, 1.0, 2.0], DMatrix::from_element(3, 3, 1.0 / 3.0))
    }

    #[test]
    fn zero_and_identity_kernels() {
        let pts: Vec<f64> = (0..5).map(f64::from).collect();
        let zero = matrix(pts.clone(), DMatrix::zeros(5, 5));
        let id = matrix(pts.clone(), DMatrix::identity(5, 5));
        for t in 0..20 {
            assert!(dpp_sample_stream(&zero, 3, t).unwrap().is_empty());
            assert_eq!(dpp_sample_stream(&id, 3, t).unwrap().points, pts);
        }
    }

    #[test]
    fn rank_one_draws_single_point() {
        let k = rank_one_third();
        let samples = sample_many(&k, 11, 3000).unwrap();
        assert!(samples.iter().all(|s| s.len() == 1));
        let freq = empirical_intensity(&samples, k.points()).unwrap();
        for (p, e) in freq.frequency.iter().zip(&freq.stderr) {
            assert!((p - 1.0 / 3.0).abs() <= 4.0 * e);
        }
    }

    #[test]
    fn rank_one_determinant_by_hand() {
        let k = rank_one_third();
        let g = TestFunction::new(vec![Bump {
            support: Support::Points(vec![0.0]),
            multiplier: 1.5,
        }])
        .unwrap();
        assert!((expectation_product(&k, &g) - (1.0 + 0.5 / 3.0)).abs() < 1e-15);
        assert_eq!(expectation_product(&k, &TestFunction::one()), 1.0);
    }

    #[test]
    fn hole_probability_of_projection() {
        let k = rank_one_third();
        let g = TestFunction::interval(-1.0, 3.0, 0.0).unwrap();
        assert!(expectation_product(&k, &g).abs() < 1e-15);
    }

    #[test]
    fn constant_one_has_zero_stderr() {
        let k = truncate(&KernelSpec::discrete_sine(PI / 3.0).unwrap(), &Window::Integers(4)).unwrap();
        let est = mc_estimate(&k, &TestFunction::one(), 1000, 1).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn single_point_window() {
        let k = truncate(&KernelSpec::discrete_sine(PI / 3.0).unwrap(), &Window::Integers(0)).unwrap();
        assert!((k.matrix.entries[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn too_few_trials() {
        let k = rank_one_third();
        assert!(matches!(
            mc_estimate(&k, &TestFunction::one(), 10, 0),
            Err(DppError::Trials { got: 10, .. })
        ));
    }

    #[test]
    fn non_contraction_is_rejected() {
        let pts = vec![0.0, 1.0];
        let m = KernelMatrix::from_matrix(pts, DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!(matches!(DppKernel::new(m), Err(DppError::Contraction(_))));
    }

    #[test]
    fn negative_multiplier_is_rejected() {
        assert_eq!(
            TestFunction::interval(0.0, 1.0, -0.5),
            Err(DppError::Multiplier(-0.5))
        );
    }

    #[test]
    fn json_line_shape() {
        let s = PointConfiguration {
            seed: 7,
            trial: None,
            points: vec![-1.0, 2.0],
        };
        assert_eq!(s.to_json_line(), r#"{"seed":7,"points":[-1.0,2.0]}"#);
    }
}
