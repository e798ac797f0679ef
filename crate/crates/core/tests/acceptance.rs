//! One pass/fail line per acceptance criterion, at the stated tolerances.
//! The test fails if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use dbkit::debranges::{self, HermiteBiehler, Multiplier};
use dbkit::dpp::{self, TestFunction, Window};
use dbkit::kernels::{self, KernelSpec};
use dbkit::krein::{self, KreinArtifacts, PipelineOptions};
use dbkit::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SUITE_SEEDS: u64 = 50;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

struct Line {
    id: u32,
    pass: bool,
    detail: String,
}

fn report(id: u32, pass: bool, detail: String) -> Line {
    println!("criterion {id}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    Line { id, pass, detail }
}

fn bessel_factorization() -> Line {
    let start = Instant::now();
    let grid = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0];
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for s in [-0.5, 0.0, 0.5, 1.0, 2.5] {
        let run = || -> Result<f64, String> {
            let e = debranges::bessel_hb(s).map_err(|e| e.to_string())?;
            let r = debranges::factorization_check(
                |x, y| {
                    kernels::bessel_eval(s, x, y).map_err(|e| debranges::DebrangesError::Kernel {
                        x,
                        y,
                        reason: e.to_string(),
                    })
                },
                &Multiplier::Power { exponent: s / 2.0 },
                &e,
                &grid,
                true,
            )
            .map_err(|e| e.to_string())?;
            Ok(r.max_relative_residual)
        };
        match run() {
            Ok(r) => worst = worst.max(r),
            Err(e) => errors.push(format!("s = {s}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = errors.is_empty() && worst <= 1e-9 && secs < 5.0;
    report(
        1,
        pass,
        format!("max residual {worst:.2e} <= 1e-9, {secs:.2} s < 5 s, errors {errors:?}"),
    )
}

fn continuous_sine_factorization() -> Line {
    let grid: Vec<f64> = (0..10).map(|k| -4.3 + 0.97 * k as f64).collect();
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for b in [1.0, PI] {
        let r = debranges::factorization_check(
            |x, y| {
                kernels::continuous_sine_eval(b, x, y).map_err(|e| debranges::DebrangesError::Kernel {
                    x,
                    y,
                    reason: e.to_string(),
                })
            },
            &Multiplier::Constant { value: 1.0 / PI.sqrt() },
            &HermiteBiehler::exponential(b),
            &grid,
            false,
        );
        match r {
            Ok(r) if r.c == 1.0 => worst = worst.max(r.max_relative_residual),
            Ok(r) => errors.push(format!("b = {b}: c = {}", r.c)),
            Err(e) => errors.push(format!("b = {b}: {e}")),
        }
    }
    let pass = errors.is_empty() && worst <= 1e-13;
    report(2, pass, format!("max residual {worst:.2e} <= 1e-13 with c = 1, errors {errors:?}"))
}

fn discrete_sine_krein() -> Line {
    let b = PI / 3.0;
    let w = c(0.0, 1.0);
    let sequences: Vec<Vec<(i64, f64)>> = vec![
        vec![(0, 1.0)],
        vec![(-2, 0.5), (3, -1.0)],
        vec![(-1, 1.0), (0, 2.0), (1, 1.0)],
        vec![(4, 0.25), (-5, 0.75), (7, -0.5), (0, 1.0)],
        (-6..=6).map(|n| (n, 1.0 / (1.0 + (n * n) as f64))).collect(),
    ];
    let lambdas: Vec<Complex64> = (0..20)
        .map(|k| {
            let t = k as f64;
            c(-7.0 + 0.73 * t, if k % 3 == 0 { 0.0 } else { 0.6 * ((k % 5) as f64 - 2.0) + 0.1 })
        })
        .collect();
    let mut quad_worst: f64 = 0.0;
    let mut interp_worst: f64 = 0.0;
    let mut errors = Vec::new();
    for f in &sequences {
        let mut values = Vec::with_capacity(lambdas.len());
        for &lam in &lambdas {
            match krein::discrete_sine_fxi(b, w, f, lam) {
                Ok(t) => values.push(t),
                Err(e) => errors.push(format!("lambda = {lam}: {e}")),
            }
        }
        // f_xi can vanish exactly (0.5δ₋₂ - δ₃ at λ = -7), so the relative
        // error is floored at 1e-6 of the largest value, as for kernels
        let scale = values.iter().map(|t| t.closed_form.norm()).fold(0.0, f64::max);
        for t in &values {
            let r = (t.closed_form - t.quadrature).norm() / t.closed_form.norm().max(1e-6 * scale).max(f64::MIN_POSITIVE);
            quad_worst = quad_worst.max(r);
        }
        let scale = (-10..=10)
            .map(|m| krein::discrete_sine_projection(b, f, m).abs())
            .fold(0.0, f64::max);
        for m in -10..=10i64 {
            match krein::discrete_sine_fxi(b, w, f, c(m as f64, 0.0)) {
                Ok(t) => {
                    let lhs = t.closed_form * krein::discrete_sine_xi(b, w, m);
                    let rhs = krein::discrete_sine_projection(b, f, m);
                    interp_worst = interp_worst.max((lhs - rhs).norm() / rhs.abs().max(scale));
                }
                Err(e) => errors.push(format!("m = {m}: {e}")),
            }
        }
    }
    let pass = errors.is_empty() && quad_worst <= 1e-8 && interp_worst <= 1e-8;
    report(
        3,
        pass,
        format!(
            "closed form vs quadrature {quad_worst:.2e} <= 1e-8, f_xi*xi = f at integers {interp_worst:.2e} <= 1e-8, errors {errors:?}"
        ),
    )
}

fn suite() -> Vec<(krein::FiniteRankSpace, Result<KreinArtifacts, krein::PipelineError>)> {
    (0..SUITE_SEEDS)
        .map(|seed| {
            let space = krein::random_polynomial_space(seed).expect("suite space");
            let art = krein::run_pipeline(&space, &PipelineOptions::default());
            (space, art)
        })
        .collect()
}

fn pipeline_end_to_end(suite: &[(krein::FiniteRankSpace, Result<KreinArtifacts, krein::PipelineError>)], secs: f64) -> Line {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let (mut m_range, mut n_range) = ((usize::MAX, 0), (usize::MAX, 0));
    for (seed, (space, art)) in suite.iter().enumerate() {
        m_range = (m_range.0.min(space.len()), m_range.1.max(space.len()));
        n_range = (n_range.0.min(space.dim()), n_range.1.max(space.dim()));
        match art {
            Ok(a) => {
                worst = worst.max(a.residuals.factorization);
                if !a.assembled.hb.pass {
                    failures.push(format!("seed {seed}: Hermite-Biehler check"));
                }
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    let in_range = m_range.0 >= 3 && m_range.1 <= 16 && n_range.0 >= 2 && n_range.1 <= 12;
    let pass = failures.is_empty() && worst <= 1e-9 && secs < 60.0 && in_range;
    report(
        4,
        pass,
        format!(
            "{} spaces, m in {m_range:?}, n in {n_range:?}, max factorization residual {worst:.2e} <= 1e-9, {secs:.2} s < 60 s, failures {failures:?}",
            suite.len()
        ),
    )
}

fn gauge_uniqueness() -> Line {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for seed in 0..10 {
        let space = krein::random_polynomial_space(seed).expect("suite space");
        let run = |theta| {
            krein::run_pipeline(
                &space,
                &PipelineOptions {
                    theta,
                    ..PipelineOptions::default()
                },
            )
        };
        match (run(0.0), run(1.0)) {
            (Ok(a), Ok(b)) => match debranges::gauge_check(a.e(), b.e(), space.points()) {
                Ok(g) => {
                    worst = worst.max(g.constancy_residual);
                    if !g.zero_free {
                        failures.push(format!("seed {seed}: W has a zero"));
                    }
                }
                Err(e) => failures.push(format!("seed {seed}: {e}")),
            },
            (Err(e), _) | (_, Err(e)) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    let pass = failures.is_empty() && worst <= 1e-8;
    report(5, pass, format!("10 spaces, max constancy residual {worst:.2e} <= 1e-8, failures {failures:?}"))
}

fn parseval(suite: &[(krein::FiniteRankSpace, Result<KreinArtifacts, krein::PipelineError>)]) -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut count = 0;
    for k in 0..100 {
        let (space, art) = &suite[k % suite.len()];
        let Ok(a) = art else {
            failures.push(format!("pair {k}: pipeline failed"));
            continue;
        };
        let n = space.dim();
        let mut draw = || -> Vec<Complex64> {
            (0..n)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect()
        };
        let f = draw();
        let g = draw();
        let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let r = krein::parseval_check(&a.model, &a.companion, &f, &g) / (norm(&f) * norm(&g));
        worst = worst.max(r);
        count += 1;
    }
    let pass = failures.is_empty() && worst <= 1e-10;
    report(6, pass, format!("{count} pairs, max residual {worst:.2e} <= 1e-10 of |f||g|, failures {failures:?}"))
}

fn transform_properties(suite: &[(krein::FiniteRankSpace, Result<KreinArtifacts, krein::PipelineError>)]) -> Line {
    let mut failures = Vec::new();
    for (seed, (space, art)) in suite.iter().enumerate() {
        let n = space.dim();
        let Ok(a) = art else {
            failures.push(format!("seed {seed}: pipeline failed"));
            continue;
        };
        let op = match krein::mult_domain(space) {
            Ok(op) => op,
            Err(e) => {
                failures.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        if op.dim_domain() != n - 1 || a.dim_domain != n - 1 {
            failures.push(format!("seed {seed}: dim D = {}", op.dim_domain()));
        }
        let plus = krein::deficiency_dimension(&op, c(0.0, 1.0));
        let minus = krein::deficiency_dimension(&op, c(0.0, -1.0));
        if (plus, minus) != (1, 1) {
            failures.push(format!("seed {seed}: deficiency ({plus}, {minus})"));
        }
        let xi = space.values(a.model.xi.as_slice());
        let xi_max = xi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if xi.iter().any(|z| z.norm() <= 1e-12 * xi_max) {
            failures.push(format!("seed {seed}: xi vanishes on U"));
        }
        let count: usize = a.zeros.iter().map(|z| z.mult).sum();
        if count != n - 1 || a.zeros.iter().any(|z| z.im == 0.0) {
            failures.push(format!("seed {seed}: |S| = {count} or a real zero"));
        }
        let e1 = a.model.extension.eigenvalues.as_slice();
        let e2 = a.companion.extension.eigenvalues.as_slice();
        let disjoint = e1.iter().all(|x| e2.iter().all(|y| x != y));
        if !disjoint || !(krein::interlace(e1, e2) || krein::interlace(e2, e1)) {
            failures.push(format!("seed {seed}: spectra not disjoint and interlacing"));
        }
    }
    let pass = failures.is_empty();
    report(
        7,
        pass,
        format!(
            "dim D = n-1, deficiency (1,1), xi nonvanishing, |S| = n-1 off the axis, interlacing on {} spaces, failures {failures:?}",
            suite.len()
        ),
    )
}

fn dpp_identity() -> Line {
    let start = Instant::now();
    let run = || -> Result<(dpp::DeterminantReport, f64, bool), dpp::DppError> {
        let spec = KernelSpec::discrete_sine(PI / 3.0)?;
        let k = dpp::truncate(&spec, &Window::Integers(20))?;
        let g = TestFunction::interval(-5.0, 5.0, 1.5)?;
        let samples = dpp::sample_many(&k, 7, 100_000)?;
        let mc = dpp::mc_from_samples(&samples, &g)?;
        let stats = dpp::DeterminantReport::new(mc, dpp::expectation_product(&k, &g));
        let intensity = dpp::empirical_intensity(&samples, k.points())?;
        let mut worst_z: f64 = 0.0;
        let mut ok = true;
        for ((x, p), e) in intensity.points.iter().zip(&intensity.frequency).zip(&intensity.stderr) {
            if x.abs() <= 5.0 {
                let dev = (p - 1.0 / 3.0).abs();
                ok &= dev <= 3.0 * e;
                worst_z = worst_z.max(dev / e);
            }
        }
        Ok((stats, worst_z, ok))
    };
    let result = run();
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok((stats, z, intensity_ok)) => {
            let pass = stats.pass && intensity_ok && secs < 30.0;
            report(
                8,
                pass,
                format!(
                    "|MC - det| = {:.2e} <= 3 stderr = {:.2e}, worst interior intensity deviation {z:.2} stderr <= 3, {secs:.2} s < 30 s",
                    (stats.estimate - stats.determinant).abs(),
                    3.0 * stats.stderr
                ),
            )
        }
        Err(e) => report(8, false, format!("error: {e}")),
    }
}

fn normality() -> Line {
    let mut worst_ratio: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    let mut errors = Vec::new();
    for n in [2u32, 3, 5, 9] {
        match kernels::normality_witness(n) {
            Ok(w) => {
                worst_ratio = worst_ratio.max((w.norm_ratio - (n as f64 - 1.0)).abs());
                worst_bound = worst_bound.max(w.pointwise_ratio_bound - 1.0);
            }
            Err(e) => errors.push(format!("n = {n}: {e}")),
        }
    }
    let pass = errors.is_empty() && worst_ratio <= 1e-6 && worst_bound <= 1e-12;
    report(
        9,
        pass,
        format!("|norm ratio - (n-1)| {worst_ratio:.2e} <= 1e-6, pointwise excess {worst_bound:.2e} <= 1e-12, errors {errors:?}"),
    )
}

fn main() {
    let mut lines = vec![bessel_factorization(), continuous_sine_factorization(), discrete_sine_krein()];
    let start = Instant::now();
    let suite = suite();
    let secs = start.elapsed().as_secs_f64();
    lines.push(pipeline_end_to_end(&suite, secs));
    lines.push(gauge_uniqueness());
    lines.push(parseval(&suite));
    lines.push(transform_properties(&suite));
    lines.push(dpp_identity());
    lines.push(normality());
    let failed: Vec<String> = lines
        .iter()
        .filter(|l| !l.pass)
        .map(|l| format!("{}: {}", l.id, l.detail))
        .collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:#?}");
        std::process::exit(1);
    }
}
