use dbkit::dpp::{self, DppError, DppKernel, PointConfiguration, TestFunction, Window};
use dbkit::kernels::{KernelMatrix, KernelSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kernel(entries: DMatrix<f64>) -> DppKernel {
    let points = (0..entries.nrows()).map(|i| i as f64).collect();
    DppKernel::new(KernelMatrix::from_matrix(points, entries).unwrap()).unwrap()
}

fn random_projection(n: usize, rank: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    let q = a.qr().q();
    &q * q.transpose()
}

#[test]
fn projection_kernels_give_fixed_size_samples() {
    let k = kernel(random_projection(12, 4, 3));
    assert!(k.is_projection());
    let samples = dpp::sample_many(&k, 9, 2000).unwrap();
    assert!(samples.iter().all(|s| s.len() == 4));
}

#[test]
fn expected_size_is_the_trace() {
    let k = dpp::truncate(&KernelSpec::discrete_sine(1.0).unwrap(), &Window::Integers(10)).unwrap();
    let samples = dpp::sample_many(&k, 4, 10_000).unwrap();
    let size = dpp::cardinality(&samples);
    let trace = k.matrix.entries.trace();
    assert!((size.mean - trace).abs() <= 4.0 * size.stderr, "{} vs {trace}", size.mean);
}

#[test]
fn pair_inclusion_follows_the_two_point_determinant() {
    let k = dpp::truncate(&KernelSpec::discrete_sine(1.2).unwrap(), &Window::Integers(5)).unwrap();
    let samples = dpp::sample_many(&k, 21, 40_000).unwrap();
    let e = &k.matrix.entries;
    for (i, j) in [(0usize, 1usize), (4, 5), (2, 9)] {
        let (x, y) = (k.points()[i], k.points()[j]);
        let hits = samples.iter().filter(|s| s.points.contains(&x) && s.points.contains(&y)).count();
        let p = e[(i, i)] * e[(j, j)] - e[(i, j)] * e[(i, j)];
        let freq = hits as f64 / samples.len() as f64;
        let se = (p * (1.0 - p) / samples.len() as f64).sqrt();
        assert!((freq - p).abs() <= 4.0 * se, "({x}, {y}): {freq} vs {p}");
    }
}

#[test]
fn rank_one_kernel_matches_its_closed_form() {
    // K = α vvᵀ with v uniform on six points; g = 2 on two of them gives
    // E ∏ g = 1 + α Σ (g - 1) v² = 1 + α/3
    let alpha = 0.5;
    let v = DVector::from_element(6, 1.0 / 6f64.sqrt());
    let k = kernel(&v * v.transpose() * alpha);
    let g = TestFunction::interval(0.0, 1.0, 2.0).unwrap();
    let exact = 1.0 + alpha / 3.0;
    assert!((dpp::expectation_product(&k, &g) - exact).abs() <= 1e-14);
    let mc = dpp::mc_estimate(&k, &g, 20_000, 8).unwrap();
    let report = dpp::DeterminantReport::new(mc, exact);
    assert!(report.pass, "{report:?}");
}

#[test]
fn hole_probability_by_sampling_and_by_determinant() {
    let k = dpp::truncate(&KernelSpec::discrete_sine(0.9).unwrap(), &Window::Integers(8)).unwrap();
    let hole = TestFunction::interval(-2.0, 2.0, 0.0).unwrap();
    let det = dpp::expectation_product(&k, &hole);
    let samples = dpp::sample_many(&k, 17, 20_000).unwrap();
    let empty = samples.iter().filter(|s| s.points.iter().all(|x| x.abs() > 2.0)).count() as f64 / 20_000.0;
    let mc = dpp::mc_from_samples(&samples, &hole).unwrap();
    assert_eq!(mc.mean, empty);
    assert!(dpp::DeterminantReport::new(mc, det).pass, "{empty} vs {det}");
}

#[test]
fn identity_and_zero_kernels() {
    let all = kernel(DMatrix::identity(5, 5));
    let freq = dpp::empirical_intensity(&dpp::sample_many(&all, 1, 1000).unwrap(), all.points()).unwrap();
    assert!(freq.frequency.iter().all(|&f| f == 1.0));
    let none = kernel(DMatrix::zeros(5, 5));
    assert!(dpp::sample_many(&none, 1, 1000).unwrap().iter().all(|s| s.is_empty()));
}

#[test]
fn invalid_inputs_are_rejected() {
    let big = KernelMatrix::from_matrix(vec![0.0, 1.0], DMatrix::identity(2, 2) * 2.0).unwrap();
    assert!(matches!(DppKernel::new(big), Err(DppError::Contraction(_))));
    let k = kernel(DMatrix::identity(3, 3) * 0.5);
    assert!(matches!(
        dpp::mc_estimate(&k, &TestFunction::one(), 999, 0),
        Err(DppError::Trials { got: 999, .. })
    ));
    assert!(TestFunction::interval(0.0, 1.0, -0.5).is_err());
    assert!(TestFunction::interval(0.0, f64::INFINITY, 2.0).is_err());
}

#[test]
fn samples_round_trip_through_json_lines() {
    let k = dpp::truncate(&KernelSpec::discrete_sine(1.0).unwrap(), &Window::Integers(6)).unwrap();
    let samples: Vec<PointConfiguration> = (0..20).map(|t| dpp::dpp_sample_stream(&k, 5, t).unwrap()).collect();
    assert_eq!(samples, dpp::sample_many(&k, 5, 20).unwrap());
    let mut buf = Vec::new();
    dpp::write_json_lines(&samples, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let back: Vec<PointConfiguration> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, samples);
    assert!(text.lines().next().unwrap().starts_with(r#"{"seed":5,"trial":0,"points":["#));
}
