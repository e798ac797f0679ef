//! Special-function and kernel values against 20-digit references computed
//! independently with mpmath (`besselj`, and the kernel formula evaluated at
//! 50 digits, with the diagonal taken as the exact limit).

use std::f64::consts::PI;

use dbkit::kernels;
use dbkit::specfun::{self, SeriesParams};
use dbkit::Complex64;

const XS: [f64; 5] = [0.5, 3.0, 10.0, 25.0, 50.0];

// J_s(x) for x in XS
const TABLE: [(f64, [f64; 5]); 6] = [
    (
        -0.5,
        [
            0.990_245_880_243_404_9,
            -0.456_048_820_794_633_2,
            -0.211_708_866_331_398_15,
            0.158_173_084_042_050_56,
            0.108_884_756_350_539_54,
        ],
    ),
    (
        0.0,
        [
            0.938_469_807_240_812_9,
            -0.260_051_954_901_933_44,
            -0.245_935_764_451_348_34,
            0.096_266_783_275_958_12,
            0.055_812_327_669_251_815,
        ],
    ),
    (
        0.5,
        [
            0.540_973_789_934_528_1,
            0.065_008_182_877_375_78,
            -0.137_263_735_755_050_48,
            -0.021_120_283_599_650_445,
            -0.029_605_831_888_924_613,
        ],
    ),
    (
        1.0,
        [
            0.242_268_457_674_873_9,
            0.339_058_958_525_936_46,
            0.043_472_746_168_861_437,
            -0.125_350_249_580_289_9,
            -0.097_511_828_125_175_14,
        ],
    ),
    (
        2.5,
        [
            0.009_236_407_819_379_724,
            0.412_710_032_209_716,
            0.196_658_483_581_818_4,
            0.002_038_136_153_326_055_4,
            0.023_037_219_509_625_53,
        ],
    ),
    (
        4.3,
        [
            0.000_066_887_039_756_397_48,
            0.096_694_334_170_378_4,
            -0.257_482_019_746_530_27,
            0.083_589_573_511_090_52,
            0.025_898_302_915_860_62,
        ],
    ),
];

#[test]
fn bessel_j_matches_reference_table() {
    for (s, row) in TABLE {
        for (x, want) in XS.iter().zip(row) {
            let got = specfun::bessel_j(s, *x).unwrap();
            let rel = (got - want).abs() / want.abs();
            assert!(rel <= 1e-10, "J_{s}({x}) = {got}, want {want}, rel {rel:e}");
        }
    }
}

#[test]
fn bessel_kernel_reference_values() {
    let cases = [
        (0.0, 1.0, 2.0, 0.171_572_336_938_956_9),
        (0.0, 1.0, 1.0, 0.194_793_004_382_030_78),
        (2.5, 40.0, 40.0, 0.021_281_117_532_302_978),
        (-0.5, 0.1, 20.0, -0.055_213_176_359_296_62),
    ];
    for (s, x, y, want) in cases {
        let got = kernels::bessel_eval(s, x, y).unwrap();
        let rel = (got - want).abs() / want.abs();
        assert!(rel <= 1e-10, "K_{s}({x},{y}) = {got}, want {want}, rel {rel:e}");
    }
}

#[test]
fn entire_bessel_complex_argument() {
    let got = specfun::entire_bessel(1.0, Complex64::new(3.0, -7.0), SeriesParams::default()).unwrap();
    let want = Complex64::new(0.230_557_940_250_493_27, 0.321_981_079_749_630_03);
    assert!((got - want).norm() <= 1e-14 * want.norm());
    let conj = specfun::entire_bessel(1.0, Complex64::new(3.0, 7.0), SeriesParams::default()).unwrap();
    assert_eq!(conj, got.conj());
}

#[test]
fn half_order_closed_forms() {
    // j_{1/2}(√t) = √(2/π) sin(√t)/√t
    for t in [0.25, 1.0, 9.0, 100.0] {
        let got = specfun::entire_bessel(0.5, Complex64::new(t, 0.0), SeriesParams::default()).unwrap();
        let want = (2.0 / PI).sqrt() * t.sqrt().sin() / t.sqrt();
        assert!((got.re - want).abs() <= 1e-14 * want.abs().max(1e-3), "t = {t}");
        assert_eq!(got.im, 0.0);
    }
    // both surviving products vanish at x = π², y = 4π²
    let k = kernels::bessel_eval(0.5, PI * PI, 4.0 * PI * PI).unwrap();
    assert!(k.abs() < 1e-15);
}

#[test]
fn discrete_sine_table() {
    assert!((kernels::discrete_sine_eval(PI / 3.0, 0, 0).unwrap() - 1.0 / 3.0).abs() < 1e-16);
    let off = kernels::discrete_sine_eval(PI / 3.0, 0, 1).unwrap();
    assert!((off - 3f64.sqrt() / (2.0 * PI)).abs() < 1e-16);
    assert!(kernels::discrete_sine_eval(PI / 4.0, 0, 4).unwrap().abs() < 1e-16);
    assert!(kernels::discrete_sine_eval(2.0, 0, 1).is_err());
}

#[test]
fn continuous_sine_table() {
    assert!((kernels::continuous_sine_eval(PI, 1.3, 1.3).unwrap() - 1.0).abs() < 1e-15);
    assert!((kernels::continuous_sine_eval(PI, 0.0, 0.5).unwrap() - 2.0 / PI).abs() < 1e-15);
    assert!(kernels::continuous_sine_eval(1.0, 0.0, PI).unwrap().abs() < 1e-16);
}
