use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;

use dbkit::debranges::{self, DebrangesError, HermiteBiehler, Multiplier};
use dbkit::dpp::{self, DeterminantReport, DppError, TestFunction, Window};
use dbkit::kernels::{self, KernelError, KernelSpec};
use dbkit::krein::{self, FiniteRankSpace, KreinError, PipelineOptions, SpaceInput};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    parse_grid, Command, DppArgs, FactorizeArgs, Family, Format, GaugeArgs, KernelArgs, NormalityArgs,
    PipelineArgs, RunConfig, SpaceArgs,
};

pub const GAUGE_TOL: f64 = 1e-8;
pub const SINE_FACTORIZATION_TOL: f64 = 1e-13;
pub const BESSEL_FACTORIZATION_TOL: f64 = 1e-9;
pub const NORM_RATIO_TOL: f64 = 1e-6;
pub const POINTWISE_TOL: f64 = 1e-12;

/// Why a run did not produce a passing report.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or input; exit 2.
    Usage(String),
    /// A check could not be completed; exit 1.
    Check(String),
}

/// Rendered report plus the verdict.
#[derive(Debug)]
pub struct Outcome {
    pub text: String,
    pub pass: bool,
    /// Printed to stderr when the check fails.
    pub message: Option<String>,
}

type Run = Result<Outcome, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn kernel_failure(e: KernelError) -> Failure {
    match e {
        KernelError::Parameter { .. } | KernelError::Point(_) | KernelError::Grid => usage(e.to_string()),
        other => Failure::Check(other.to_string()),
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    result: T,
}

fn render_json<T: Serialize>(config: &RunConfig, result: T) -> String {
    let env = Envelope {
        tool: "dbkit",
        version: env!("CARGO_PKG_VERSION"),
        config,
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("reports are plain data");
    s.push('\n');
    s
}

fn default_format(command: &Command) -> Format {
    match command {
        Command::Kernel(_) => Format::Csv,
        _ => Format::Json,
    }
}

/// Fills defaults that depend on the command, so the echoed config is
/// complete.
pub fn resolve(mut config: RunConfig) -> RunConfig {
    if config.common.format.is_none() {
        config.common.format = Some(default_format(&config.command));
    }
    match &mut config.command {
        Command::Factorize(f) if f.grid.is_none() => {
            f.grid = Some(match f.family {
                Family::Bessel => "0.1,0.5,1,2,5,10,20,40".into(),
                _ => "-4.5,-3.5,-2.5,-1.5,-0.5,0.5,1.5,2.5,3.5,4.5".into(),
            });
        }
        Command::Dpp(d) => {
            if d.bump_radius.is_none() {
                d.bump_radius = Some(d.half_width / 4);
            }
            if d.b.is_none() && d.family == Family::DiscreteSine {
                d.b = Some(std::f64::consts::FRAC_PI_3);
            }
        }
        _ => {}
    }
    config
}

pub fn run(config: &RunConfig) -> Run {
    let format = config.common.format.unwrap_or_else(|| default_format(&config.command));
    match &config.command {
        Command::Kernel(a) => cmd_kernel(config, a, format),
        Command::Factorize(a) => cmd_factorize(config, a, format),
        Command::Gauge(a) => cmd_gauge(config, a, format),
        Command::Pipeline(a) => cmd_pipeline(config, a, format),
        Command::Dpp(a) => cmd_dpp(config, a, format),
        Command::Normality(a) => cmd_normality(config, a, format),
    }
}

fn need(value: Option<f64>, name: &str, family: Family) -> Result<f64, Failure> {
    value.ok_or_else(|| usage(format!("--{name} is required for the {family} family")))
}

fn kernel_spec(family: Family, b: Option<f64>, s: Option<f64>, wide: bool) -> Result<KernelSpec, Failure> {
    let spec = match family {
        Family::ContinuousSine => KernelSpec::ContinuousSine {
            b: need(b, "b", family)?,
        },
        Family::DiscreteSine => KernelSpec::DiscreteSine {
            b: need(b, "b", family)?,
            wide_band: wide,
        },
        Family::Bessel => KernelSpec::Bessel {
            s: need(s, "s", family)?,
        },
    };
    spec.validate().map_err(kernel_failure)?;
    Ok(spec)
}

fn cmd_kernel(config: &RunConfig, a: &KernelArgs, format: Format) -> Run {
    let spec = kernel_spec(a.family, a.b, a.s, config.common.allow_wide_band)?;
    let grid = parse_grid(&a.grid).map_err(usage)?;
    let k = kernels::kernel_grid(&spec, &grid).map_err(kernel_failure)?;
    let text = match format {
        Format::Csv => k.to_csv(),
        Format::Json => {
            let rows: Vec<Vec<f64>> = k.entries.row_iter().map(|r| r.iter().copied().collect()).collect();
            render_json(config, json!({ "points": k.points, "entries": rows }))
        }
    };
    Ok(Outcome {
        text,
        pass: true,
        message: None,
    })
}

#[derive(Serialize)]
struct FactorizeResult {
    check: &'static str,
    family: Family,
    parameters: Value,
    grid: Vec<f64>,
    c: f64,
    residual: f64,
    worst_pair: (f64, f64),
    tolerance: f64,
    pass: bool,
}

fn cmd_factorize(config: &RunConfig, a: &FactorizeArgs, format: Format) -> Run {
    if format == Format::Csv {
        return Err(usage("factorize writes json only"));
    }
    let grid_text = a.grid.as_deref().ok_or_else(|| usage("--grid is required"))?;
    let grid = parse_grid(grid_text).map_err(usage)?;
    let to_db = |x: f64, y: f64, e: KernelError| DebrangesError::Kernel {
        x,
        y,
        reason: e.to_string(),
    };
    let (report, parameters, tolerance) = match a.family {
        Family::ContinuousSine => {
            let spec = kernel_spec(a.family, a.b, None, false)?;
            let b = need(a.b, "b", a.family)?;
            let r = debranges::factorization_check(
                |x, y| spec.eval(x, y).map_err(|e| to_db(x, y, e)),
                &Multiplier::Constant { value: 1.0 / PI.sqrt() },
                &HermiteBiehler::exponential(b),
                &grid,
                false,
            );
            (r, json!({ "b": b }), SINE_FACTORIZATION_TOL)
        }
        Family::Bessel => {
            let spec = kernel_spec(a.family, None, a.s, false)?;
            let s = need(a.s, "s", a.family)?;
            if let Some(&x) = grid.iter().find(|&&x| x <= 0.0) {
                return Err(usage(format!("grid point {x} outside (0, inf)")));
            }
            let e = debranges::bessel_hb(s).map_err(|e| usage(e.to_string()))?;
            let r = debranges::factorization_check(
                |x, y| spec.eval(x, y).map_err(|e| to_db(x, y, e)),
                &Multiplier::Power { exponent: s / 2.0 },
                &e,
                &grid,
                true,
            );
            (r, json!({ "s": s }), BESSEL_FACTORIZATION_TOL)
        }
        Family::DiscreteSine => {
            return Err(usage("factorize supports the continuous-sine and bessel families"));
        }
    };
    let report = report.map_err(|e| Failure::Check(e.to_string()))?;
    let pass = report.max_relative_residual <= tolerance;
    let result = FactorizeResult {
        check: "factorization",
        family: a.family,
        parameters,
        grid,
        c: report.c,
        residual: report.max_relative_residual,
        worst_pair: report.worst_pair,
        tolerance,
        pass,
    };
    Ok(Outcome {
        text: render_json(config, &result),
        pass,
        message: (!pass).then(|| format!("factorization residual {:e} above {tolerance:e}", report.max_relative_residual)),
    })
}

fn load_space(a: &SpaceArgs) -> Result<FiniteRankSpace, Failure> {
    let space_err = |e: KreinError| usage(format!("invalid space: {e}"));
    match (&a.input, a.m, a.n) {
        (Some(path), None, None) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let input: SpaceInput =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            input.build().map_err(space_err)
        }
        (Some(_), _, _) => Err(usage("--input cannot be combined with --m or --n")),
        (None, Some(m), Some(n)) => krein::random_polynomial_space_with(a.seed, m, n).map_err(space_err),
        (None, None, None) => krein::random_polynomial_space(a.seed).map_err(space_err),
        _ => Err(usage("--m and --n must be given together")),
    }
}

fn pipeline_failure(e: &krein::PipelineError) -> Value {
    json!({ "pass": false, "failed_stage": e.stage.to_string(), "error": e.source.to_string() })
}

fn cmd_pipeline(config: &RunConfig, a: &PipelineArgs, format: Format) -> Run {
    let space = load_space(&a.space)?;
    if !a.theta.is_finite() {
        return Err(usage("--theta must be finite"));
    }
    let options = PipelineOptions {
        theta: a.theta,
        ..PipelineOptions::default()
    };
    match krein::run_pipeline(&space, &options) {
        Ok(art) => {
            let report = art.report(&space);
            let text = match format {
                Format::Json => render_json(config, &report),
                Format::Csv => {
                    let mut out = String::from("t,xi_re,xi_im,phi\n");
                    let xi = space.values(art.model.xi.as_slice());
                    for ((t, x), p) in report.points.iter().zip(&xi).zip(&report.phi) {
                        let _ = writeln!(out, "{t:.16e},{:.16e},{:.16e},{p:.16e}", x.re, x.im);
                    }
                    out
                }
            };
            Ok(Outcome {
                text,
                pass: true,
                message: None,
            })
        }
        Err(e) => Ok(Outcome {
            text: render_json(config, pipeline_failure(&e)),
            pass: false,
            message: Some(format!("pipeline failed at {e}")),
        }),
    }
}

fn cmd_gauge(config: &RunConfig, a: &GaugeArgs, format: Format) -> Run {
    let space = load_space(&a.space)?;
    let [t1, t2] = a.theta[..] else {
        return Err(usage("--theta takes exactly two values"));
    };
    if !t1.is_finite() || !t2.is_finite() {
        return Err(usage("--theta must be finite"));
    }
    let mut es = Vec::with_capacity(2);
    for theta in [t1, t2] {
        let options = PipelineOptions {
            theta,
            ..PipelineOptions::default()
        };
        match krein::run_pipeline(&space, &options) {
            Ok(art) => es.push(art.e().clone()),
            Err(e) => {
                let mut v = pipeline_failure(&e);
                v["theta"] = json!(theta);
                return Ok(Outcome {
                    text: render_json(config, v),
                    pass: false,
                    message: Some(format!("pipeline at theta = {theta} failed at {e}")),
                });
            }
        }
    }
    let report = debranges::gauge_check(&es[0], &es[1], space.points()).map_err(|e| Failure::Check(e.to_string()))?;
    let pass = report.constancy_residual <= GAUGE_TOL && report.zero_free;
    let text = match format {
        Format::Json => render_json(
            config,
            json!({
                "check": "gauge",
                "theta": [t1, t2],
                "grid": report.grid,
                "w": report.w,
                "constancy_residual": report.constancy_residual,
                "zero_free": report.zero_free,
                "tolerance": GAUGE_TOL,
                "pass": pass,
            }),
        ),
        Format::Csv => {
            let mut out = String::from("y,W\n");
            for (y, w) in report.grid.iter().zip(&report.w) {
                let _ = writeln!(out, "{y:.16e},{w:.16e}");
            }
            out
        }
    };
    Ok(Outcome {
        text,
        pass,
        message: (!pass).then(|| format!("gauge residual {:e}, zero free {}", report.constancy_residual, report.zero_free)),
    })
}

fn dpp_failure(e: DppError) -> Failure {
    match e {
        DppError::Kernel(k) => kernel_failure(k),
        DppError::Trials { .. } | DppError::Multiplier(_) | DppError::Support | DppError::Window => usage(e.to_string()),
        other => Failure::Check(other.to_string()),
    }
}

fn cmd_dpp(config: &RunConfig, a: &DppArgs, format: Format) -> Run {
    if a.family != Family::DiscreteSine {
        return Err(usage("dpp supports the discrete-sine family only"));
    }
    if a.trials < dpp::MIN_TRIALS {
        return Err(usage(format!("--trials {} below the minimum {}", a.trials, dpp::MIN_TRIALS)));
    }
    let spec = kernel_spec(a.family, a.b, None, config.common.allow_wide_band)?;
    let radius = a.bump_radius.unwrap_or(a.half_width / 4);
    let g = TestFunction::interval(-(radius as f64), radius as f64, a.bump_multiplier).map_err(dpp_failure)?;
    let k = dpp::truncate(&spec, &Window::Integers(a.half_width)).map_err(dpp_failure)?;
    let samples = dpp::sample_many(&k, a.seed, a.trials).map_err(dpp_failure)?;
    if let Some(path) = &a.samples {
        let file = fs::File::create(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        dpp::write_json_lines(&samples, std::io::BufWriter::new(file))
            .map_err(|e| Failure::Check(format!("{}: {e}", path.display())))?;
    }
    let mc = dpp::mc_from_samples(&samples, &g).map_err(dpp_failure)?;
    let det = dpp::expectation_product(&k, &g);
    let stats = DeterminantReport::new(mc, det);
    let intensity = dpp::empirical_intensity(&samples, k.points()).map_err(dpp_failure)?;
    let diagonal = k.matrix.entries[(0, 0)];
    let interior = (a.half_width / 4) as f64;
    let intensity_pass = intensity
        .points
        .iter()
        .zip(intensity.frequency.iter().zip(&intensity.stderr))
        .filter(|(x, _)| x.abs() <= interior)
        .all(|(_, (p, e))| (p - diagonal).abs() <= 3.0 * e);
    let size = dpp::cardinality(&samples);
    let text = match format {
        Format::Json => render_json(
            config,
            json!({
                "estimate": stats.estimate,
                "stderr": stats.stderr,
                "determinant": stats.determinant,
                "pass": stats.pass,
                "trials": a.trials,
                "window": [-(a.half_width as i64), a.half_width as i64],
                "clamped": k.clamped,
                "cardinality": { "mean": size.mean, "stderr": size.stderr, "trace": k.matrix.trace() },
                "intensity": {
                    "expected": diagonal,
                    "interior_radius": interior,
                    "points": intensity.points,
                    "frequency": intensity.frequency,
                    "stderr": intensity.stderr,
                    "pass": intensity_pass,
                },
            }),
        ),
        Format::Csv => {
            let mut out = String::from("point,frequency,stderr\n");
            for ((x, p), e) in intensity.points.iter().zip(&intensity.frequency).zip(&intensity.stderr) {
                let _ = writeln!(out, "{x},{p:.16e},{e:.16e}");
            }
            out
        }
    };
    Ok(Outcome {
        text,
        pass: stats.pass,
        message: (!stats.pass).then(|| {
            format!(
                "|estimate - determinant| = {:e} exceeds 3 stderr = {:e}",
                (stats.estimate - stats.determinant).abs(),
                3.0 * stats.stderr
            )
        }),
    })
}

fn cmd_normality(config: &RunConfig, a: &NormalityArgs, format: Format) -> Run {
    if a.n.is_empty() {
        return Err(usage("--n needs at least one value"));
    }
    let mut rows = Vec::with_capacity(a.n.len());
    for &n in &a.n {
        let w = kernels::normality_witness(n).map_err(kernel_failure)?;
        let pass = (w.norm_ratio - (n as f64 - 1.0)).abs() <= NORM_RATIO_TOL
            && w.pointwise_ratio_bound <= 1.0 + POINTWISE_TOL;
        rows.push((w, pass));
    }
    let pass = rows.iter().all(|r| r.1);
    let text = match format {
        Format::Json => {
            let items: Vec<Value> = rows
                .iter()
                .map(|(w, p)| {
                    json!({
                        "n": w.n,
                        "pointwise_ratio_bound": w.pointwise_ratio_bound,
                        "norm_ratio": w.norm_ratio,
                        "pass": p,
                    })
                })
                .collect();
            render_json(config, json!({ "witnesses": items, "pass": pass }))
        }
        Format::Csv => {
            let mut out = String::from("n,pointwise_ratio_bound,norm_ratio,pass\n");
            for (w, p) in &rows {
                let _ = writeln!(out, "{},{:.16e},{:.16e},{p}", w.n, w.pointwise_ratio_bound, w.norm_ratio);
            }
            out
        }
    };
    Ok(Outcome {
        text,
        pass,
        message: (!pass).then(|| "normality witness outside tolerance".to_string()),
    })
}
