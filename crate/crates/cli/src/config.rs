//! Run configuration: parsed from flags or read from a JSON file, and
//! echoed into every report.

use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ContinuousSine,
    DiscreteSine,
    Bessel,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct Common {
    /// Output file (default stdout).
    #[arg(long, global = true)]
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    #[serde(default)]
    pub format: Option<Format>,
    /// Accept discrete sine bands in (0, π) instead of (0, π/2).
    #[arg(long, global = true)]
    #[serde(default)]
    pub allow_wide_band: bool,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Kernel values on all pairs of a grid.
    Kernel(KernelArgs),
    /// Factorization of a closed-form kernel through its de Branges kernel.
    Factorize(FactorizeArgs),
    /// Gauge between the E's produced at two extension parameters.
    Gauge(GaugeArgs),
    /// The full finite-rank pipeline from a space to (E, Φ).
    Pipeline(PipelineArgs),
    /// Determinantal sampling against the determinant identity.
    Dpp(DppArgs),
    /// The Paley–Wiener normality counterexample.
    Normality(NormalityArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KernelArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(default)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(default)]
    pub s: Option<f64>,
    /// `lo..hi` (integers, inclusive) or a comma separated list.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FactorizeArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(default)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(default)]
    pub s: Option<f64>,
    /// Defaults to ten points of [-4.5, 4.5] for the sine family and
    /// 0.1,0.5,1,2,5,10,20,40 for Bessel.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub grid: Option<String>,
}

/// Where the finite-rank space comes from: a JSON file, or a random
/// polynomial space drawn from `seed`.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SpaceArgs {
    #[arg(long)]
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// Number of points of a random space.
    #[arg(long)]
    #[serde(default)]
    pub m: Option<usize>,
    /// Dimension of a random space.
    #[arg(long)]
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GaugeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub space: SpaceArgs,
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.0, 1.0], allow_negative_numbers = true)]
    #[serde(default = "default_thetas")]
    pub theta: Vec<f64>,
}

fn default_thetas() -> Vec<f64> {
    vec![0.0, 1.0]
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub space: SpaceArgs,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    #[serde(default)]
    pub theta: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DppArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Band of the discrete sine kernel; defaults to π/3.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(default)]
    pub b: Option<f64>,
    /// Window half width: the window is the integers -N..=N.
    #[arg(long = "N", default_value_t = 20)]
    #[serde(rename = "N", default = "default_half_width")]
    pub half_width: u32,
    #[arg(long, default_value_t = 100_000)]
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// `g = multiplier` on |m| ≤ radius, 1 elsewhere; radius defaults to N/4.
    #[arg(long)]
    #[serde(default)]
    pub bump_radius: Option<u32>,
    #[arg(long, default_value_t = 1.5)]
    #[serde(default = "default_multiplier")]
    pub bump_multiplier: f64,
    /// Also write every sample as a JSON line to this file.
    #[arg(long)]
    #[serde(default)]
    pub samples: Option<PathBuf>,
}

fn default_half_width() -> u32 {
    20
}

fn default_trials() -> usize {
    100_000
}

fn default_multiplier() -> f64 {
    1.5
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct NormalityArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2u32, 3, 5, 9])]
    #[serde(default = "default_orders")]
    pub n: Vec<u32>,
}

fn default_orders() -> Vec<u32> {
    vec![2, 3, 5, 9]
}

/// A complete run. As JSON it is flat:
/// `{"command": "kernel", "family": "bessel", "s": 0.5, "grid": "1,2", ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub command: Command,
    #[serde(flatten)]
    pub common: Common,
}

/// Integer range `lo..hi` (inclusive) or comma separated reals.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: i64 = lo.trim().parse().map_err(|_| format!("grid bound '{lo}' is not an integer"))?;
        let hi: i64 = hi.trim().parse().map_err(|_| format!("grid bound '{hi}' is not an integer"))?;
        if lo > hi {
            return Err(format!("empty grid range {lo}..{hi}"));
        }
        if hi - lo > 100_000 {
            return Err("grid range longer than 100000 points".into());
        }
        return Ok((lo..=hi).map(|k| k as f64).collect());
    }
    let points: Vec<f64> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("grid value '{}' is not a finite number", p.trim()))
        })
        .collect::<Result<_, _>>()?;
    if points.is_empty() {
        return Err("empty grid".into());
    }
    Ok(points)
}
