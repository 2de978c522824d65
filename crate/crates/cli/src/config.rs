//! Run configuration: every field is optional so that flags, a JSON file
//! and built-in defaults can be layered in that order of precedence.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// How `kernel` picks its evaluation pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Slice {
    /// `x = y = t·e₁`, `t` uniform on `[−1.2√λ, 1.2√λ]`.
    Diagonal,
    /// Seeded random pairs in the ball of radius `1.2√λ`.
    Random,
}

/// Parses a real given either as a decimal or as a fraction `a/b`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            a / b
        }
        None => s.parse().map_err(|e| format!("{s}: {e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not a finite number"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "snake_case")]
pub struct RunConfig {
    /// Dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Eigenvalue, in 2N + d.
    #[arg(long)]
    pub lambda: Option<u32>,
    #[arg(long, value_parser = parse_real)]
    pub p: Option<f64>,
    #[arg(long, value_parser = parse_real)]
    pub q: Option<f64>,
    /// Output shell width (dyadic; fractions such as 1/4 accepted).
    #[arg(long, value_parser = parse_real)]
    pub mu: Option<f64>,
    /// Input shell width (dyadic).
    #[arg(long = "mu-tilde", value_parser = parse_real)]
    pub mu_tilde: Option<f64>,
    /// Quadrature points per local wavelength.
    #[arg(long, value_parser = parse_real)]
    pub resolution: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file; flags override its entries.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Maximum number of grid points per operator side.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Finest dyadic cutoff level of the Mehler route.
    #[arg(long = "j-max")]
    pub j_max: Option<u32>,
    /// Relative tolerance of the oscillatory quadrature.
    #[arg(long, value_parser = parse_real)]
    pub tolerance: Option<f64>,
    /// Turning (radians) beyond which a monotone-phase piece is dropped.
    #[arg(long = "skip-phase", value_parser = parse_real)]
    pub skip_phase: Option<f64>,
    /// Random states per identity (phase-check).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Kernel evaluation pairs.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, value_enum)]
    pub slice: Option<Slice>,
    /// Comma-separated eigenvalues (endpoint sweep).
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<u32>>,
    /// Comma-separated shell widths (μ sweep).
    #[arg(long, value_delimiter = ',', value_parser = parse_real)]
    pub mus: Option<Vec<f64>>,
    /// Comma-separated input shell widths (asymmetry profile).
    #[arg(long = "mu-tildes", value_delimiter = ',', value_parser = parse_real)]
    pub mu_tildes: Option<Vec<f64>>,
    /// Power-method random restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Power-method relative stopping tolerance.
    #[arg(long = "power-tol", value_parser = parse_real)]
    pub power_tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Allowed |fitted − target| for slope verdicts.
    #[arg(long, value_parser = parse_real)]
    pub band: Option<f64>,
    /// Kernel verdict: max |difference| relative to max |K|.
    #[arg(long = "kernel-rel", value_parser = parse_real)]
    pub kernel_rel: Option<f64>,
    /// Asymmetry verdict: smallest accepted decay exponent c.
    #[arg(long = "min-gain", value_parser = parse_real)]
    pub min_gain: Option<f64>,
    /// Asymmetry verdict: relative rise tolerated between successive ratios.
    #[arg(long = "monotone-slack", value_parser = parse_real)]
    pub monotone_slack: Option<f64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    /// Fills every unset field from `lower`.
    pub fn or(mut self, lower: RunConfig) -> RunConfig {
        overlay!(self, lower; d, lambda, p, q, mu, mu_tilde, resolution, seed, out, config, budget,
            j_max, tolerance, skip_phase, samples, points, slice, lambdas, mus, mu_tildes,
            restarts, power_tol, max_iter, band, kernel_rel, min_gain, monotone_slack);
        self
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Flags layered over the config file named by `--config`, if any.
    pub fn layered(self) -> Result<RunConfig, CliError> {
        match self.config.clone() {
            Some(path) => Ok(self.or(RunConfig::from_file(&path)?)),
            None => Ok(self),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("hermproj-out"))
    }
}
