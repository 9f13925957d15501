//! Experiment configuration files.
//!
//! A config is a JSON document; unknown keys anywhere are rejected so that a
//! misspelled rate name fails loudly instead of silently taking a default.

use std::path::{Path, PathBuf};

use mmiq_core::simulator::SimMethod;
use mmiq_core::{Model, QueueSpec, ScalingParams};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub queue: QueueConfig,
    pub model: ModelName,
    #[serde(default)]
    pub scaling: ScalingConfig,
    pub times: TimesConfig,
    #[serde(default)]
    pub lag: f64,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub figure: FigureConfig,
}

/// Generator rows, arrival rates and service rates of the unscaled queue.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueConfig {
    pub q: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum ModelName {
    I,
    II,
}

impl From<ModelName> for Model {
    fn from(m: ModelName) -> Self {
        match m {
            ModelName::I => Model::I,
            ModelName::II => Model::II,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default = "one")]
    pub n: f64,
    #[serde(default = "one")]
    pub alpha: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { n: 1.0, alpha: 1.0 }
    }
}

/// Evaluation times: an explicit `grid`, an evenly spaced `range`, or a
/// single `t_star`. `t_star` alone doubles as the grid.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesConfig {
    pub grid: Option<Vec<f64>>,
    pub range: Option<RangeConfig>,
    pub t_star: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    #[serde(default)]
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: MethodName,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            replications: default_replications(),
            seed: 0,
            method: MethodName::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    Auto,
    Gillespie,
    ConditionalPoisson,
    Diffusion,
}

impl From<MethodName> for SimMethod {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::Auto => SimMethod::Auto,
            MethodName::Gillespie => SimMethod::Gillespie,
            MethodName::ConditionalPoisson => SimMethod::ConditionalPoisson,
            MethodName::Diffusion => SimMethod::DiffusionBackground,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Gnuplot,
}

/// Figure parameters. `ns` holds the two scales compared in `fig3`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureConfig {
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default = "default_u_points")]
    pub u_points: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_ns")]
    pub ns: Vec<f64>,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            u_max: default_u_max(),
            u_points: default_u_points(),
            alphas: default_alphas(),
            ns: default_ns(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_replications() -> usize {
    10_000
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Gnuplot]
}
fn default_u_max() -> f64 {
    3.0
}
fn default_u_points() -> usize {
    61
}
fn default_alphas() -> Vec<f64> {
    (1..=50).map(|k| k as f64 * 0.05).collect()
}
fn default_ns() -> Vec<f64> {
    vec![100.0, 100_000.0]
}

/// Largest `N` used when `--downscale` is given.
pub const DOWNSCALE_CAP: f64 = 1e4;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and checks everything that does not need numerics.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let d = self.queue.q.len();
        if d == 0 {
            return bad("queue.q: generator needs at least one row".into());
        }
        if self.queue.lambda.len() != d {
            return bad(format!(
                "queue.lambda: expected {d} entries, got {}",
                self.queue.lambda.len()
            ));
        }
        if self.queue.mu.len() != d {
            return bad(format!(
                "queue.mu: expected {d} entries, got {}",
                self.queue.mu.len()
            ));
        }
        if !(self.scaling.n > 0.0 && self.scaling.n.is_finite()) {
            return bad(format!(
                "scaling.n must be positive, got {}",
                self.scaling.n
            ));
        }
        if !(self.scaling.alpha > 0.0 && self.scaling.alpha.is_finite()) {
            return bad(format!(
                "scaling.alpha must be positive, got {}",
                self.scaling.alpha
            ));
        }
        if !(self.lag >= 0.0 && self.lag.is_finite()) {
            return bad(format!(
                "lag must be finite and nonnegative, got {}",
                self.lag
            ));
        }
        if let Some(t) = self.times.t_star {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("times.t_star must be positive, got {t}"));
            }
        }
        self.grid()?;
        let fig = &self.figure;
        if !(fig.u_max > 0.0 && fig.u_max.is_finite()) || fig.u_points < 2 {
            return bad("figure: u_max must be positive and u_points at least 2".into());
        }
        if fig.alphas.is_empty() || fig.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return bad("figure.alphas: need at least one positive value".into());
        }
        if fig.ns.len() != 2 || fig.ns.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
            return bad("figure.ns: need exactly two positive scales".into());
        }
        Ok(())
    }

    /// Evaluation grid, strictly increasing and nonnegative.
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        let t = &self.times;
        let grid = match (&t.grid, &t.range, t.t_star) {
            (Some(_), Some(_), _) => {
                return Err(CliError::Config(
                    "times: give either grid or range, not both".into(),
                ))
            }
            (Some(g), None, _) => g.clone(),
            (None, Some(r), _) => {
                if r.points < 2 || !(r.stop > r.start) {
                    return Err(CliError::Config(
                        "times.range: need stop > start and at least 2 points".into(),
                    ));
                }
                let h = (r.stop - r.start) / (r.points - 1) as f64;
                (0..r.points).map(|k| r.start + h * k as f64).collect()
            }
            (None, None, Some(ts)) => vec![ts],
            (None, None, None) => {
                return Err(CliError::Config(
                    "times: one of grid, range or t_star is required".into(),
                ))
            }
        };
        if grid.is_empty() {
            return Err(CliError::Config("times.grid is empty".into()));
        }
        if grid.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(CliError::Config(
                "times.grid: times must be finite and nonnegative".into(),
            ));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config(
                "times.grid must be strictly increasing".into(),
            ));
        }
        Ok(grid)
    }

    pub fn model(&self) -> Model {
        self.model.into()
    }

    /// The unscaled queue; invalid rates are reported against their field.
    pub fn spec(&self) -> Result<QueueSpec, CliError> {
        self.spec_with_mu(self.queue.mu.clone())
    }

    pub fn spec_with_mu(&self, mu: Vec<f64>) -> Result<QueueSpec, CliError> {
        use mmiq_core::Error;
        QueueSpec::from_rows(&self.queue.q, self.queue.lambda.clone(), mu).map_err(|e| {
            let field = match &e {
                Error::InvalidGenerator(_) => "queue.q",
                Error::InvalidSpec(msg) if msg.contains("service") => "queue.mu",
                Error::InvalidSpec(_) => "queue.lambda",
                _ => "queue",
            };
            CliError::Config(format!("{field}: {e}"))
        })
    }

    /// Scaling with `N` capped when downscaling.
    pub fn scaling(&self, downscale: bool) -> Result<ScalingParams, CliError> {
        ScalingParams::new(cap(self.scaling.n, downscale), self.scaling.alpha)
            .map_err(|e| CliError::Config(format!("scaling: {e}")))
    }

    pub fn wants(&self, format: Format) -> bool {
        self.outputs.formats.contains(&format)
    }
}

pub fn cap(n: f64, downscale: bool) -> f64 {
    if downscale {
        n.min(DOWNSCALE_CAP)
    } else {
        n
    }
}
