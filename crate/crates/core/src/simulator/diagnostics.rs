use super::{simulate, SimBatch, SimConfig, SimMethod};
use crate::asymptotics::limit_covariance;
use crate::error::{Error, Result};
use crate::queue::{QueueSpec, ScalingParams};
use crate::Model;

/// Fewest replications for which [`fclt_diagnostics`] reports anything.
pub const MIN_REPLICATIONS: usize = 1000;

/// Pass bands of [`fclt_diagnostics`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcltTolerances {
    /// Relative band of the sample variance around `v(t, 0)`; the lagged
    /// covariance uses the same band scaled by `v(t, 0)`.
    pub variance_rel: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Band for the sample mean, in units of the limit standard deviation.
    pub mean_sd: f64,
}

impl Default for FcltTolerances {
    fn default() -> Self {
        Self {
            variance_rel: 0.10,
            skewness: 0.1,
            excess_kurtosis: 0.3,
            mean_sd: 0.1,
        }
    }
}

/// Diagnostics of the normalized count at one sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcltRow {
    pub t: f64,
    pub mean: f64,
    pub se_mean: f64,
    pub mean_pass: bool,
    pub var: f64,
    pub se_var: f64,
    pub limit_var: f64,
    pub var_pass: bool,
    pub cov: f64,
    pub se_cov: f64,
    pub limit_cov: f64,
    pub cov_pass: bool,
    pub skewness: f64,
    pub skew_pass: bool,
    pub excess_kurtosis: f64,
    pub kurtosis_pass: bool,
}

impl FcltRow {
    pub fn passed(&self) -> bool {
        self.mean_pass && self.var_pass && self.cov_pass && self.skew_pass && self.kurtosis_pass
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcltReport {
    pub model: Model,
    pub alpha: f64,
    pub n: f64,
    pub lag: f64,
    pub tolerances: FcltTolerances,
    pub rows: Vec<FcltRow>,
}

impl FcltReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(FcltRow::passed)
    }
}

/// Compares the normalized counts of `batch` with the Gaussian limit: mean,
/// variance against `v(t, 0)`, lagged covariance against `v(t, lag)`,
/// skewness and excess kurtosis.
pub fn fclt_diagnostics(batch: &SimBatch, cfg: &SimConfig) -> Result<FcltReport> {
    fclt_diagnostics_with(batch, cfg, FcltTolerances::default())
}

pub fn fclt_diagnostics_with(
    batch: &SimBatch,
    cfg: &SimConfig,
    tol: FcltTolerances,
) -> Result<FcltReport> {
    let r = batch.replications();
    if r < MIN_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            got: r,
            min: MIN_REPLICATIONS,
        });
    }
    if batch.sample_times != cfg.sample_times || batch.model != cfg.model {
        return Err(Error::ConfigError(
            "batch was not produced by this config".into(),
        ));
    }
    let alpha = cfg.scaling.alpha();
    let rows = batch
        .sample_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let xs: Vec<f64> = batch.normalized.iter().map(|row| row[k]).collect();
            let ys: Vec<f64> = batch.normalized_lagged.iter().map(|row| row[k]).collect();
            let est = super::moment_estimate(t, &xs, &ys);
            let shape = Shape::of(&xs);
            let limit_var = limit_covariance(&cfg.spec, cfg.model, alpha, t, 0.0)?;
            let limit_cov = limit_covariance(&cfg.spec, cfg.model, alpha, t, cfg.lag)?;
            let band = tol.variance_rel * limit_var;
            Ok(FcltRow {
                t,
                mean: est.mean,
                se_mean: est.se_mean,
                mean_pass: est.mean.abs() <= tol.mean_sd * limit_var.sqrt() + 3.0 * est.se_mean,
                var: est.var,
                se_var: est.se_var,
                limit_var,
                var_pass: (est.var - limit_var).abs() <= band,
                cov: est.cov,
                se_cov: est.se_cov,
                limit_cov,
                cov_pass: (est.cov - limit_cov).abs() <= band,
                skewness: shape.skewness,
                skew_pass: shape.skewness.abs() < tol.skewness,
                excess_kurtosis: shape.excess_kurtosis,
                kurtosis_pass: shape.excess_kurtosis.abs() < tol.excess_kurtosis,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FcltReport {
        model: cfg.model,
        alpha,
        n: cfg.scaling.n(),
        lag: cfg.lag,
        tolerances: tol,
        rows,
    })
}

struct Shape {
    skewness: f64,
    excess_kurtosis: f64,
}

impl Shape {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for x in xs {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        if m2 == 0.0 {
            return Self {
                skewness: 0.0,
                excess_kurtosis: 0.0,
            };
        }
        Self {
            skewness: m3 / m2.powf(1.5),
            excess_kurtosis: m4 / (m2 * m2) - 3.0,
        }
    }
}

/// A variance-scaling experiment over `α` and `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub model: Model,
    pub alphas: Vec<f64>,
    /// Scales in increasing order.
    pub ns: Vec<f64>,
    /// Observation time; defaults to `40 / min(μ_min, μ∞)`, by which the
    /// queue has forgotten its empty start.
    pub t_star: Option<f64>,
    pub replications: usize,
    pub seed: u64,
    pub method: SimMethod,
}

/// One `(α, N)` cell: `Var M^{(N)}(t*) / N^{2β}` against `v(t*, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub alpha: f64,
    pub n: f64,
    pub ratio: f64,
    pub se_ratio: f64,
    pub limit: f64,
    pub engine: SimMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub t_star: f64,
    /// Cells in `α`-major order.
    pub cells: Vec<SweepCell>,
    /// `α` values where the largest `N` is not strictly closer to the limit
    /// than the smallest.
    pub pointwise_violations: Vec<f64>,
    /// `sup_α |ratio − limit|` per `N`.
    pub sup_errors: Vec<f64>,
}

impl SweepReport {
    /// Whether the largest `N` is closer to the limit than the smallest in
    /// the sup norm over `α`.
    pub fn sup_norm_ordered(&self) -> bool {
        match (self.sup_errors.first(), self.sup_errors.last()) {
            (Some(small), Some(large)) if self.sup_errors.len() > 1 => large < small,
            _ => true,
        }
    }

    pub fn cell(&self, alpha: f64, n: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.alpha == alpha && c.n == n)
    }
}

/// Simulates `Var M^{(N)}(t*)` for every `(α, N)` and normalizes by the
/// predicted growth `N^{2β}`.
pub fn variance_scaling_sweep(spec: &QueueSpec, cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.alphas.is_empty() || cfg.ns.is_empty() {
        return Err(Error::ConfigError(
            "sweep needs at least one alpha and one N".into(),
        ));
    }
    let t_star = cfg
        .t_star
        .unwrap_or_else(|| 40.0 / spec.mu_min().min(spec.mu_inf()));
    let mut cells = Vec::with_capacity(cfg.alphas.len() * cfg.ns.len());
    for (a, &alpha) in cfg.alphas.iter().enumerate() {
        let limit = limit_covariance(spec, cfg.model, alpha, t_star, 0.0)?;
        for (b, &n) in cfg.ns.iter().enumerate() {
            let scaling = ScalingParams::new(n, alpha)?;
            let cell_index = (a * cfg.ns.len() + b) as u64;
            let sim = SimConfig::new(
                spec.clone(),
                scaling,
                cfg.model,
                vec![t_star],
                0.0,
                cfg.replications,
                cfg.seed
                    .wrapping_add(cell_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            )
            .with_method(cfg.method);
            let batch = simulate(&sim)?;
            let est = batch.estimates[0];
            let growth = scaling.variance_scale();
            cells.push(SweepCell {
                alpha,
                n,
                ratio: est.var / growth,
                se_ratio: est.se_var / growth,
                limit,
                engine: batch.engine,
            });
        }
    }
    let width = cfg.ns.len();
    let err = |c: &SweepCell| (c.ratio - c.limit).abs();
    let pointwise_violations = cells
        .chunks(width)
        .filter(|row| width > 1 && err(&row[width - 1]) >= err(&row[0]))
        .map(|row| row[0].alpha)
        .collect();
    let sup_errors = (0..width)
        .map(|b| {
            cells
                .iter()
                .skip(b)
                .step_by(width)
                .map(err)
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(SweepReport {
        t_star,
        cells,
        pointwise_violations,
        sup_errors,
    })
}
