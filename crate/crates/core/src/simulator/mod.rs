//! Monte Carlo simulation of the scaled queue `(N^α Q, Nλ, μ)`.
//!
//! Three engines share one interface:
//!
//! * [`SimMethod::Gillespie`] simulates the joint chain `(J, M)` event by
//!   event.
//! * [`SimMethod::ConditionalPoisson`] simulates the background path event by
//!   event and samples the queue from its conditional law. Given the path,
//!   arrivals form a Poisson process and jobs leave independently, so counts at
//!   consecutive observation times are a binomial thinning of the previous
//!   count plus an independent Poisson number of new survivors. This is exact
//!   in distribution and costs nothing per job.
//! * [`SimMethod::DiffusionBackground`] replaces the background occupation
//!   times over short steps by their Gaussian approximation. It is only
//!   accurate when the background jumps many times per step, and exists for
//!   large `N^α` where exact background paths are too long.
//!
//! Replication `r` draws from the ChaCha stream `r` of the root seed, and
//! results are collected in replication order, so a batch does not depend on
//! the number of threads.

mod diagnostics;
mod engines;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::asymptotics;
use crate::error::{Error, Result};
use crate::queue::{QueueSpec, ScalingParams};
use crate::Model;

pub use diagnostics::{
    fclt_diagnostics, variance_scaling_sweep, FcltReport, FcltRow, FcltTolerances, SweepCell,
    SweepConfig, SweepReport, MIN_REPLICATIONS,
};

/// Simulation engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMethod {
    /// Pick an engine from the expected amount of work, see [`SimConfig::engine`].
    Auto,
    Gillespie,
    ConditionalPoisson,
    DiffusionBackground,
}

/// Expected events per replication up to which [`SimMethod::Auto`] uses Gillespie.
pub const GILLESPIE_MAX_EVENTS: f64 = 1e5;
/// Expected background jumps per replication up to which [`SimMethod::Auto`]
/// simulates the background path exactly.
pub const EXACT_BACKGROUND_MAX_JUMPS: f64 = 2e5;
/// Minimum expected background jumps per step for the diffusion engine.
pub const DIFFUSION_MIN_JUMPS_PER_STEP: f64 = 50.0;

/// A simulation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Unscaled spec; the simulator applies `scaling`.
    pub spec: QueueSpec,
    pub scaling: ScalingParams,
    pub model: Model,
    /// Simulated time span `[0, horizon]`.
    pub horizon: f64,
    /// Strictly increasing observation times.
    pub sample_times: Vec<f64>,
    /// Each sample time `t` is paired with `t + lag`.
    pub lag: f64,
    pub replications: usize,
    pub seed: u64,
    pub method: SimMethod,
}

impl SimConfig {
    /// A config whose horizon is the last lagged observation time.
    pub fn new(
        spec: QueueSpec,
        scaling: ScalingParams,
        model: Model,
        sample_times: Vec<f64>,
        lag: f64,
        replications: usize,
        seed: u64,
    ) -> Self {
        let horizon = sample_times.last().copied().unwrap_or(0.0) + lag;
        Self {
            spec,
            scaling,
            model,
            horizon,
            sample_times,
            lag,
            replications,
            seed,
            method: SimMethod::Auto,
        }
    }

    pub fn with_method(mut self, method: SimMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigError(msg));
        if self.sample_times.is_empty() {
            return bad("sample_times is empty".into());
        }
        if self
            .sample_times
            .iter()
            .any(|t| !(*t >= 0.0 && t.is_finite()))
        {
            return bad("sample_times must be finite and nonnegative".into());
        }
        if self.sample_times.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("sample_times must be strictly increasing".into());
        }
        if !(self.lag >= 0.0 && self.lag.is_finite()) {
            return bad(format!("lag must be nonnegative, got {}", self.lag));
        }
        if !(self.horizon.is_finite()) {
            return bad("horizon must be finite".into());
        }
        let last = self.sample_times.last().unwrap() + self.lag;
        if last > self.horizon * (1.0 + 1e-12) {
            return bad(format!(
                "last observation {last} lies beyond the horizon {}",
                self.horizon
            ));
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        Ok(())
    }

    /// The engine actually used.
    ///
    /// `Auto` takes Gillespie when a replication is expected to have at most
    /// [`GILLESPIE_MAX_EVENTS`] events, the conditional engine when the
    /// background makes at most [`EXACT_BACKGROUND_MAX_JUMPS`] jumps, and
    /// otherwise the diffusion engine provided each step still spans
    /// [`DIFFUSION_MIN_JUMPS_PER_STEP`] jumps.
    pub fn engine(&self) -> SimMethod {
        if self.method != SimMethod::Auto {
            return self.method;
        }
        let scaled = self.spec.scaled(&self.scaling);
        let jumps = background_rate(&scaled) * self.horizon;
        let events = 2.0 * scaled.lambda_inf() * self.horizon + jumps;
        if events <= GILLESPIE_MAX_EVENTS {
            SimMethod::Gillespie
        } else if jumps <= EXACT_BACKGROUND_MAX_JUMPS {
            SimMethod::ConditionalPoisson
        } else if background_rate(&scaled) * diffusion_step(&scaled) >= DIFFUSION_MIN_JUMPS_PER_STEP
        {
            SimMethod::DiffusionBackground
        } else {
            SimMethod::ConditionalPoisson
        }
    }
}

/// Stationary background jump rate `Σ_i π_i q_i`.
fn background_rate(spec: &QueueSpec) -> f64 {
    (0..spec.dim())
        .map(|i| spec.pi()[i] * spec.generator().exit_rate(i))
        .sum()
}

/// Step of the diffusion engine, `0.01 / max μ`.
fn diffusion_step(spec: &QueueSpec) -> f64 {
    0.01 / spec.mu_max()
}

/// Point estimates with standard errors at one sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub t: f64,
    pub mean: f64,
    pub se_mean: f64,
    pub var: f64,
    pub se_var: f64,
    /// `Cov(M(t), M(t + lag))`.
    pub cov: f64,
    pub se_cov: f64,
}

/// Results of a batch of replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SimBatch {
    pub model: Model,
    pub engine: SimMethod,
    pub sample_times: Vec<f64>,
    pub lag: f64,
    pub scaling: ScalingParams,
    /// `counts[r][k] = M(t_k)` in replication `r`.
    pub counts: Vec<Vec<u64>>,
    /// `lagged[r][k] = M(t_k + lag)`.
    pub lagged: Vec<Vec<u64>>,
    /// Model II only: `type_counts[r][k * d + i] = M_i(t_k)`.
    pub type_counts: Vec<Vec<u64>>,
    /// Fraction of `[0, horizon]` spent in each background state, per replication.
    pub occupation: Vec<Vec<f64>>,
    pub estimates: Vec<MomentEstimate>,
    /// `normalized[r][k] = N^{−β}(M(t_k) − Nϱ(t_k))`.
    pub normalized: Vec<Vec<f64>>,
    /// Same for `M(t_k + lag)`.
    pub normalized_lagged: Vec<Vec<f64>>,
}

impl SimBatch {
    pub fn replications(&self) -> usize {
        self.counts.len()
    }

    /// Mean occupation fractions and their standard errors.
    pub fn occupation_estimate(&self) -> (DVector<f64>, DVector<f64>) {
        let d = self.occupation.first().map_or(0, Vec::len);
        let mut mean = DVector::zeros(d);
        let mut se = DVector::zeros(d);
        for i in 0..d {
            let xs: Vec<f64> = self.occupation.iter().map(|o| o[i]).collect();
            let (m, s) = mean_and_se(&xs);
            mean[i] = m;
            se[i] = s;
        }
        (mean, se)
    }
}

/// Output of one replication.
#[derive(Debug, Clone, Default)]
pub(crate) struct Replication {
    pub counts: Vec<u64>,
    pub lagged: Vec<u64>,
    pub types: Vec<u64>,
    pub occupation: Vec<f64>,
}

/// Observation schedule: every sample time and every lagged time, sorted.
#[derive(Debug, Clone)]
pub(crate) struct Schedule {
    /// `(time, slot)` with slot `k` for `t_k` and `K + k` for `t_k + lag`.
    pub points: Vec<(f64, usize)>,
    pub k: usize,
    pub horizon: f64,
}

impl Schedule {
    fn new(cfg: &SimConfig) -> Self {
        let k = cfg.sample_times.len();
        let mut points: Vec<(f64, usize)> = cfg
            .sample_times
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, i))
            .chain(
                cfg.sample_times
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| (t + cfg.lag, k + i)),
            )
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self {
            points,
            k,
            horizon: cfg.horizon,
        }
    }
}

/// Runs `cfg.replications` replications in parallel.
pub fn simulate(cfg: &SimConfig) -> Result<SimBatch> {
    cfg.validate()?;
    let engine = cfg.engine();
    let scaled = cfg.spec.scaled(&cfg.scaling);
    let schedule = Schedule::new(cfg);
    let runner = engines::Runner::new(&scaled, cfg.model, engine, &schedule)?;

    let reps: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            runner.run(&mut rng, r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(cfg, engine, reps))
}

/// Model I batch.
pub fn simulate_model1(cfg: &SimConfig) -> Result<SimBatch> {
    simulate(&SimConfig {
        model: Model::I,
        ..cfg.clone()
    })
}

/// Model II batch.
pub fn simulate_model2(cfg: &SimConfig) -> Result<SimBatch> {
    simulate(&SimConfig {
        model: Model::II,
        ..cfg.clone()
    })
}

fn assemble(cfg: &SimConfig, engine: SimMethod, reps: Vec<Replication>) -> SimBatch {
    let k = cfg.sample_times.len();
    let n = cfg.scaling.n();
    let norm = n.powf(-cfg.scaling.beta());
    let centre: Vec<f64> = cfg
        .sample_times
        .iter()
        .map(|&t| n * asymptotics::limit_mean(&cfg.spec, cfg.model, t))
        .collect();
    let centre_lagged: Vec<f64> = cfg
        .sample_times
        .iter()
        .map(|&t| n * asymptotics::limit_mean(&cfg.spec, cfg.model, t + cfg.lag))
        .collect();

    let mut counts = Vec::with_capacity(reps.len());
    let mut lagged = Vec::with_capacity(reps.len());
    let mut type_counts = Vec::with_capacity(reps.len());
    let mut occupation = Vec::with_capacity(reps.len());
    for r in reps {
        counts.push(r.counts);
        lagged.push(r.lagged);
        type_counts.push(r.types);
        occupation.push(r.occupation);
    }
    let normalized: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| (0..k).map(|j| norm * (row[j] as f64 - centre[j])).collect())
        .collect();
    let normalized_lagged: Vec<Vec<f64>> = lagged
        .iter()
        .map(|row| {
            (0..k)
                .map(|j| norm * (row[j] as f64 - centre_lagged[j]))
                .collect()
        })
        .collect();
    let estimates = (0..k)
        .map(|j| {
            let xs: Vec<f64> = counts.iter().map(|c| c[j] as f64).collect();
            let ys: Vec<f64> = lagged.iter().map(|c| c[j] as f64).collect();
            moment_estimate(cfg.sample_times[j], &xs, &ys)
        })
        .collect();
    if cfg.model == Model::I {
        type_counts.iter_mut().for_each(Vec::clear);
    }
    SimBatch {
        model: cfg.model,
        engine,
        sample_times: cfg.sample_times.clone(),
        lag: cfg.lag,
        scaling: cfg.scaling,
        counts,
        lagged,
        type_counts,
        occupation,
        estimates,
        normalized,
        normalized_lagged,
    }
}

/// Sample mean and its standard error `s/√R`.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean, variance and lagged covariance of paired samples with standard
/// errors. Variance and covariance use plug-in means; their standard errors
/// are those of the mean of the centred (cross) products.
pub fn moment_estimate(t: f64, xs: &[f64], ys: &[f64]) -> MomentEstimate {
    let (mean, se_mean) = mean_and_se(xs);
    let (mean_y, _) = mean_and_se(ys);
    let n = xs.len() as f64;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let cross: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mean) * (y - mean_y))
        .collect();
    let (var_b, se_var) = mean_and_se(&sq);
    let (cov_b, se_cov) = mean_and_se(&cross);
    let unbias = if n > 1.0 { n / (n - 1.0) } else { f64::NAN };
    MomentEstimate {
        t,
        mean,
        se_mean,
        var: var_b * unbias,
        se_var,
        cov: cov_b * unbias,
        se_cov,
    }
}

#[cfg(test)]
mod tests;
