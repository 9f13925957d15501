//! The `analyze`, `simulate` and `figure` commands.

use std::path::{Path, PathBuf};

use mmiq_core::asymptotics::limit_covariance;
use mmiq_core::simulator::{self, fclt_diagnostics, SimConfig, MIN_REPLICATIONS};
use mmiq_core::{model1, model2, Error, Model, QueueSpec, ScalingParams};
use serde::Serialize;

use crate::config::{cap, ExperimentConfig, Format};
use crate::error::{CliError, Context};
use crate::output::{csv, Cell, GnuplotScript, OutputDir};

/// Figures that `mmiq figure` can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FigureName {
    /// Stationary covariance against the lag for both service-rate orderings.
    Fig2,
    /// Scaled stationary variance against the modulation exponent.
    Fig3,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    model: String,
    alpha: f64,
    n_requested: Vec<f64>,
    n_used: Vec<f64>,
    downscaled: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    engine: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_star: Option<f64>,
    notes: Vec<&'a str>,
}

impl<'a> Metadata<'a> {
    fn new(command: &'a str, cfg: &ExperimentConfig, ns: &[f64], downscale: bool) -> Self {
        let used: Vec<f64> = ns.iter().map(|&n| cap(n, downscale)).collect();
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            model: cfg.model().to_string(),
            alpha: cfg.scaling.alpha,
            downscaled: used != ns,
            n_requested: ns.to_vec(),
            n_used: used,
            engine: None,
            t_star: None,
            notes: Vec::new(),
        }
    }
}

fn out_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.outputs.directory.clone())
        .unwrap_or_else(|| PathBuf::from("mmiq-out"))
}

/// Mean of the scaled system at `t`.
pub fn scaled_mean(
    spec: &QueueSpec,
    scaling: &ScalingParams,
    model: Model,
    grid: &[f64],
) -> Result<Vec<f64>, CliError> {
    match model {
        Model::I => Ok(model1::mean_trajectory(spec, scaling, grid)
            .during("model1::mean_trajectory")?
            .iter()
            .map(|m| m.sum())
            .collect()),
        Model::II => {
            let scaled = spec.scaled(scaling);
            grid.iter()
                .map(|&t| model2::mean_m2(&scaled, t).during("model2::mean_m2"))
                .collect()
        }
    }
}

/// `Cov(M(t), M(t+u))` of an already scaled system.
pub fn covariance(scaled: &QueueSpec, model: Model, t: f64, u: f64) -> Result<f64, CliError> {
    match model {
        Model::I => model1::covariance(scaled, t, u).during("model1::covariance"),
        Model::II => model2::covariance_m2(scaled, t, u).during("model2::covariance_m2"),
    }
}

/// Stationary `Cov(M(t), M(t+u))` of an already scaled system.
pub fn stationary_covariance(scaled: &QueueSpec, model: Model, u: f64) -> Result<f64, CliError> {
    match model {
        Model::I => {
            model1::stationary_covariance(scaled, u).during("model1::stationary_covariance")
        }
        Model::II => {
            model2::stationary_covariance_m2(scaled, u).during("model2::stationary_covariance_m2")
        }
    }
}

fn lags(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.lag > 0.0 {
        vec![0.0, cfg.lag]
    } else {
        vec![0.0]
    }
}

/// Writes `mean.csv`, `cov.csv` and `limits.csv`.
pub fn analyze(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    downscale: bool,
) -> Result<Vec<PathBuf>, CliError> {
    let spec = cfg.spec()?;
    let scaling = cfg.scaling(downscale)?;
    let model = cfg.model();
    let grid = cfg.grid()?;
    let scaled = spec.scaled(&scaling);

    let means = scaled_mean(&spec, &scaling, model, &grid)?;
    let mean_rows: Vec<Vec<Cell>> = grid
        .iter()
        .zip(&means)
        .map(|(&t, &m)| vec![t.into(), m.into()])
        .collect();

    let mut cov_rows = Vec::new();
    let mut limit_rows = Vec::new();
    for &t in &grid {
        for u in lags(cfg) {
            cov_rows.push(vec![
                t.into(),
                u.into(),
                covariance(&scaled, model, t, u)?.into(),
            ]);
            let v = limit_covariance(&spec, model, scaling.alpha(), t, u)
                .during("asymptotics::limit_covariance")?;
            limit_rows.push(vec![t.into(), u.into(), scaling.alpha().into(), v.into()]);
        }
    }

    let mut dir = OutputDir::create(&out_dir(cfg, out))?;
    dir.write("mean.csv", &csv(&["t", "mean"], &mean_rows))?;
    dir.write("cov.csv", &csv(&["t", "u", "cov"], &cov_rows))?;
    dir.write("limits.csv", &csv(&["t", "u", "alpha", "v"], &limit_rows))?;
    dir.metadata(&Metadata::new("analyze", cfg, &[cfg.scaling.n], downscale))?;
    Ok(dir.into_files())
}

/// Writes `sim_moments.csv` and `fclt_report.csv`.
pub fn simulate(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    downscale: bool,
) -> Result<Vec<PathBuf>, CliError> {
    let spec = cfg.spec()?;
    let scaling = cfg.scaling(downscale)?;
    if cfg.sim.replications < MIN_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            got: cfg.sim.replications,
            min: MIN_REPLICATIONS,
        })
        .during("fclt_diagnostics");
    }
    let sim = SimConfig::new(
        spec,
        scaling,
        cfg.model(),
        cfg.grid()?,
        cfg.lag,
        cfg.sim.replications,
        cfg.sim.seed,
    )
    .with_method(cfg.sim.method.into());
    sim.validate()
        .map_err(|e| CliError::Config(format!("sim: {e}")))?;
    let batch = simulator::simulate(&sim).during("simulate")?;
    let report = fclt_diagnostics(&batch, &sim).during("fclt_diagnostics")?;

    let moments: Vec<Vec<Cell>> = batch
        .estimates
        .iter()
        .map(|e| {
            [e.t, e.mean, e.se_mean, e.var, e.se_var, e.cov, e.se_cov]
                .into_iter()
                .map(Cell::F)
                .collect()
        })
        .collect();
    let fclt: Vec<Vec<Cell>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row: Vec<Cell> = [
                r.t,
                r.mean,
                r.se_mean,
                r.var,
                r.se_var,
                r.limit_var,
                r.cov,
                r.se_cov,
                r.limit_cov,
                r.skewness,
                r.excess_kurtosis,
            ]
            .into_iter()
            .map(Cell::F)
            .collect();
            row.push(Cell::Flag(r.passed()));
            row
        })
        .collect();

    let mut dir = OutputDir::create(&out_dir(cfg, out))?;
    dir.write(
        "sim_moments.csv",
        &csv(
            &[
                "t", "est_mean", "se_mean", "est_var", "se_var", "est_cov", "se_cov",
            ],
            &moments,
        ),
    )?;
    dir.write(
        "fclt_report.csv",
        &csv(
            &[
                "t",
                "mean",
                "se_mean",
                "var",
                "se_var",
                "limit_var",
                "cov",
                "se_cov",
                "limit_cov",
                "skewness",
                "excess_kurtosis",
                "pass",
            ],
            &fclt,
        ),
    )?;
    let mut meta = Metadata::new("simulate", cfg, &[cfg.scaling.n], downscale);
    meta.engine = Some(format!("{:?}", batch.engine));
    meta.notes
        .push("fclt_report rows compare the counts normalized by N^beta with the limit covariance");
    dir.metadata(&meta)?;
    Ok(dir.into_files())
}

/// Rows `(u, Cov with μ reversed, Cov with μ as configured)` of a system
/// started in stationarity.
pub fn fig2_table(cfg: &ExperimentConfig, downscale: bool) -> Result<Vec<[f64; 3]>, CliError> {
    let scaling = cfg.scaling(downscale)?;
    let model = cfg.model();
    let forward = cfg.spec()?.scaled(&scaling);
    let mut rev = cfg.queue.mu.clone();
    rev.reverse();
    let reversed = cfg.spec_with_mu(rev)?.scaled(&scaling);
    let fig = &cfg.figure;
    let h = fig.u_max / (fig.u_points - 1) as f64;
    (0..fig.u_points)
        .map(|k| {
            let u = h * k as f64;
            Ok([
                u,
                stationary_covariance(&reversed, model, u)?,
                stationary_covariance(&forward, model, u)?,
            ])
        })
        .collect()
}

/// Time at which `fig3` evaluates the limit curve.
pub fn fig3_t_star(cfg: &ExperimentConfig, spec: &QueueSpec) -> f64 {
    cfg.times
        .t_star
        .unwrap_or_else(|| spec.relaxation_horizon())
}

/// Rows `(α, Var/N₁^{2β}, Var/N₂^{2β}, v(t*, 0))` with stationary variances.
pub fn fig3_table(cfg: &ExperimentConfig, downscale: bool) -> Result<Vec<[f64; 4]>, CliError> {
    let spec = cfg.spec()?;
    let model = cfg.model();
    let t_star = fig3_t_star(cfg, &spec);
    let ns: Vec<f64> = cfg.figure.ns.iter().map(|&n| cap(n, downscale)).collect();
    cfg.figure
        .alphas
        .iter()
        .map(|&alpha| {
            let mut row = [alpha, 0.0, 0.0, 0.0];
            for (k, &n) in ns.iter().enumerate() {
                let scaling = ScalingParams::new(n, alpha)
                    .map_err(|e| CliError::Config(format!("figure: {e}")))?;
                let var = stationary_covariance(&spec.scaled(&scaling), model, 0.0)?;
                row[k + 1] = var / scaling.variance_scale();
            }
            row[3] = limit_covariance(&spec, model, alpha, t_star, 0.0)
                .during("asymptotics::limit_covariance")?;
            Ok(row)
        })
        .collect()
}

pub fn figure(
    name: FigureName,
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    downscale: bool,
) -> Result<Vec<PathBuf>, CliError> {
    let mut dir;
    match name {
        FigureName::Fig2 => {
            let rows = fig2_table(cfg, downscale)?;
            let cells: Vec<Vec<Cell>> = rows
                .iter()
                .map(|r| r.iter().map(|&x| Cell::F(x)).collect())
                .collect();
            dir = OutputDir::create(&out_dir(cfg, out))?;
            dir.write("fig2.csv", &csv(&["u", "cov_mu_21", "cov_mu_12"], &cells))?;
            if cfg.wants(Format::Gnuplot) {
                let script = GnuplotScript {
                    data: "fig2.csv",
                    xlabel: "u",
                    ylabel: "Cov(M(t), M(t+u))",
                    title: format!("stationary covariance, model {}", cfg.model()),
                    series: vec![
                        (2, format!("mu = {:?}", reversed(&cfg.queue.mu)), 2),
                        (3, format!("mu = {:?}", cfg.queue.mu), 1),
                    ],
                    logscale_x: false,
                };
                dir.write("fig2.gp", &script.render())?;
            }
            let mut meta = Metadata::new("figure fig2", cfg, &[cfg.scaling.n], downscale);
            meta.notes.push("cov_mu_21 uses the configured service rates in reverse order, cov_mu_12 as configured");
            dir.metadata(&meta)?;
        }
        FigureName::Fig3 => {
            let rows = fig3_table(cfg, downscale)?;
            let cells: Vec<Vec<Cell>> = rows
                .iter()
                .map(|r| r.iter().map(|&x| Cell::F(x)).collect())
                .collect();
            let mut meta = Metadata::new("figure fig3", cfg, &cfg.figure.ns, downscale);
            meta.t_star = Some(fig3_t_star(cfg, &cfg.spec()?));
            meta.notes.push("ratios are stationary variances divided by N^(2 beta), beta = max(1, 2 - alpha) / 2");
            meta.notes.push("limit is the limit variance v(t_star, 0)");
            if meta.downscaled {
                meta.notes
                    .push("scales above 1e4 were capped at 1e4 (--downscale)");
            }
            dir = OutputDir::create(&out_dir(cfg, out))?;
            dir.write(
                "fig3.csv",
                &csv(&["alpha", "ratio_N1", "ratio_N2", "limit"], &cells),
            )?;
            if cfg.wants(Format::Gnuplot) {
                let script = GnuplotScript {
                    data: "fig3.csv",
                    xlabel: "alpha",
                    ylabel: "Var M / N^(2 beta)",
                    title: format!("scaled stationary variance, model {}", cfg.model()),
                    series: vec![
                        (2, format!("N = {}", meta.n_used[0]), 2),
                        (3, format!("N = {}", meta.n_used[1]), 1),
                        (4, "limit".into(), 3),
                    ],
                    logscale_x: false,
                };
                dir.write("fig3.gp", &script.render())?;
            }
            dir.metadata(&meta)?;
        }
    }
    Ok(dir.into_files())
}

fn reversed(mu: &[f64]) -> Vec<f64> {
    mu.iter().rev().copied().collect()
}
