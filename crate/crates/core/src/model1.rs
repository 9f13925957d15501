//! Exact moments of Model I, where every job present is served at the rate of
//! the current background state.
//!
//! The background chain starts in stationarity and the queue starts empty.
//! Moments are carried per background state:
//!
//! * `m_i(t) = E[M(t); J(t) = i]` and `s_i(t) = E[M(t)²; J(t) = i]` solve the
//!   linear system `m' = Λπ − 𝓜m + Q^T m`, `s' = Λ(2m + π) + 𝓜(m − 2s) + Q^T s`.
//! * For the lag, with `i = J(t)` and `j = J(t+u)`,
//!   `K_ij = π_i p_ij(u)`, `E_ij = E[M(t); i, j]`, `G_ij = E[M(t+u); i, j]` and
//!   `C_ij = E[M(t) M(t+u); i, j]` solve, in `u`,
//!   `K' = KQ`, `E' = EQ`, `G' = G(Q − 𝓜) + KΛ`, `C' = C(Q − 𝓜) + EΛ`
//!   from `K = diag π`, `E = G = diag m(t)`, `C = diag s(t)`.
//!
//! The lag system is block upper triangular, so each pair `(K, G)` and `(E, C)`
//! is propagated exactly as `[X Y](u) = [X Y](0) exp(uH)` with
//! `H = [[Q, Λ], [0, Q − 𝓜]]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, expm};
use crate::ode::{self, OdeOptions};
use crate::queue::{QueueSpec, ScalingParams};

/// Joint moments at lag `u` on a grid of start times `t`.
///
/// Vectors are column-stacked `d × d` matrices indexed by `(J(t), J(t+u))`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMomentState {
    pub u: f64,
    pub t_grid: Vec<f64>,
    /// `vec E(t, u)` per grid point.
    pub e: Vec<DVector<f64>>,
    /// `vec G(t, u)` per grid point.
    pub g: Vec<DVector<f64>>,
    /// `vec C(t, u)` per grid point.
    pub c: Vec<DVector<f64>>,
    /// `vec K(u)`.
    pub k: DVector<f64>,
}

impl JointMomentState {
    /// `E M(t_k)`.
    pub fn mean(&self, k: usize) -> f64 {
        self.e[k].sum()
    }

    /// `E M(t_k + u)`.
    pub fn lagged_mean(&self, k: usize) -> f64 {
        self.g[k].sum()
    }

    /// `Cov(M(t_k), M(t_k + u))`.
    pub fn covariance(&self, k: usize) -> f64 {
        self.c[k].sum() - self.mean(k) * self.lagged_mean(k)
    }
}

/// Per-state mean `m(t)` of the scaled system `(N^α Q, Nλ, μ)` at each grid time.
///
/// Integrates the mean equation with the adaptive Runge–Kutta solver. A grid
/// that does not start at zero is integrated from zero anyway.
pub fn mean_trajectory(
    spec: &QueueSpec,
    scaling: &ScalingParams,
    t_grid: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let scaled = spec.scaled(scaling);
    let d = spec.dim();
    let (grid, skip) = anchored_grid(t_grid)?;
    let q_t = scaled.q().transpose();
    let forcing = scaled.lambda().component_mul(scaled.pi());
    let mu = scaled.mu().clone();
    let sol = ode::integrate(
        |_, m, dm| {
            for i in 0..d {
                let mut acc = forcing[i] - mu[i] * m[i];
                for j in 0..d {
                    acc += q_t[(i, j)] * m[j];
                }
                dm[i] = acc;
            }
        },
        &vec![0.0; d],
        &grid,
        &OdeOptions::default(),
    )?;
    Ok(sol.into_iter().skip(skip).map(DVector::from_vec).collect())
}

/// Prepends `0` to a grid that starts later; returns the grid and the number
/// of prepended points.
fn anchored_grid(t_grid: &[f64]) -> Result<(Vec<f64>, usize)> {
    match t_grid.first() {
        None => Ok((Vec::new(), 0)),
        Some(&t0) if t0 < 0.0 || !t0.is_finite() => Err(Error::InvalidArgument(format!(
            "time grid must start at a nonnegative time, got {t0}"
        ))),
        Some(&t0) if t0 == 0.0 => Ok((t_grid.to_vec(), 0)),
        Some(_) => {
            let mut g = Vec::with_capacity(t_grid.len() + 1);
            g.push(0.0);
            g.extend_from_slice(t_grid);
            Ok((g, 1))
        }
    }
}

/// Per-state first and second moments `(m(t), s(t))` of the unscaled system,
/// from the exponential of the augmented `(2d+1)`-dimensional linear system.
pub fn marginal_moments(spec: &QueueSpec, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    check_time(t, "t")?;
    let d = spec.dim();
    if t == 0.0 {
        return Ok((DVector::zeros(d), DVector::zeros(d)));
    }
    let q_t = spec.q().transpose();
    let lambda = spec.lambda();
    let mu = spec.mu();
    let pi = spec.pi();
    // z = (m, s, 1)
    let n = 2 * d + 1;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] = q_t[(i, j)];
            a[(d + i, d + j)] = q_t[(i, j)];
        }
        a[(i, i)] -= mu[i];
        a[(i, n - 1)] = lambda[i] * pi[i];
        a[(d + i, i)] = 2.0 * lambda[i] + mu[i];
        a[(d + i, d + i)] -= 2.0 * mu[i];
        a[(d + i, n - 1)] = lambda[i] * pi[i];
    }
    let z = expm(&(a * t)).column(n - 1).clone_owned();
    Ok((z.rows(0, d).clone_owned(), z.rows(d, d).clone_owned()))
}

/// Lag generator `H = [[Q, Λ], [0, Q − 𝓜]]`.
fn lag_generator(spec: &QueueSpec) -> DMatrix<f64> {
    let d = spec.dim();
    let q = spec.q();
    let mut h = DMatrix::zeros(2 * d, 2 * d);
    h.view_mut((0, 0), (d, d)).copy_from(q);
    h.view_mut((d, d), (d, d)).copy_from(q);
    for i in 0..d {
        h[(i, d + i)] = spec.lambda()[i];
        h[(d + i, d + i)] -= spec.mu()[i];
    }
    h
}

/// Propagator `exp(uH)` split into the blocks acting on `(X, Y)`.
struct LagPropagator {
    xx: DMatrix<f64>,
    xy: DMatrix<f64>,
    yy: DMatrix<f64>,
}

impl LagPropagator {
    fn new(spec: &QueueSpec, u: f64) -> Self {
        let d = spec.dim();
        let p = expm(&(lag_generator(spec) * u));
        Self {
            xx: p.view((0, 0), (d, d)).clone_owned(),
            xy: p.view((0, d), (d, d)).clone_owned(),
            yy: p.view((d, d), (d, d)).clone_owned(),
        }
    }

    fn apply(&self, x0: &DMatrix<f64>, y0: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (x0 * &self.xx, x0 * &self.xy + y0 * &self.yy)
    }
}

/// Joint moments at lag `u` for every start time in `t_grid` (unscaled
/// system; scale the spec first if needed).
///
/// The marginal moments are integrated along `t` with the Runge–Kutta solver;
/// the lag is applied exactly.
pub fn joint_moments(spec: &QueueSpec, u: f64, t_grid: &[f64]) -> Result<JointMomentState> {
    check_time(u, "u")?;
    let d = spec.dim();
    let (grid, skip) = anchored_grid(t_grid)?;
    let marginals = integrate_marginals(spec, &grid)?;
    let prop = LagPropagator::new(spec, u);
    let pi_diag = DMatrix::from_diagonal(spec.pi());
    let (k, _) = prop.apply(&pi_diag, &DMatrix::zeros(d, d));

    let mut state = JointMomentState {
        u,
        t_grid: t_grid.to_vec(),
        e: Vec::with_capacity(t_grid.len()),
        g: Vec::with_capacity(t_grid.len()),
        c: Vec::with_capacity(t_grid.len()),
        k: linalg::vec(&k),
    };
    for z in marginals.iter().skip(skip) {
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&z[..d]));
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&z[d..]));
        let (_, g) = prop.apply(&pi_diag, &m);
        let (e, c) = prop.apply(&m, &s);
        state.e.push(linalg::vec(&e));
        state.g.push(linalg::vec(&g));
        state.c.push(linalg::vec(&c));
    }
    Ok(state)
}

fn integrate_marginals(spec: &QueueSpec, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = spec.dim();
    let q_t = spec.q().transpose();
    let lambda = spec.lambda().clone();
    let mu = spec.mu().clone();
    let pi = spec.pi().clone();
    ode::integrate(
        |_, z, dz| {
            let (m, s) = z.split_at(d);
            for i in 0..d {
                let mut qm = 0.0;
                let mut qs = 0.0;
                for j in 0..d {
                    qm += q_t[(i, j)] * m[j];
                    qs += q_t[(i, j)] * s[j];
                }
                dz[i] = lambda[i] * pi[i] - mu[i] * m[i] + qm;
                dz[d + i] = lambda[i] * (2.0 * m[i] + pi[i]) + mu[i] * (m[i] - 2.0 * s[i]) + qs;
            }
        },
        &vec![0.0; 2 * d],
        grid,
        &OdeOptions::default(),
    )
}

/// `Cov(M(t), M(t+u))` of the unscaled system. A negative lag is answered by
/// symmetry as `Cov(M(t+u), M(t))`.
pub fn covariance(spec: &QueueSpec, t: f64, u: f64) -> Result<f64> {
    let (t, u) = normalize_lag(t, u)?;
    let (m, s) = marginal_moments(spec, t)?;
    Ok(covariance_from(spec, &m, &s, u))
}

fn covariance_from(spec: &QueueSpec, m: &DVector<f64>, s: &DVector<f64>, u: f64) -> f64 {
    let d = spec.dim();
    let prop = LagPropagator::new(spec, u);
    let m_diag = DMatrix::from_diagonal(m);
    let (_, g) = prop.apply(&DMatrix::from_diagonal(spec.pi()), &m_diag);
    let (e, c) = prop.apply(&m_diag, &DMatrix::from_diagonal(s));
    debug_assert_eq!(g.nrows(), d);
    c.sum() - e.sum() * g.sum()
}

pub(crate) fn normalize_lag(t: f64, u: f64) -> Result<(f64, f64)> {
    check_time(t, "t")?;
    if !u.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lag must be finite, got {u}"
        )));
    }
    if u >= 0.0 {
        return Ok((t, u));
    }
    if t + u < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "negative lag {u} reaches before time zero from t = {t}"
        )));
    }
    Ok((t + u, -u))
}

pub(crate) fn check_time(t: f64, name: &str) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be finite and nonnegative, got {t}"
        )))
    }
}

/// Stationary per-state moments `(m(∞), s(∞))`.
pub fn stationary_moments(spec: &QueueSpec) -> Result<(DVector<f64>, DVector<f64>)> {
    let lhs = spec.mu_diag() - spec.q().transpose();
    let rhs = spec.lambda().component_mul(spec.pi());
    let m = linalg::solve_vec(&lhs, &rhs, "stationary_mean")?;
    let lhs2 = spec.mu_diag() * 2.0 - spec.q().transpose();
    let rhs2 = spec.lambda().component_mul(&(&m * 2.0 + spec.pi())) + spec.mu().component_mul(&m);
    let s = linalg::solve_vec(&lhs2, &rhs2, "stationary_covariance")?;
    Ok((m, s))
}

/// Stationary moments in centered form: `m(∞) = m̄π + r` with `1^T r = 0`,
/// and `E[(M − m̄)²; J = i] = vπ_i + z_i` with `1^T z = 0`, so that `m̄` is
/// the mean and `v` the variance.
///
/// Working with `s(∞)` directly would give the variance as `1^T s − m̄²`,
/// which loses every digit once `N` is large.
struct CenteredMoments {
    mean: f64,
    r: DVector<f64>,
    var: f64,
    z: DVector<f64>,
}

impl CenteredMoments {
    fn new(spec: &QueueSpec) -> Result<Self> {
        let pi = spec.pi();
        let m_pi = spec.mu().component_mul(pi);
        let l_pi = spec.lambda().component_mul(pi);
        let (r, mean) = bordered_solve(
            spec.mu_diag() - spec.q().transpose(),
            &m_pi,
            &l_pi,
            "stationary_mean",
        )?;
        let weight = spec.lambda() * 2.0 + spec.mu() * (1.0 - 2.0 * mean);
        let rhs = &l_pi + &m_pi * mean + weight.component_mul(&r);
        let (z, var) = bordered_solve(
            spec.mu_diag() * 2.0 - spec.q().transpose(),
            &(&m_pi * 2.0),
            &rhs,
            "stationary_covariance",
        )?;
        Ok(Self { mean, r, var, z })
    }
}

/// Solves `A x + c b = rhs`, `1^T x = 0` for `(x, c)`.
fn bordered_solve(
    a: DMatrix<f64>,
    b: &DVector<f64>,
    rhs: &DVector<f64>,
    context: &'static str,
) -> Result<(DVector<f64>, f64)> {
    let d = a.nrows();
    // border scaled to the size of `A` so the pivots stay comparable
    let scale = linalg::max_abs(&a).max(1.0);
    let b_scale = b.amax().max(f64::MIN_POSITIVE);
    let mut big = DMatrix::zeros(d + 1, d + 1);
    big.view_mut((0, 0), (d, d)).copy_from(&a);
    big.view_mut((0, d), (d, 1))
        .copy_from(&(b * (scale / b_scale)));
    big.view_mut((d, 0), (1, d)).fill(scale);
    let mut full = DVector::zeros(d + 1);
    full.rows_mut(0, d).copy_from(rhs);
    let x = linalg::solve_vec(&big, &full, context)?;
    Ok((x.rows(0, d).clone_owned(), x[d] * scale / b_scale))
}

/// `E M(∞)`.
pub fn stationary_mean(spec: &QueueSpec) -> Result<f64> {
    Ok(CenteredMoments::new(spec)?.mean)
}

/// `lim_{t→∞} Cov(M(t), M(t+u))`.
pub fn stationary_covariance(spec: &QueueSpec, u: f64) -> Result<f64> {
    let u = u.abs();
    check_time(u, "u")?;
    let c = CenteredMoments::new(spec)?;
    if u == 0.0 {
        return Ok(c.var);
    }
    // propagate E[(M(t) − m̄)·; J(t) = i] instead of the raw moments
    let prop = LagPropagator::new(spec, u);
    let y0 = spec.pi() * c.var + &c.z + &c.r * c.mean;
    let (_, y) = prop.apply(&DMatrix::from_diagonal(&c.r), &DMatrix::from_diagonal(&y0));
    Ok(y.sum())
}

/// Large-`N` approximation of `E M^{(N)}(t)` to first order in the
/// modulation:
///
/// `Nϱ(1 − e^{−μ∞t}) + N^{1−α}[κ(1 − e^{−μ∞t}) − ϱ c₂ t e^{−μ∞t}]`
///
/// with `ϱ = λ∞/μ∞`, `κ = π^T(ϱ𝓜 − Λ)D𝓜1/μ∞` and `c₂ = π^T𝓜D𝓜1`, where
/// `D` belongs to the unscaled chain. The remainder is `O(N^{1−2α})` absolute.
pub fn refined_mean(spec: &QueueSpec, scaling: &ScalingParams, t: f64) -> Result<f64> {
    check_time(t, "t")?;
    if !(scaling.alpha() > 0.0) {
        return Err(Error::InvalidArgument(
            "refined mean needs alpha > 0".into(),
        ));
    }
    let (kappa, c2) = refined_mean_constants(spec);
    let mu_inf = spec.mu_inf();
    let rho = spec.lambda_inf() / mu_inf;
    let n = scaling.n();
    let decay = (-mu_inf * t).exp();
    let leading = n * rho * (1.0 - decay);
    let correction = n.powf(1.0 - scaling.alpha()) * (kappa * (1.0 - decay) - rho * c2 * t * decay);
    Ok(leading + correction)
}

/// `(κ, c₂)` of [`refined_mean`].
pub fn refined_mean_constants(spec: &QueueSpec) -> (f64, f64) {
    let mu_inf = spec.mu_inf();
    let rho = spec.lambda_inf() / mu_inf;
    let dev = &spec.chain().deviation;
    let d_mu1 = dev * spec.mu();
    let w = (spec.mu() * rho - spec.lambda()).component_mul(spec.pi());
    let kappa = w.dot(&d_mu1) / mu_inf;
    let c2 = spec.mu().component_mul(spec.pi()).dot(&d_mu1);
    (kappa, c2)
}
