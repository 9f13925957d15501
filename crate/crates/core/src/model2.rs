//! Exact moments of Model II, where a job keeps the service rate of the
//! background state it arrived in.
//!
//! Given the background path, `M(t)` is Poisson, so the covariance splits by
//! the law of total covariance into a Poisson part and the covariance of the
//! conditional means. The latter is `λ^T (𝒦 + ℒ⁽¹⁾ + ℒ⁽²⁾) λ`, one kernel per
//! ordering of the two arrival epochs `r ≤ t` and `s ≤ t + u`:
//!
//! * `𝒦`: `r < s ≤ t`,
//! * `ℒ⁽¹⁾`: `r ≤ t < s ≤ t + u`,
//! * `ℒ⁽²⁾`: `s < r ≤ t`.

use nalgebra::{DMatrix, DVector};

use crate::chain::{transition_matrix, weighted_deviation_with};
use crate::error::Result;
use crate::model1::{check_time, normalize_lag};
use crate::quad::Quadrature;
use crate::queue::QueueSpec;

/// Absolute tolerance of the kernel quadratures.
const KERNEL_TOL: f64 = 1e-10;

/// The three covariance kernels at `(t, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovKernel {
    pub t: f64,
    pub u: f64,
    pub k: DMatrix<f64>,
    pub l1: DMatrix<f64>,
    pub l2: DMatrix<f64>,
}

impl CovKernel {
    /// `ℒ = ℒ⁽¹⁾ + ℒ⁽²⁾`.
    pub fn l(&self) -> DMatrix<f64> {
        &self.l1 + &self.l2
    }

    /// `λ^T (𝒦 + ℒ) λ`.
    pub fn quadratic_form(&self, lambda: &DVector<f64>) -> f64 {
        let total = &self.k + &self.l1 + &self.l2;
        lambda.dot(&(total * lambda))
    }
}

/// `E M(t) = Σ_i π_i (λ_i/μ_i)(1 − e^{−μ_i t})`.
pub fn mean_m2(spec: &QueueSpec, t: f64) -> Result<f64> {
    Ok(type_means(spec, t)?.sum())
}

/// Mean number of jobs of each arrival type, `π_i (λ_i/μ_i)(1 − e^{−μ_i t})`.
pub fn type_means(spec: &QueueSpec, t: f64) -> Result<DVector<f64>> {
    check_time(t, "t")?;
    Ok(DVector::from_fn(spec.dim(), |i, _| {
        let mu = spec.mu()[i];
        spec.pi()[i] * spec.lambda()[i] / mu * -(-mu * t).exp_m1()
    }))
}

/// `𝒦(t, u)`, the kernel of arrival pairs `r < s ≤ t`.
pub fn script_k(spec: &QueueSpec, t: f64, u: f64) -> Result<DMatrix<f64>> {
    Ok(cov_kernel(spec, t, u)?.k)
}

/// `ℒ(t, u) = ℒ⁽¹⁾ + ℒ⁽²⁾`, the kernel of arrival pairs with `s > t` or `s < r`.
pub fn script_l(spec: &QueueSpec, t: f64, u: f64) -> Result<DMatrix<f64>> {
    Ok(cov_kernel(spec, t, u)?.l())
}

/// All three kernels at `(t, u)`, `t, u ≥ 0`.
///
/// With `Δ(w) = P(w) − Π`:
///
/// * `𝒦_ij = π_i/(μ_i+μ_j) ∫₀ᵗ (e^{−μ_i w − μ_j u} − e^{−μ_i t − μ_j(t+u−w)}) Δ_ij(w) dw`
/// * `ℒ⁽¹⁾ = diag(π) A B` with `A_ik = ∫₀ᵗ e^{−μ_i x} Δ_ik(x) dx` and
///   `B_kj = ∫₀ᵘ e^{−μ_j(u−y)} Δ_kj(y) dy`
/// * `ℒ⁽²⁾_ij = π_j/(μ_i+μ_j) ∫₀ᵗ (e^{−μ_j(u+w)} − e^{−μ_i(t−w) − μ_j(t+u)}) Δ_ji(w) dw`
pub fn cov_kernel(spec: &QueueSpec, t: f64, u: f64) -> Result<CovKernel> {
    check_time(t, "t")?;
    check_time(u, "u")?;
    let d = spec.dim();
    let n = d * d;
    let pi = spec.pi();
    let mu = spec.mu();
    let pi_m = &spec.chain().pi_matrix;
    let quad = Quadrature::with_abs_tol(KERNEL_TOL);

    // entries [0, n): 𝒦 integrand, [n, 2n): ℒ⁽²⁾, [2n, 3n): A
    let over_t = quad.integrate_vec(
        3 * n,
        |w, out| {
            let delta = transition_matrix(spec.generator(), w).expect("w >= 0") - pi_m;
            for j in 0..d {
                for i in 0..d {
                    let idx = i + j * d;
                    out[idx] = ((-mu[i] * w - mu[j] * u).exp()
                        - (-mu[i] * t - mu[j] * (t + u - w)).exp())
                        * delta[(i, j)];
                    out[n + idx] = ((-mu[j] * (u + w)).exp()
                        - (-mu[i] * (t - w) - mu[j] * (t + u)).exp())
                        * delta[(j, i)];
                    out[2 * n + idx] = (-mu[i] * w).exp() * delta[(i, j)];
                }
            }
        },
        0.0,
        t,
    )?;
    let b = lag_kernel(spec, u)?;

    let k = DMatrix::from_fn(d, d, |i, j| pi[i] / (mu[i] + mu[j]) * over_t[i + j * d]);
    let l2 = DMatrix::from_fn(d, d, |i, j| pi[j] / (mu[i] + mu[j]) * over_t[n + i + j * d]);
    let a = DMatrix::from_column_slice(d, d, &over_t[2 * n..]);
    let l1 = DMatrix::from_diagonal(pi) * a * b;
    Ok(CovKernel { t, u, k, l1, l2 })
}

/// `B_kj(u) = ∫₀ᵘ e^{−μ_j(u−y)} (p_kj(y) − π_j) dy`.
fn lag_kernel(spec: &QueueSpec, u: f64) -> Result<DMatrix<f64>> {
    let d = spec.dim();
    let mu = spec.mu();
    let pi_m = &spec.chain().pi_matrix;
    let v = Quadrature::with_abs_tol(KERNEL_TOL).integrate_vec(
        d * d,
        |y, out| {
            let delta = transition_matrix(spec.generator(), y).expect("y >= 0") - pi_m;
            for j in 0..d {
                let w = (-mu[j] * (u - y)).exp();
                for k in 0..d {
                    out[k + j * d] = w * delta[(k, j)];
                }
            }
        },
        0.0,
        u,
    )?;
    Ok(DMatrix::from_column_slice(d, d, &v))
}

/// Poisson part of the covariance, `Σ_i π_i (λ_i/μ_i)(1 − e^{−μ_i t}) e^{−μ_i u}`.
fn poisson_part(spec: &QueueSpec, t: f64, u: f64) -> f64 {
    (0..spec.dim())
        .map(|i| {
            let mu = spec.mu()[i];
            spec.pi()[i] * spec.lambda()[i] / mu * -(-mu * t).exp_m1() * (-mu * u).exp()
        })
        .sum()
}

/// `Cov(M(t), M(t+u))`. A negative lag is answered by symmetry as
/// `Cov(M(t+u), M(t))`.
pub fn covariance_m2(spec: &QueueSpec, t: f64, u: f64) -> Result<f64> {
    let (t, u) = normalize_lag(t, u)?;
    let kernel = cov_kernel(spec, t, u)?;
    Ok(poisson_part(spec, t, u) + kernel.quadratic_form(spec.lambda()))
}

/// `lim_{t→∞} Cov(M(t), M(t+u))`:
///
/// `Σ_i π_i (λ_i/μ_i) e^{−μ_i u}
///  + Σ_ij π_i λ_i λ_j D⁽ᵘ⁾_ij (e^{−μ_i u} + e^{−μ_j u})/(μ_i+μ_j)
///  + λ^T diag(π) D⁽ᵘ⁾ B(u) λ`
///
/// where `D⁽ᵘ⁾` is the deviation matrix weighted by `μ` and `B` is the lag
/// kernel of [`cov_kernel`].
pub fn stationary_covariance_m2(spec: &QueueSpec, u: f64) -> Result<f64> {
    let u = u.abs();
    check_time(u, "u")?;
    let d = spec.dim();
    let lambda = spec.lambda();
    let mu = spec.mu();
    let pi = spec.pi();
    let dmu = weighted_deviation_with(spec.generator(), spec.chain(), mu.as_slice())?;
    let mut total = 0.0;
    for i in 0..d {
        total += pi[i] * lambda[i] / mu[i] * (-mu[i] * u).exp();
        for j in 0..d {
            total += pi[i]
                * lambda[i]
                * lambda[j]
                * dmu[(i, j)]
                * ((-mu[i] * u).exp() + (-mu[j] * u).exp())
                / (mu[i] + mu[j]);
        }
    }
    if u > 0.0 {
        let cross = DMatrix::from_diagonal(pi) * &dmu * lag_kernel(spec, u)?;
        total += lambda.dot(&(cross * lambda));
    }
    Ok(total)
}

/// `lim_{t→∞} Var M(t) = Σ_i π_i λ_i/μ_i + 2 Σ_ij π_i λ_i λ_j D⁽ᵘ⁾_ij/(μ_i+μ_j)`.
pub fn stationary_variance_m2(spec: &QueueSpec) -> Result<f64> {
    let d = spec.dim();
    let lambda = spec.lambda();
    let mu = spec.mu();
    let pi = spec.pi();
    let dmu = weighted_deviation_with(spec.generator(), spec.chain(), mu.as_slice())?;
    let mut total = 0.0;
    for i in 0..d {
        total += pi[i] * lambda[i] / mu[i];
        for j in 0..d {
            total += 2.0 * pi[i] * lambda[i] * lambda[j] * dmu[(i, j)] / (mu[i] + mu[j]);
        }
    }
    Ok(total)
}
