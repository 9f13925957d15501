//! Scaling limits of the centred, normalized job count
//! `M̃(t) = N^{−β}(M^{(N)}(t) − N ϱ(t))` under `λ ↦ Nλ`, `Q ↦ N^α Q`.
//!
//! Both models converge to Ornstein–Uhlenbeck type Gaussian processes. For
//! `α < 1` the modulation dominates and the variance involves `D`; for
//! `α > 1` the limit is Poissonian; at `α = 1` both contributions add.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::psd_cholesky;
use crate::model1::check_time;
use crate::quad::Quadrature;
use crate::queue::{QueueSpec, ScalingParams};
use crate::Model;

/// Which limit regime a branch term belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// The modulation term, active for `α ≤ 1`.
    Modulated,
    /// The Poisson term, active for `α ≥ 1`.
    Poisson,
}

impl Branch {
    /// Whether the branch contributes at `alpha`.
    pub fn active(self, alpha: f64) -> bool {
        match self {
            Branch::Modulated => alpha <= 1.0,
            Branch::Poisson => alpha >= 1.0,
        }
    }
}

/// `ϱ^(I)(t) = (λ∞/μ∞)(1 − e^{−μ∞t})`.
pub fn rho1(spec: &QueueSpec, t: f64) -> f64 {
    let mu = spec.mu_inf();
    spec.lambda_inf() / mu * -(-mu * t).exp_m1()
}

/// `V′(t) = 2 π^T(Λ − 𝓜ϱ^(I)(t)) D (Λ − 𝓜ϱ^(I)(t)) 1`, the diffusion
/// coefficient of the modulation noise in Model I.
pub fn v_prime(spec: &QueueSpec, t: f64) -> f64 {
    let a = spec.lambda() - spec.mu() * rho1(spec, t);
    let left = a.component_mul(spec.pi());
    2.0 * left.dot(&(&spec.chain().deviation * &a))
}

/// `V(t) = ∫₀ᵗ V′(s) ds`, the quadratic-variation clock of the modulation noise.
pub fn diffusion_v(spec: &QueueSpec, t: f64) -> Result<f64> {
    check_time(t, "t")?;
    Quadrature::default().integrate(|s| v_prime(spec, s), 0.0, t)
}

/// `ς^(I)(t) = ∫₀ᵗ e^{−2μ∞(t−s)} V′(s) ds`, the OU variance driven by `V′`.
pub fn varsigma1(spec: &QueueSpec, t: f64) -> Result<f64> {
    check_time(t, "t")?;
    let mu = spec.mu_inf();
    Quadrature::default().integrate(|s| (-2.0 * mu * (t - s)).exp() * v_prime(spec, s), 0.0, t)
}

/// `v^(I)(t, u) = e^{−μ∞u}(ς^(I)(t) 1{α ≤ 1} + ϱ^(I)(t) 1{α ≥ 1})`.
pub fn v1(spec: &QueueSpec, alpha: f64, t: f64, u: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_time(t, "t")?;
    check_time(u, "u")?;
    let mut total = 0.0;
    if Branch::Modulated.active(alpha) {
        total += varsigma1(spec, t)?;
    }
    if Branch::Poisson.active(alpha) {
        total += rho1(spec, t);
    }
    Ok((-spec.mu_inf() * u).exp() * total)
}

/// `ϱ_i^(II)(t) = (π_i λ_i/μ_i)(1 − e^{−μ_i t})`.
pub fn rho2_i(spec: &QueueSpec, i: usize, t: f64) -> f64 {
    let mu = spec.mu()[i];
    spec.pi()[i] * spec.lambda()[i] / mu * -(-mu * t).exp_m1()
}

/// `ς_i^(II)(t) = Σ_j λ_iλ_j/(μ_i+μ_j) (1 − e^{−(μ_i+μ_j)t}) (π_j D_ji + π_i D_ij)`.
pub fn varsigma2_i(spec: &QueueSpec, i: usize, t: f64) -> f64 {
    (0..spec.dim())
        .map(|j| ou_cov_m2(spec, i, j, t, Branch::Modulated))
        .sum()
}

/// Covariance of the per-type limits `M̃_i(t)`, `M̃_j(t)` within one branch:
/// `λ_iλ_j/(μ_i+μ_j)(1 − e^{−(μ_i+μ_j)t})(π_i D_ij + π_j D_ji)` for the
/// modulated branch, `ϱ_i^(II)(t) δ_ij` for the Poisson branch.
pub fn ou_cov_m2(spec: &QueueSpec, i: usize, j: usize, t: f64, branch: Branch) -> f64 {
    match branch {
        Branch::Modulated => {
            let (lam, mu, pi) = (spec.lambda(), spec.mu(), spec.pi());
            let dev = &spec.chain().deviation;
            let rate = mu[i] + mu[j];
            lam[i] * lam[j] / rate
                * -(-rate * t).exp_m1()
                * (pi[i] * dev[(i, j)] + pi[j] * dev[(j, i)])
        }
        Branch::Poisson if i == j => rho2_i(spec, i, t),
        Branch::Poisson => 0.0,
    }
}

/// `v^(II)(t, u) = Σ_i e^{−μ_i u}(ς_i^(II)(t) 1{α ≤ 1} + ϱ_i^(II)(t) 1{α ≥ 1})`.
pub fn v2(spec: &QueueSpec, alpha: f64, t: f64, u: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_time(t, "t")?;
    check_time(u, "u")?;
    let mut total = 0.0;
    for i in 0..spec.dim() {
        let mut term = 0.0;
        if Branch::Modulated.active(alpha) {
            term += varsigma2_i(spec, i, t);
        }
        if Branch::Poisson.active(alpha) {
            term += rho2_i(spec, i, t);
        }
        total += (-spec.mu()[i] * u).exp() * term;
    }
    Ok(total)
}

/// Limit covariance of either model.
pub fn limit_covariance(spec: &QueueSpec, model: Model, alpha: f64, t: f64, u: f64) -> Result<f64> {
    match model {
        Model::I => v1(spec, alpha, t, u),
        Model::II => v2(spec, alpha, t, u),
    }
}

/// Limit mean per unit `N`: `ϱ^(I)(t)` or `Σ_i ϱ_i^(II)(t)`.
pub fn limit_mean(spec: &QueueSpec, model: Model, t: f64) -> f64 {
    match model {
        Model::I => rho1(spec, t),
        Model::II => (0..spec.dim()).map(|i| rho2_i(spec, i, t)).sum(),
    }
}

/// `W(t) = λ∞t + λ∞(t − (1 − e^{−μ∞t})/μ∞)`, the quadratic-variation clock of
/// the Poisson noise in Model I.
pub fn diffusion_w(spec: &QueueSpec, t: f64) -> f64 {
    let (lam, mu) = (spec.lambda_inf(), spec.mu_inf());
    lam * t + lam * (t + (-mu * t).exp_m1() / mu)
}

/// `W′(t) = 2λ∞ − λ∞e^{−μ∞t}`.
pub fn diffusion_w_prime(spec: &QueueSpec, t: f64) -> f64 {
    let lam = spec.lambda_inf();
    2.0 * lam - lam * (-spec.mu_inf() * t).exp()
}

/// `w_i(t) = λ_iπ_i t + λ_iπ_i(t − (1 − e^{−μ_i t})/μ_i)`, the Model II
/// counterpart of [`diffusion_w`] for type `i`.
pub fn diffusion_w_i(spec: &QueueSpec, i: usize, t: f64) -> f64 {
    let a = spec.lambda()[i] * spec.pi()[i];
    let mu = spec.mu()[i];
    a * t + a * (t + (-mu * t).exp_m1() / mu)
}

/// `W_i(t) = 2λ_iπ_i − λ_iπ_i e^{−μ_i t}`.
pub fn diffusion_w_i_prime(spec: &QueueSpec, i: usize, t: f64) -> f64 {
    let a = spec.lambda()[i] * spec.pi()[i];
    2.0 * a - a * (-spec.mu()[i] * t).exp()
}

/// `V = Λ(diag(π) D + D^T diag(π))Λ`, the covariance of the modulation noise
/// driving the per-type counts in Model II.
pub fn diffusion_v_matrix(spec: &QueueSpec) -> Result<DMatrix<f64>> {
    let v = spec.lambda_diag() * occupation_covariance(spec) * spec.lambda_diag();
    let v = (&v + v.transpose()) * 0.5;
    let scale = v.amax().max(1.0);
    let min = v.clone().symmetric_eigen().eigenvalues.min();
    if min < -1e-8 * scale {
        return Err(Error::NotPsd(min));
    }
    Ok(v)
}

/// Lower Cholesky factor of [`diffusion_v_matrix`], with eigenvalues below
/// `1e-12` clamped to zero.
pub fn diffusion_v_cholesky(spec: &QueueSpec) -> Result<DMatrix<f64>> {
    psd_cholesky(&diffusion_v_matrix(spec)?)
}

/// `diag(π) D + D^T diag(π)`: the asymptotic covariance rate of the occupation
/// times `∫ 1{J(s) = i} ds`.
pub fn occupation_covariance(spec: &QueueSpec) -> DMatrix<f64> {
    let a = DMatrix::from_diagonal(spec.pi()) * &spec.chain().deviation;
    &a + a.transpose()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )))
    }
}

/// A limit covariance surface `v(t, u)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCurve {
    pub model: Model,
    pub alpha: f64,
    pub beta: f64,
    pub t_grid: Vec<f64>,
    pub u_grid: Vec<f64>,
    /// `values[k][l] = v(t_grid[k], u_grid[l])`.
    pub values: Vec<Vec<f64>>,
}

impl LimitCurve {
    pub fn evaluate(
        spec: &QueueSpec,
        model: Model,
        alpha: f64,
        t_grid: &[f64],
        u_grid: &[f64],
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let values = t_grid
            .iter()
            .map(|&t| {
                u_grid
                    .iter()
                    .map(|&u| limit_covariance(spec, model, alpha, t, u))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            alpha,
            beta: ScalingParams::beta_of(alpha),
            t_grid: t_grid.to_vec(),
            u_grid: u_grid.to_vec(),
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model1;
    use proptest::prelude::*;

    fn section7(mu: [f64; 2]) -> QueueSpec {
        QueueSpec::from_rows(
            &[vec![-5.0, 5.0], vec![5.0, -5.0]],
            vec![20.0, 10.0],
            mu.to_vec(),
        )
        .unwrap()
    }

    /// Composite trapezoid with Richardson extrapolation (Romberg), fixed grids.
    fn romberg(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let levels = 16;
        let mut r = vec![vec![0.0; levels]; levels];
        let mut h = b - a;
        r[0][0] = 0.5 * h * (f(a) + f(b));
        for k in 1..levels {
            h *= 0.5;
            let n = 1usize << (k - 1);
            let s: f64 = (0..n).map(|i| f(a + (2 * i + 1) as f64 * h)).sum();
            r[k][0] = 0.5 * r[k - 1][0] + h * s;
            for j in 1..=k {
                let p = 4f64.powi(j as i32);
                r[k][j] = (p * r[k][j - 1] - r[k - 1][j - 1]) / (p - 1.0);
            }
            if k > 5 && (r[k][k] - r[k - 1][k - 1]).abs() < 1e-14 {
                return r[k][k];
            }
        }
        r[levels - 1][levels - 1]
    }

    #[test]
    fn single_state_limits() {
        let s = QueueSpec::single(3.0, 2.0).unwrap();
        for (t, u) in [(0.5_f64, 0.0_f64), (2.0, 1.0)] {
            let poisson = (-2.0 * u).exp() * 1.5 * (1.0 - (-2.0 * t).exp());
            assert!((v1(&s, 2.0, t, u).unwrap() - poisson).abs() < 1e-12);
            assert!((v2(&s, 2.0, t, u).unwrap() - poisson).abs() < 1e-12);
            assert_eq!(v1(&s, 0.5, t, u).unwrap(), 0.0);
            assert_eq!(varsigma2_i(&s, 0, t), 0.0);
        }
        assert_eq!(diffusion_v_matrix(&s).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn curves_vanish_at_zero() {
        let s = section7([1.0, 2.0]);
        for alpha in [0.5, 1.0, 2.0] {
            assert_eq!(v1(&s, alpha, 0.0, 0.3).unwrap(), 0.0);
            assert_eq!(v2(&s, alpha, 0.0, 0.3).unwrap(), 0.0);
        }
        assert_eq!(varsigma1(&s, 0.0).unwrap(), 0.0);
        assert_eq!(diffusion_w(&s, 0.0), 0.0);
    }

    #[test]
    fn varsigma1_matches_romberg() {
        let s = section7([1.0, 2.0]);
        let mu = s.mu_inf();
        let oracle = romberg(|x| (-2.0 * mu * (2.0 - x)).exp() * v_prime(&s, x), 0.0, 2.0);
        let v = varsigma1(&s, 2.0).unwrap();
        assert!(v > 0.0);
        assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
        assert!((v - 6.04415).abs() < 1e-4);
        assert!((varsigma1(&s, 60.0).unwrap() - 20.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn varsigma1_is_scaled_model1_limit() {
        // exact Cov at N = 1e6, α = 0.5, normalized by N^{2β} = N^{1.5}
        let s = section7([1.0, 2.0]);
        let sc = ScalingParams::new(1e6, 0.5).unwrap();
        let exact = model1::covariance(&s.scaled(&sc), 2.0, 0.5).unwrap() / sc.variance_scale();
        let limit = v1(&s, 0.5, 2.0, 0.5).unwrap();
        assert!((exact - limit).abs() < 0.01 * limit, "{exact} vs {limit}");
    }

    #[test]
    fn alpha_one_adds_branches() {
        let s = section7([1.0, 2.0]);
        let both = v1(&s, 1.0, 2.0, 0.5).unwrap();
        let e = (-s.mu_inf() * 0.5).exp();
        let sum = e * (varsigma1(&s, 2.0).unwrap() + rho1(&s, 2.0));
        assert!((both - sum).abs() < 1e-12);
        let both = v2(&s, 1.0, 2.0, 0.5).unwrap();
        let sum: f64 = (0..2)
            .map(|i| (-s.mu()[i] * 0.5).exp() * (varsigma2_i(&s, i, 2.0) + rho2_i(&s, i, 2.0)))
            .sum();
        assert!((both - sum).abs() < 1e-12);
    }

    #[test]
    fn varsigma2_matches_ou_integral() {
        let s = section7([1.0, 2.0]);
        let (lam, mu, pi) = (s.lambda(), s.mu(), s.pi());
        let dev = &s.chain().deviation;
        let t = 2.0;
        for i in 0..2 {
            let mut oracle = 0.0;
            for j in 0..2 {
                let c = lam[i] * lam[j] * (pi[i] * dev[(i, j)] + pi[j] * dev[(j, i)]);
                oracle += (-(mu[i] + mu[j]) * t).exp()
                    * Quadrature::with_abs_tol(1e-13)
                        .integrate(|x| ((mu[i] + mu[j]) * x).exp() * c, 0.0, t)
                        .unwrap();
            }
            assert!((varsigma2_i(&s, i, t) - oracle).abs() < 1e-10);
        }
        let total: f64 = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| ou_cov_m2(&s, i, j, t, Branch::Modulated))
            .sum();
        let mut only_modulated = 0.0;
        for i in 0..2 {
            only_modulated += varsigma2_i(&s, i, t);
        }
        assert!((total - only_modulated).abs() < 1e-10);
        assert!((v2(&s, 0.5, t, 0.0).unwrap() - total).abs() < 1e-10);
    }

    #[test]
    fn poisson_branch_is_ou_variance_of_w() {
        let s = section7([1.0, 2.0]);
        let t = 1.7;
        let mu = s.mu_inf();
        let q = Quadrature::with_abs_tol(1e-13);
        let v = q
            .integrate(
                |x| (-2.0 * mu * (t - x)).exp() * diffusion_w_prime(&s, x),
                0.0,
                t,
            )
            .unwrap();
        assert!((v - rho1(&s, t)).abs() < 1e-10);
        for i in 0..2 {
            let m = s.mu()[i];
            let v = q
                .integrate(
                    |x| (-2.0 * m * (t - x)).exp() * diffusion_w_i_prime(&s, i, x),
                    0.0,
                    t,
                )
                .unwrap();
            assert!((v - rho2_i(&s, i, t)).abs() < 1e-10);
        }
    }

    #[test]
    fn w_closed_forms_match_quadrature() {
        let s = QueueSpec::single(3.0, 2.0).unwrap();
        assert!((diffusion_w(&s, 1.0) - 4.7030).abs() < 1e-4);
        let s = section7([1.0, 2.0]);
        let q = Quadrature::with_abs_tol(1e-13);
        let t = 2.3;
        let rho = s.lambda_inf() / s.mu_inf();
        let w = q
            .integrate(
                |x| s.mu_inf() * rho * (1.0 - (-s.mu_inf() * x).exp()),
                0.0,
                t,
            )
            .unwrap()
            + s.lambda_inf() * t;
        assert!((diffusion_w(&s, t) - w).abs() < 1e-10);
        let w_prime = q.integrate(|x| diffusion_w_prime(&s, x), 0.0, t).unwrap();
        assert!((diffusion_w(&s, t) - w_prime).abs() < 1e-10);
        for i in 0..2 {
            let w = q
                .integrate(|x| diffusion_w_i_prime(&s, i, x), 0.0, t)
                .unwrap();
            assert!((diffusion_w_i(&s, i, t) - w).abs() < 1e-10);
        }
        assert!((diffusion_w_prime(&s, 1e3) - 2.0 * s.lambda_inf()).abs() < 1e-12);
    }

    #[test]
    fn v_matrix_entries() {
        let s = section7([1.0, 2.0]);
        let v = diffusion_v_matrix(&s).unwrap();
        assert!((v[(0, 0)] - 20.0).abs() < 1e-12);
        assert!((v[(0, 1)] + 10.0).abs() < 1e-12);
        assert!((v[(1, 1)] - 5.0).abs() < 1e-12);
        assert_eq!(v, v.transpose());
        let l = diffusion_v_cholesky(&s).unwrap();
        assert!((&l * l.transpose() - v).amax() < 1e-10);
    }

    #[test]
    fn limit_curve_grid() {
        let s = section7([1.0, 2.0]);
        let c = LimitCurve::evaluate(&s, Model::I, 0.5, &[0.0, 2.0], &[0.0, 1.0]).unwrap();
        assert_eq!(c.beta, 0.75);
        assert_eq!(c.values[0], vec![0.0, 0.0]);
        assert!((c.values[1][1] - v1(&s, 0.5, 2.0, 1.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn decay_rate_in_lag() {
        let s = section7([1.0, 2.0]);
        let us: Vec<f64> = (0..=30).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = us
            .iter()
            .map(|&u| v1(&s, 0.5, 20.0, u).unwrap().ln())
            .collect();
        let n = us.len() as f64;
        let (mx, my) = (us.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = us.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = us.iter().map(|x| (x - mx).powi(2)).sum();
        assert!((sxy / sxx + s.mu_inf()).abs() < 0.01 * s.mu_inf());
    }

    fn random_spec() -> impl Strategy<Value = QueueSpec> {
        (
            0.2f64..5.0,
            0.2f64..5.0,
            0.0f64..20.0,
            0.0f64..20.0,
            0.3f64..3.0,
            0.3f64..3.0,
        )
            .prop_map(|(a, b, l1, l2, m1, m2)| {
                QueueSpec::from_rows(&[vec![-a, a], vec![b, -b]], vec![l1, l2], vec![m1, m2])
                    .unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn equal_service_rates_reduce_v2_to_v1(
            s in random_spec(), alpha in 0.1f64..3.0, t in 0.0f64..5.0, u in 0.0f64..3.0
        ) {
            let s = s.with_mu(vec![s.mu()[0]; 2]).unwrap();
            let a = v1(&s, alpha, t, u).unwrap();
            let b = v2(&s, alpha, t, u).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
        }

        #[test]
        fn limits_are_nonnegative(s in random_spec(), alpha in 0.1f64..3.0, t in 0.0f64..5.0) {
            prop_assert!(v1(&s, alpha, t, 0.0).unwrap() >= -1e-12);
            prop_assert!(v2(&s, alpha, t, 0.0).unwrap() >= -1e-12);
        }

        #[test]
        fn v_matrix_is_psd(s in random_spec()) {
            let v = diffusion_v_matrix(&s).unwrap();
            prop_assert!(v.symmetric_eigen().eigenvalues.min() >= -1e-10);
        }
    }
}
