//! The modulated queue `(Q, λ, μ)` and the `(N, α)` scaling.

use nalgebra::{DMatrix, DVector};

use crate::chain::{ChainAnalysis, Generator};
use crate::error::{Error, Result};

/// A Markov-modulated infinite-server queue: background generator `Q`,
/// per-state arrival rates `λ` and service rates `μ`.
///
/// The chain analysis is computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueSpec {
    gen: Generator,
    lambda: DVector<f64>,
    mu: DVector<f64>,
    chain: ChainAnalysis,
}

impl QueueSpec {
    pub fn new(gen: Generator, lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let d = gen.dim();
        if lambda.len() != d || mu.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "generator has {d} states but lambda has {} and mu has {} entries",
                lambda.len(),
                mu.len()
            )));
        }
        if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidSpec(format!(
                "arrival rates must be finite and nonnegative, got {l}"
            )));
        }
        if let Some(m) = mu.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidSpec(format!(
                "service rates must be finite and positive, got {m}"
            )));
        }
        let chain = ChainAnalysis::new(&gen)?;
        Ok(Self {
            gen,
            lambda: DVector::from_vec(lambda),
            mu: DVector::from_vec(mu),
            chain,
        })
    }

    /// Convenience constructor from row-major generator rows.
    pub fn from_rows(q: &[Vec<f64>], lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        Self::new(Generator::from_rows(q)?, lambda, mu)
    }

    /// The single-state (unmodulated M/M/∞) queue.
    pub fn single(lambda: f64, mu: f64) -> Result<Self> {
        Self::new(
            Generator::new(DMatrix::zeros(1, 1))?,
            vec![lambda],
            vec![mu],
        )
    }

    pub fn dim(&self) -> usize {
        self.gen.dim()
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    pub fn q(&self) -> &DMatrix<f64> {
        self.gen.matrix()
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn chain(&self) -> &ChainAnalysis {
        &self.chain
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.chain.pi
    }

    /// `Λ = diag(λ)`.
    pub fn lambda_diag(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.lambda)
    }

    /// `𝓜 = diag(μ)`.
    pub fn mu_diag(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.mu)
    }

    /// `λ∞ = π^T λ`.
    pub fn lambda_inf(&self) -> f64 {
        self.chain.pi.dot(&self.lambda)
    }

    /// `μ∞ = π^T μ`.
    pub fn mu_inf(&self) -> f64 {
        self.chain.pi.dot(&self.mu)
    }

    pub fn mu_min(&self) -> f64 {
        self.mu.min()
    }

    pub fn mu_max(&self) -> f64 {
        self.mu.max()
    }

    /// The spec `(N^α Q, N λ, μ)`.
    pub fn scaled(&self, scaling: &ScalingParams) -> Self {
        let factor = scaling.n().powf(scaling.alpha());
        Self {
            gen: self
                .gen
                .scaled(factor)
                .expect("positive finite scale factor"),
            lambda: &self.lambda * scaling.n(),
            mu: self.mu.clone(),
            chain: self.chain.scaled(factor),
        }
    }

    /// Same chain and arrivals with the service rates replaced.
    pub fn with_mu(&self, mu: Vec<f64>) -> Result<Self> {
        Self::new(self.gen.clone(), self.lambda.as_slice().to_vec(), mu)
    }

    /// Time after which transients have decayed to `e^{-40}`: `40 / min(gap, μ_min)`.
    pub fn relaxation_horizon(&self) -> f64 {
        40.0 / self.chain.gap.min(self.mu_min())
    }
}

/// The scale `N`, modulation exponent `α` and normalization `β = max{1, 2−α}/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    n: f64,
    alpha: f64,
    beta: f64,
}

impl ScalingParams {
    pub fn new(n: f64, alpha: f64) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale N must be positive, got {n}"
            )));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be nonnegative, got {alpha}"
            )));
        }
        Ok(Self {
            n,
            alpha,
            beta: Self::beta_of(alpha),
        })
    }

    /// The unscaled system `N = 1`.
    pub fn unit() -> Self {
        Self {
            n: 1.0,
            alpha: 1.0,
            beta: 0.5,
        }
    }

    pub fn beta_of(alpha: f64) -> f64 {
        (2.0 - alpha).max(1.0) / 2.0
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `N^{2β}`, the variance growth factor.
    pub fn variance_scale(&self) -> f64 {
        self.n.powf(2.0 * self.beta)
    }
}
