//! Adaptive Gauss–Legendre quadrature.
//!
//! Every panel is integrated with the 15-point rule and again as two
//! half-panels; the panel is accepted when both estimates agree to the local
//! share of the tolerance, and bisected otherwise. Integrands may be
//! vector valued, in which case the error is measured in the max norm.

use std::sync::LazyLock;

use crate::error::{Error, Result};

const ORDER: usize = 15;

/// Nodes and weights of the 15-point Gauss–Legendre rule on [-1, 1].
static RULE: LazyLock<([f64; ORDER], [f64; ORDER])> = LazyLock::new(|| legendre_rule::<ORDER>());

fn legendre_rule<const N: usize>() -> ([f64; N], [f64; N]) {
    let mut nodes = [0.0; N];
    let mut weights = [0.0; N];
    let n = N as f64;
    for k in 0..N {
        // Tricomi's initial guess, then Newton on P_N.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(N, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(N, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[k] = x;
        weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Tolerance policy for [`Quadrature::integrate`] and friends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_depth: 48,
        }
    }
}

impl Quadrature {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    /// Integrates a scalar function over `[a, b]`.
    pub fn integrate<F>(&self, f: F, a: f64, b: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        let v = self.integrate_vec(1, |x, out| out[0] = f(x), a, b)?;
        Ok(v[0])
    }

    /// Integrates a `dim`-valued function over `[a, b]`. The integrand writes
    /// its value at `x` into the provided slice.
    pub fn integrate_vec<F>(&self, dim: usize, mut f: F, a: f64, b: f64) -> Result<Vec<f64>>
    where
        F: FnMut(f64, &mut [f64]),
    {
        let mut total = vec![0.0; dim];
        if a == b || dim == 0 {
            return Ok(total);
        }
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "quadrature limits must be finite, got [{a}, {b}]"
            )));
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let width = hi - lo;

        let mut scratch = vec![0.0; dim];
        let mut stack = vec![(lo, hi, 0_u32, panel(&mut f, lo, hi, dim, &mut scratch))];
        let mut left = vec![0.0; dim];
        let mut right = vec![0.0; dim];

        while let Some((x0, x1, depth, whole)) = stack.pop() {
            let mid = 0.5 * (x0 + x1);
            left.copy_from_slice(&panel(&mut f, x0, mid, dim, &mut scratch));
            right.copy_from_slice(&panel(&mut f, mid, x1, dim, &mut scratch));

            let share = (x1 - x0) / width;
            let mut err = 0.0_f64;
            let mut mag = 0.0_f64;
            for k in 0..dim {
                let refined = left[k] + right[k];
                err = err.max((refined - whole[k]).abs());
                mag = mag.max(refined.abs());
            }
            let tol = (self.abs_tol * share).max(self.rel_tol * mag);
            if err <= tol || err <= 64.0 * f64::EPSILON * mag {
                for k in 0..dim {
                    total[k] += left[k] + right[k];
                }
                continue;
            }
            if depth >= self.max_depth || !err.is_finite() {
                return Err(Error::QuadratureFailure {
                    a: x0,
                    b: x1,
                    tol: self.abs_tol,
                });
            }
            stack.push((x0, mid, depth + 1, left.clone()));
            stack.push((mid, x1, depth + 1, right.clone()));
        }
        for v in &mut total {
            *v *= sign;
        }
        Ok(total)
    }
}

fn panel<F>(f: &mut F, a: f64, b: f64, dim: usize, scratch: &mut [f64]) -> Vec<f64>
where
    F: FnMut(f64, &mut [f64]),
{
    let (nodes, weights) = &*RULE;
    let half = 0.5 * (b - a);
    let centre = 0.5 * (a + b);
    let mut acc = vec![0.0; dim];
    for (x, w) in nodes.iter().zip(weights) {
        scratch.iter_mut().for_each(|s| *s = 0.0);
        f(centre + half * x, scratch);
        for k in 0..dim {
            acc[k] += w * scratch[k];
        }
    }
    acc.iter_mut().for_each(|v| *v *= half);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let (nodes, weights) = &*RULE;
        assert!((weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 28 is within the exactness range (2N - 1 = 29)
        let s: f64 = nodes.iter().zip(weights).map(|(x, w)| w * x.powi(28)).sum();
        assert!((s - 2.0 / 29.0).abs() < 1e-14);
    }

    #[test]
    fn smooth_integrands() {
        let q = Quadrature::default();
        let v = q.integrate(|x| (-3.0 * x).exp(), 0.0, 10.0).unwrap();
        assert!((v - (1.0 - (-30.0_f64).exp()) / 3.0).abs() < 1e-12);
        let v = q.integrate(f64::sin, 0.0, std::f64::consts::PI).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_and_empty_ranges() {
        let q = Quadrature::default();
        assert_eq!(q.integrate(|x| x, 1.0, 1.0).unwrap(), 0.0);
        let v = q.integrate(|x| x, 1.0, 0.0).unwrap();
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn vector_integrand() {
        let q = Quadrature::default();
        let v = q
            .integrate_vec(
                2,
                |x, out| {
                    out[0] = x * x;
                    out[1] = (-x).exp();
                },
                0.0,
                2.0,
            )
            .unwrap();
        assert!((v[0] - 8.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - (1.0 - (-2.0_f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn non_integrable_singularity_fails() {
        let q = Quadrature {
            max_depth: 20,
            ..Quadrature::default()
        };
        let r = q.integrate(|x| 1.0 / x, 0.0, 1.0);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }
}
