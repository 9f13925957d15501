//! Generator-matrix algebra for the background chain: stationary law,
//! transition matrices, deviation and fundamental matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, solve};

/// Tolerance on generator row sums, relative to the largest exit rate (and
/// absolute for rates of order one).
const ROW_SUM_TOL: f64 = 1e-12;

/// The rate matrix `Q` of a finite, irreducible continuous-time Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    q: DMatrix<f64>,
}

impl Generator {
    /// Validates `q` (square, finite, nonnegative off-diagonal, zero row sums,
    /// irreducible).
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        let d = q.nrows();
        if d == 0 || !q.is_square() {
            return Err(Error::InvalidGenerator(format!(
                "expected a non-empty square matrix, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGenerator("entries must be finite".into()));
        }
        for i in 0..d {
            for j in 0..d {
                if i != j && q[(i, j)] < 0.0 {
                    return Err(Error::InvalidGenerator(format!(
                        "off-diagonal entry q[{i}][{j}] = {} is negative",
                        q[(i, j)]
                    )));
                }
            }
            let row = q.row(i);
            let scale = row.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
            if row.sum().abs() > ROW_SUM_TOL * scale {
                return Err(Error::InvalidGenerator(format!(
                    "row {i} sums to {:e}, not zero",
                    row.sum()
                )));
            }
        }
        if !strongly_connected(&q) {
            return Err(Error::InvalidGenerator("chain is not irreducible".into()));
        }
        Ok(Self { q })
    }

    /// Builds a generator from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidGenerator(format!(
                "expected {d} rows of length {d}"
            )));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `q_i = -q_ii`, the total rate of leaving state `i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.q[(i, i)]
    }

    /// The generator with every rate multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "generator scale factor must be positive, got {factor}"
            )));
        }
        Ok(Self {
            q: &self.q * factor,
        })
    }
}

fn strongly_connected(q: &DMatrix<f64>) -> bool {
    let d = q.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; d];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..d {
                let w = if forward { q[(i, j)] } else { q[(j, i)] };
                if i != j && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Derived objects of an irreducible chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainAnalysis {
    /// Stationary distribution.
    pub pi: DVector<f64>,
    /// `Π = 1 π^T`.
    pub pi_matrix: DMatrix<f64>,
    /// Deviation matrix `D = ∫ (P(t) − Π) dt`.
    pub deviation: DMatrix<f64>,
    /// Fundamental matrix `F = D + Π`.
    pub fundamental: DMatrix<f64>,
    /// Slowest nonzero decay rate of `P(t)` towards `Π`; infinite for a
    /// single-state chain.
    pub gap: f64,
}

impl ChainAnalysis {
    pub fn new(gen: &Generator) -> Result<Self> {
        let pi = stationary_distribution(gen)?;
        let d = gen.dim();
        let pi_matrix = DMatrix::from_fn(d, d, |_, j| pi[j]);
        let fundamental = solve(
            &(&pi_matrix - gen.matrix()),
            &DMatrix::identity(d, d),
            "deviation_matrix",
        )?;
        let deviation = &fundamental - &pi_matrix;
        let gap = spectral_gap(gen)?;
        Ok(Self {
            pi,
            pi_matrix,
            deviation,
            fundamental,
            gap,
        })
    }

    /// Analysis of the chain with generator `factor · Q`, derived without
    /// re-solving: `π` is unchanged, `D` scales by `1/factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let deviation = &self.deviation / factor;
        Self {
            pi: self.pi.clone(),
            pi_matrix: self.pi_matrix.clone(),
            fundamental: &deviation + &self.pi_matrix,
            deviation,
            gap: self.gap * factor,
        }
    }
}

/// Stationary distribution, from `π^T Q = 0` with one balance equation
/// replaced by the normalization `Σ π_i = 1`.
pub fn stationary_distribution(gen: &Generator) -> Result<DVector<f64>> {
    let d = gen.dim();
    let mut a = gen.matrix().transpose();
    for j in 0..d {
        a[(d - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(d);
    b[d - 1] = 1.0;
    let pi = linalg::solve_vec(&a, &b, "stationary_distribution")?;
    if pi.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::SingularSystem("stationary_distribution"));
    }
    Ok(pi)
}

/// `P(t) = exp(Q t)`.
pub fn transition_matrix(gen: &Generator, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "transition time must be nonnegative, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(DMatrix::identity(gen.dim(), gen.dim()));
    }
    Ok(linalg::expm(&(gen.matrix() * t)))
}

/// Deviation matrix `D = (Π − Q)^{-1} − Π`.
pub fn deviation_matrix(gen: &Generator) -> Result<DMatrix<f64>> {
    Ok(ChainAnalysis::new(gen)?.deviation)
}

/// Exponentially row-weighted deviation matrix with entries
/// `∫ e^{−γ_i t} (p_ij(t) − π_j) dt`.
///
/// Row `i` is evaluated through the resolvent as `e_i^T (γ_i I − Q)^{-1} (I − Π)`,
/// which reduces to the row of `D` when `γ_i = 0`.
pub fn weighted_deviation_matrix(gen: &Generator, gamma: &[f64]) -> Result<DMatrix<f64>> {
    let analysis = ChainAnalysis::new(gen)?;
    weighted_deviation_with(gen, &analysis, gamma)
}

pub(crate) fn weighted_deviation_with(
    gen: &Generator,
    analysis: &ChainAnalysis,
    gamma: &[f64],
) -> Result<DMatrix<f64>> {
    let d = gen.dim();
    if gamma.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "weight vector has length {}, chain has {d} states",
            gamma.len()
        )));
    }
    if gamma.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
        return Err(Error::InvalidArgument(
            "deviation weights must be nonnegative".into(),
        ));
    }
    let eye = DMatrix::<f64>::identity(d, d);
    let centre = &eye - &analysis.pi_matrix;
    let mut out = DMatrix::zeros(d, d);
    for (i, &g) in gamma.iter().enumerate() {
        if g == 0.0 {
            out.set_row(i, &analysis.deviation.row(i));
            continue;
        }
        let resolvent = solve(
            &(&eye * g - gen.matrix()),
            &eye,
            "weighted_deviation_matrix",
        )?;
        out.set_row(i, &(resolvent.row(i) * &centre));
    }
    Ok(out)
}

/// Smallest nonzero `|Re λ|` over the eigenvalues of `Q`.
pub fn spectral_gap(gen: &Generator) -> Result<f64> {
    let d = gen.dim();
    if d == 1 {
        return Ok(f64::INFINITY);
    }
    let schur = gen
        .matrix()
        .clone()
        .try_schur(1e-14, 10_000)
        .ok_or(Error::SingularSystem("spectral_gap"))?;
    let mut re: Vec<f64> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.abs())
        .collect();
    re.sort_by(|a, b| a.total_cmp(b));
    // re[0] is the zero eigenvalue of the irreducible chain
    Ok(re[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::Quadrature;
    use proptest::prelude::*;

    fn gen(rows: &[&[f64]]) -> Generator {
        Generator::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn symmetric() -> Generator {
        gen(&[&[-5.0, 5.0], &[5.0, -5.0]])
    }

    fn asymmetric() -> Generator {
        gen(&[&[-1.0, 1.0], &[3.0, -3.0]])
    }

    /// Deviation matrix by quadrature of `P(t) − Π` over `[0, 40/gap]`.
    fn deviation_by_quadrature(g: &Generator) -> DMatrix<f64> {
        let a = ChainAnalysis::new(g).unwrap();
        let d = g.dim();
        let v = Quadrature::with_abs_tol(1e-12)
            .integrate_vec(
                d * d,
                |t, out| {
                    let p = transition_matrix(g, t).unwrap() - &a.pi_matrix;
                    out.copy_from_slice(p.as_slice());
                },
                0.0,
                40.0 / a.gap,
            )
            .unwrap();
        DMatrix::from_column_slice(d, d, &v)
    }

    #[test]
    fn rejects_invalid_generators() {
        let bad_sign = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]);
        assert!(matches!(
            Generator::new(bad_sign),
            Err(Error::InvalidGenerator(_))
        ));
        let bad_sum = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -1.0]);
        assert!(matches!(
            Generator::new(bad_sum),
            Err(Error::InvalidGenerator(_))
        ));
        let reducible = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            Generator::new(reducible),
            Err(Error::InvalidGenerator(_))
        ));
        let not_square = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        assert!(Generator::new(not_square).is_err());
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&symmetric()).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);

        let single = gen(&[&[0.0]]);
        assert_eq!(stationary_distribution(&single).unwrap()[0], 1.0);

        // balance π_1 q_12 = π_2 q_21 gives π = (3/4, 1/4)
        let pi = stationary_distribution(&asymmetric()).unwrap();
        assert!((pi[0] - 0.75).abs() < 1e-14);
        assert!((pi[1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn transition_matrix_examples() {
        let g = symmetric();
        assert_eq!(transition_matrix(&g, 0.0).unwrap(), DMatrix::identity(2, 2));

        let p = transition_matrix(&g, 0.1).unwrap();
        let e = (-1.0_f64).exp();
        // two-state closed form Π + e^{-(q12+q21)t}(I − Π)
        assert!((p[(0, 0)] - (1.0 + e) / 2.0).abs() < 1e-14);
        assert!((p[(0, 1)] - (1.0 - e) / 2.0).abs() < 1e-14);
        assert!((p[(0, 0)] - 0.6839).abs() < 1e-4);

        // truncated power series as a second route
        let qt = g.matrix() * 0.1;
        let mut term = DMatrix::<f64>::identity(2, 2);
        let mut series = term.clone();
        for k in 1..40 {
            term = &term * &qt / k as f64;
            series += &term;
        }
        assert!((p - series).amax() < 1e-14);

        let p = transition_matrix(&g, 100.0).unwrap();
        assert!((p.add_scalar(-0.5)).amax() < 1e-12);

        assert!(transition_matrix(&g, -1.0).is_err());
    }

    #[test]
    fn deviation_examples() {
        let single = gen(&[&[0.0]]);
        assert_eq!(deviation_matrix(&single).unwrap()[(0, 0)], 0.0);

        let d = deviation_matrix(&symmetric()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.05, -0.05, -0.05, 0.05]);
        assert!((&d - &expected).amax() < 1e-14);
        assert!((&d - deviation_by_quadrature(&symmetric())).amax() < 1e-9);

        let d = deviation_matrix(&asymmetric()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0625, -0.0625, -0.1875, 0.1875]);
        assert!((&d - &expected).amax() < 1e-14);
        assert!((&d - deviation_by_quadrature(&asymmetric())).amax() < 1e-9);
    }

    #[test]
    fn weighted_deviation_examples() {
        let g = symmetric();
        let d0 = weighted_deviation_matrix(&g, &[0.0, 0.0]).unwrap();
        assert!((d0 - deviation_matrix(&g).unwrap()).amax() < 1e-9);

        let single = gen(&[&[0.0]]);
        assert_eq!(
            weighted_deviation_matrix(&single, &[3.0]).unwrap()[(0, 0)],
            0.0
        );

        // ∫ e^{−γ_i t} (±0.5 e^{−10t}) dt = ±0.5/(γ_i + 10)
        let w = weighted_deviation_matrix(&g, &[1.0, 2.0]).unwrap();
        assert!((w[(0, 0)] - 0.5 / 11.0).abs() < 1e-14);
        assert!((w[(0, 1)] + 0.5 / 11.0).abs() < 1e-14);
        assert!((w[(1, 0)] + 0.5 / 12.0).abs() < 1e-14);
        assert!((w[(1, 1)] - 0.5 / 12.0).abs() < 1e-14);

        // quadrature oracle, row weights on the asymmetric chain
        let g = asymmetric();
        let gamma = [0.7, 2.5];
        let w = weighted_deviation_matrix(&g, &gamma).unwrap();
        let pi = stationary_distribution(&g).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let v = Quadrature::with_abs_tol(1e-13)
                    .integrate(
                        |t| {
                            (-gamma[i] * t).exp()
                                * (transition_matrix(&g, t).unwrap()[(i, j)] - pi[j])
                        },
                        0.0,
                        40.0,
                    )
                    .unwrap();
                assert!((w[(i, j)] - v).abs() < 1e-10);
            }
        }

        assert!(weighted_deviation_matrix(&g, &[1.0]).is_err());
        assert!(weighted_deviation_matrix(&g, &[-1.0, 0.0]).is_err());
    }

    #[test]
    fn gap_of_two_state_chain() {
        assert!((spectral_gap(&symmetric()).unwrap() - 10.0).abs() < 1e-10);
        assert!((spectral_gap(&asymmetric()).unwrap() - 4.0).abs() < 1e-10);
        assert!(spectral_gap(&gen(&[&[0.0]])).unwrap().is_infinite());
    }

    fn random_generator() -> impl Strategy<Value = Generator> {
        (2usize..=4)
            .prop_flat_map(|d| (Just(d), proptest::collection::vec(0.1f64..5.0, d * d)))
            .prop_map(|(d, rates)| {
                let mut q =
                    DMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { rates[i * d + j] });
                for i in 0..d {
                    let s = q.row(i).sum();
                    q[(i, i)] = -s;
                }
                Generator::new(q).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn fundamental_identities(g in random_generator()) {
            let a = ChainAnalysis::new(&g).unwrap();
            let d = g.dim();
            let q = g.matrix();
            let eye = DMatrix::<f64>::identity(d, d);
            let target = &a.pi_matrix - &eye;
            prop_assert!((q * &a.fundamental - &target).amax() < 1e-8);
            prop_assert!((&a.fundamental * q - &target).amax() < 1e-8);
            prop_assert!((&a.pi_matrix * &a.fundamental - &a.pi_matrix).amax() < 1e-8);
            prop_assert!((&a.fundamental * &a.pi_matrix - &a.pi_matrix).amax() < 1e-8);
            let ones = DVector::<f64>::from_element(d, 1.0);
            prop_assert!((&a.fundamental * &ones - &ones).amax() < 1e-8);
            prop_assert!((&a.deviation * &ones).amax() < 1e-8);
            prop_assert!((a.pi.transpose() * &a.deviation).amax() < 1e-8);
            prop_assert!((a.pi.transpose() * q).amax() < 1e-10);
            prop_assert!((a.pi.sum() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn semigroup(g in random_generator(), s in 0.0f64..2.0, t in 0.0f64..2.0) {
            let lhs = transition_matrix(&g, s + t).unwrap();
            let rhs = transition_matrix(&g, s).unwrap() * transition_matrix(&g, t).unwrap();
            prop_assert!((lhs - rhs).amax() < 1e-8);
        }

        #[test]
        fn deviation_matches_quadrature(g in random_generator()) {
            let d = deviation_matrix(&g).unwrap();
            prop_assert!((d - deviation_by_quadrature(&g)).amax() < 1e-6);
        }

        #[test]
        fn zero_weights_reduce_to_deviation(g in random_generator()) {
            let zeros = vec![0.0; g.dim()];
            let w = weighted_deviation_matrix(&g, &zeros).unwrap();
            prop_assert!((w - deviation_matrix(&g).unwrap()).amax() < 1e-9);
        }
    }
}
