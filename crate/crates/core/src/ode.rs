//! Adaptive Dormand–Prince 5(4) integrator reporting on a fixed output grid.

use crate::error::{Error, Result};

/// Step-size controller settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Give up once the accepted step falls below `min_step_fraction * horizon`.
    pub min_step_fraction: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-11,
            min_step_fraction: 1e-12,
            max_steps: 5_000_000,
        }
    }
}

// Dormand–Prince tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `grid[0]` with initial value `y0` and
/// returns the solution at every grid point (the first entry is `y0`).
///
/// `grid` must be strictly increasing. Steps are shortened to land on grid
/// points, so reported values carry the full step accuracy.
pub fn integrate<F>(mut f: F, y0: &[f64], grid: &[f64], opts: &OdeOptions) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(
            "time grid must be finite and strictly increasing".into(),
        ));
    }
    let n = y0.len();
    let t_end = *grid.last().unwrap();
    let horizon = t_end - grid[0];
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0.to_vec());
    if grid.len() == 1 {
        return Ok(out);
    }

    let mut t = grid[0];
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    f(t, &y, &mut k[0]);

    // initial step from the derivative scale
    let scale0 = y
        .iter()
        .map(|v| opts.abs_tol + opts.rel_tol * v.abs())
        .collect::<Vec<_>>();
    let d1 = rms(&k[0], &scale0);
    let mut h = if d1 > 1e-12 {
        0.01 / d1
    } else {
        horizon * 1e-3
    };
    h = h.min(horizon).max(horizon * 1e-10);

    let mut next_out = 1;
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut steps = 0_usize;

    while next_out < grid.len() {
        if steps >= opts.max_steps {
            return Err(Error::OdeToleranceFailure {
                t,
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }
        steps += 1;
        let h_step = h.min(grid[next_out] - t);

        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += a * k[j][i];
                }
                stage[i] = y[i] + h_step * acc;
            }
            f(t + C[s] * h_step, &stage, &mut k[s]);
        }
        // stage 6 is evaluated at the 5th-order solution (FSAL)
        for i in 0..n {
            let mut acc5 = 0.0;
            let mut acc4 = 0.0;
            for s in 0..7 {
                acc5 += B5[s] * k[s][i];
                acc4 += B4[s] * k[s][i];
            }
            y_new[i] = y[i] + h_step * acc5;
            err[i] = h_step * (acc5 - acc4);
        }
        let scale = y
            .iter()
            .zip(&y_new)
            .map(|(a, b)| opts.abs_tol + opts.rel_tol * a.abs().max(b.abs()))
            .collect::<Vec<_>>();
        let e = rms(&err, &scale);
        if !e.is_finite() {
            return Err(Error::OdeToleranceFailure {
                t,
                reason: "non-finite error estimate".into(),
            });
        }

        if e <= 1.0 {
            if h_step == grid[next_out] - t {
                t = grid[next_out];
                out.push(y_new.clone());
                next_out += 1;
            } else {
                t += h_step;
            }
            y.copy_from_slice(&y_new);
            let last = k[6].clone();
            k[0].copy_from_slice(&last);
        }

        // k[0] now holds f(t, y) (first same as last)
        let factor = if e == 0.0 {
            5.0
        } else {
            (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = h_step * factor;
        if h < opts.min_step_fraction * horizon && next_out < grid.len() {
            return Err(Error::OdeToleranceFailure {
                t,
                reason: format!("step size collapsed to {h:e} (stiff system)"),
            });
        }
    }
    Ok(out)
}

fn rms(v: &[f64], scale: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let s: f64 = v.iter().zip(scale).map(|(x, s)| (x / s).powi(2)).sum();
    (s / v.len() as f64).sqrt()
}
