use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, Poisson, StandardNormal};

use super::{diffusion_step, Replication, Schedule, SimMethod};
use crate::asymptotics::occupation_covariance;
use crate::error::{Error, Result};
use crate::linalg::psd_cholesky;
use crate::queue::QueueSpec;
use crate::Model;

/// Largest count that survives the round trip through `f64` exactly.
const MAX_COUNT: f64 = 9_007_199_254_740_992.0;

/// Precomputed rates of the scaled system shared by all replications.
pub(crate) struct Runner<'a> {
    d: usize,
    model: Model,
    engine: SimMethod,
    schedule: &'a Schedule,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    pi: Vec<f64>,
    exit: Vec<f64>,
    /// `jumps[i]` lists `(j, cumulative probability)` over `j ≠ i`.
    jumps: Vec<Vec<(usize, f64)>>,
    /// Cholesky factor of the occupation covariance rate (diffusion engine).
    occupation_factor: DMatrix<f64>,
    step: f64,
}

impl<'a> Runner<'a> {
    pub fn new(
        scaled: &QueueSpec,
        model: Model,
        engine: SimMethod,
        schedule: &'a Schedule,
    ) -> Result<Self> {
        let d = scaled.dim();
        let q = scaled.q();
        let jumps = (0..d)
            .map(|i| {
                let exit = scaled.generator().exit_rate(i);
                let mut acc = 0.0;
                (0..d)
                    .filter(|&j| j != i && q[(i, j)] > 0.0)
                    .map(|j| {
                        acc += q[(i, j)] / exit;
                        (j, acc)
                    })
                    .collect()
            })
            .collect();
        let occupation_factor = if engine == SimMethod::DiffusionBackground {
            psd_cholesky(&occupation_covariance(scaled))?
        } else {
            DMatrix::zeros(d, d)
        };
        Ok(Self {
            d,
            model,
            engine,
            schedule,
            lambda: scaled.lambda().iter().copied().collect(),
            mu: scaled.mu().iter().copied().collect(),
            pi: scaled.pi().iter().copied().collect(),
            exit: (0..d).map(|i| scaled.generator().exit_rate(i)).collect(),
            jumps,
            occupation_factor,
            step: diffusion_step(scaled),
        })
    }

    pub fn run(&self, rng: &mut ChaCha8Rng, rep: usize) -> Result<Replication> {
        let k = self.schedule.k;
        let mut out = Replication {
            counts: vec![0; k],
            lagged: vec![0; k],
            types: if self.model == Model::II {
                vec![0; k * self.d]
            } else {
                Vec::new()
            },
            occupation: vec![0.0; self.d],
        };
        match self.engine {
            SimMethod::Gillespie | SimMethod::Auto => self.gillespie(rng, &mut out),
            SimMethod::ConditionalPoisson => self.conditional(rng, &mut out, rep)?,
            SimMethod::DiffusionBackground => self.diffusion(rng, &mut out, rep)?,
        }
        let horizon = self.schedule.horizon;
        if horizon > 0.0 {
            out.occupation.iter_mut().for_each(|o| *o /= horizon);
        }
        Ok(out)
    }

    fn record(&self, out: &mut Replication, slot: usize, types: &[u64]) {
        let k = self.schedule.k;
        let total = types.iter().sum();
        if slot < k {
            out.counts[slot] = total;
            if self.model == Model::II {
                out.types[slot * self.d..(slot + 1) * self.d].copy_from_slice(types);
            }
        } else {
            out.lagged[slot - k] = total;
        }
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.pi.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.d - 1
    }

    fn jump(&self, rng: &mut ChaCha8Rng, from: usize) -> usize {
        let u: f64 = rng.random();
        let table = &self.jumps[from];
        table
            .iter()
            .find(|(_, c)| u < *c)
            .or(table.last())
            .map_or(from, |(j, _)| *j)
    }

    fn holding_time(&self, rng: &mut ChaCha8Rng, state: usize) -> f64 {
        if self.exit[state] > 0.0 {
            rng.sample::<f64, _>(Exp1) / self.exit[state]
        } else {
            f64::INFINITY
        }
    }

    /// Event-driven simulation of `(J, M)`. In Model I the count vector has
    /// one entry (all jobs share the current rate); in Model II it is indexed
    /// by arrival state.
    fn gillespie(&self, rng: &mut ChaCha8Rng, out: &mut Replication) {
        let points = &self.schedule.points;
        let horizon = self.schedule.horizon;
        let mut types = vec![0_u64; if self.model == Model::II { self.d } else { 1 }];
        let mut j = self.initial_state(rng);
        let mut t = 0.0;
        let mut next_obs = 0;
        loop {
            let dep_rate = match self.model {
                Model::I => types[0] as f64 * self.mu[j],
                Model::II => types
                    .iter()
                    .zip(&self.mu)
                    .map(|(&m, mu)| m as f64 * mu)
                    .sum(),
            };
            let total = self.exit[j] + self.lambda[j] + dep_rate;
            let t_next = if total > 0.0 {
                t + rng.sample::<f64, _>(Exp1) / total
            } else {
                f64::INFINITY
            };
            while next_obs < points.len() && points[next_obs].0 < t_next {
                self.record(out, points[next_obs].1, &types);
                next_obs += 1;
            }
            if t_next >= horizon {
                out.occupation[j] += horizon - t;
                break;
            }
            out.occupation[j] += t_next - t;
            t = t_next;

            let mut u = rng.random::<f64>() * total;
            if u < self.exit[j] {
                j = self.jump(rng, j);
                continue;
            }
            u -= self.exit[j];
            if u < self.lambda[j] {
                let slot = if self.model == Model::II { j } else { 0 };
                types[slot] += 1;
                continue;
            }
            u -= self.lambda[j];
            match self.model {
                Model::I => types[0] = types[0].saturating_sub(1),
                Model::II => {
                    let mut slot = self.d - 1;
                    for (i, (&m, mu)) in types.iter().zip(&self.mu).enumerate() {
                        let w = m as f64 * mu;
                        if u < w {
                            slot = i;
                            break;
                        }
                        u -= w;
                    }
                    // guard against rounding past the last positive weight
                    while types[slot] == 0 {
                        slot -= 1;
                    }
                    types[slot] -= 1;
                }
            }
        }
        while next_obs < points.len() {
            self.record(out, points[next_obs].1, &types);
            next_obs += 1;
        }
    }

    /// Exact background path; the queue is sampled from its conditional law
    /// at observation times only.
    fn conditional(&self, rng: &mut ChaCha8Rng, out: &mut Replication, rep: usize) -> Result<()> {
        let mut j = self.initial_state(rng);
        let mut next_jump = self.holding_time(rng, j);
        let mut acc = Accumulator::new(self.d);
        let mut types = vec![0_u64; self.count_slots()];
        let mut t = 0.0;
        for &(tau, slot) in &self.schedule.points {
            while next_jump < tau {
                self.segment(&mut acc, j, next_jump - t, out);
                t = next_jump;
                j = self.jump(rng, j);
                next_jump = t + self.holding_time(rng, j);
            }
            self.segment(&mut acc, j, tau - t, out);
            t = tau;
            self.observe(rng, &mut acc, &mut types, rep)?;
            self.record(out, slot, &types);
        }
        // occupation over the rest of the horizon
        let horizon = self.schedule.horizon;
        while next_jump < horizon {
            out.occupation[j] += next_jump - t;
            t = next_jump;
            j = self.jump(rng, j);
            next_jump = t + self.holding_time(rng, j);
        }
        out.occupation[j] += (horizon - t).max(0.0);
        Ok(())
    }

    /// Gaussian occupation increments over steps of at most `self.step`.
    fn diffusion(&self, rng: &mut ChaCha8Rng, out: &mut Replication, rep: usize) -> Result<()> {
        let d = self.d;
        let mut acc = Accumulator::new(d);
        let mut types = vec![0_u64; self.count_slots()];
        let mut occ = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut t = 0.0;
        let mut rest = self.schedule.points.iter().map(|p| p.0).collect::<Vec<_>>();
        rest.push(self.schedule.horizon);
        let mut points = self.schedule.points.iter();
        for &tau in &rest {
            let span = tau - t;
            if span > 0.0 {
                let n = (span / self.step).ceil().max(1.0) as usize;
                let h = span / n as f64;
                for _ in 0..n {
                    for zi in z.iter_mut() {
                        *zi = rng.sample(StandardNormal);
                    }
                    let mut sum = 0.0;
                    for i in 0..d {
                        let mut noise = 0.0;
                        for (l, zl) in z.iter().enumerate().take(i + 1) {
                            noise += self.occupation_factor[(i, l)] * zl;
                        }
                        occ[i] = (self.pi[i] * h + h.sqrt() * noise).max(0.0);
                        sum += occ[i];
                    }
                    if sum > 0.0 {
                        occ.iter_mut().for_each(|o| *o *= h / sum);
                    }
                    self.mixed_segment(&mut acc, &occ, h);
                    for i in 0..d {
                        out.occupation[i] += occ[i];
                    }
                }
                t = tau;
            }
            if let Some(&(_, slot)) = points.next() {
                self.observe(rng, &mut acc, &mut types, rep)?;
                self.record(out, slot, &types);
            }
        }
        Ok(())
    }

    fn count_slots(&self) -> usize {
        match self.model {
            Model::I => 1,
            Model::II => self.d,
        }
    }

    /// Background in state `j` for time `h`.
    fn segment(&self, acc: &mut Accumulator, j: usize, h: f64, out: &mut Replication) {
        if h <= 0.0 {
            return;
        }
        out.occupation[j] += h;
        match self.model {
            Model::I => {
                let decay = -(-self.mu[j] * h).exp_m1();
                acc.arrivals[0] =
                    acc.arrivals[0] * (1.0 - decay) + self.lambda[j] * decay / self.mu[j];
                acc.hazard[0] += self.mu[j] * h;
            }
            Model::II => {
                for k in 0..self.d {
                    acc.arrivals[k] *= (-self.mu[k] * h).exp();
                    acc.hazard[k] += self.mu[k] * h;
                }
                acc.arrivals[j] += self.lambda[j] * -(-self.mu[j] * h).exp_m1() / self.mu[j];
            }
        }
    }

    /// A step of length `h` with occupation times `occ`, arrivals spread
    /// uniformly over the step.
    fn mixed_segment(&self, acc: &mut Accumulator, occ: &[f64], h: f64) {
        match self.model {
            Model::I => {
                let rate: f64 = occ.iter().zip(&self.mu).map(|(o, m)| o * m).sum::<f64>() / h;
                let inflow: f64 = occ.iter().zip(&self.lambda).map(|(o, l)| o * l).sum();
                let decay = -(-rate * h).exp_m1();
                let spread = if rate * h > 0.0 {
                    decay / (rate * h)
                } else {
                    1.0
                };
                acc.arrivals[0] = acc.arrivals[0] * (1.0 - decay) + inflow * spread;
                acc.hazard[0] += rate * h;
            }
            Model::II => {
                for k in 0..self.d {
                    let decay = -(-self.mu[k] * h).exp_m1();
                    acc.arrivals[k] = acc.arrivals[k] * (1.0 - decay)
                        + self.lambda[k] * occ[k] * decay / (self.mu[k] * h);
                    acc.hazard[k] += self.mu[k] * h;
                }
            }
        }
    }

    /// Thins the previous counts, adds the new survivors and resets the
    /// accumulator.
    fn observe(
        &self,
        rng: &mut ChaCha8Rng,
        acc: &mut Accumulator,
        types: &mut [u64],
        rep: usize,
    ) -> Result<()> {
        for (k, m) in types.iter_mut().enumerate() {
            let survivors = thin(rng, *m, (-acc.hazard[k]).exp());
            let fresh = poisson(rng, acc.arrivals[k], rep)?;
            *m = survivors
                .checked_add(fresh)
                .filter(|v| (*v as f64) < MAX_COUNT)
                .ok_or(Error::Overflow(rep))?;
            acc.arrivals[k] = 0.0;
            acc.hazard[k] = 0.0;
        }
        Ok(())
    }
}

/// Conditional parameters accumulated since the last observation: the mean
/// number of new arrivals still present and the integrated departure hazard
/// of jobs already present.
struct Accumulator {
    arrivals: Vec<f64>,
    hazard: Vec<f64>,
}

impl Accumulator {
    fn new(d: usize) -> Self {
        Self {
            arrivals: vec![0.0; d],
            hazard: vec![0.0; d],
        }
    }
}

fn thin(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).map_or(0, |b| b.sample(rng))
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64, rep: usize) -> Result<u64> {
    if !(mean > 0.0) {
        return Ok(0);
    }
    let x: f64 = Poisson::new(mean)
        .map_err(|_| Error::Overflow(rep))?
        .sample(rng);
    if !(x < MAX_COUNT) {
        return Err(Error::Overflow(rep));
    }
    Ok(x as u64)
}
