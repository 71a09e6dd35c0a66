//! Three generators for the read-count process: event-level thinning, a
//! per-step micro-simulation of N independent users, and direct integration
//! of the master equation on a truncated state space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{DegreeDistribution, NetworkParams, PopularitySpec};
use crate::moments::cumulative_intensity;

/// Shoot events of one realization. X(t) is the sum of the jumps at or
/// before t.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub event_times: Vec<f64>,
    pub jump_sizes: Vec<u64>,
}

impl EventTrace {
    pub fn len(&self) -> usize {
        self.event_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_times.is_empty()
    }

    /// X after each event.
    pub fn trajectory(&self) -> Vec<u64> {
        self.jump_sizes
            .iter()
            .scan(0u64, |acc, &j| {
                *acc += j;
                Some(*acc)
            })
            .collect()
    }

    pub fn reads_at(&self, t: f64) -> u64 {
        let upto = self.event_times.partition_point(|&e| e <= t);
        self.jump_sizes[..upto].iter().sum()
    }

    /// X(t) on an ascending grid in one pass.
    pub fn reads_on_grid(&self, grid: &[f64]) -> Vec<u64> {
        let mut out = Vec::with_capacity(grid.len());
        let mut idx = 0;
        let mut acc = 0u64;
        for &t in grid {
            while idx < self.event_times.len() && self.event_times[idx] <= t {
                acc += self.jump_sizes[idx];
                idx += 1;
            }
            out.push(acc);
        }
        out
    }
}

/// Splitmix64 finalizer, used to derive independent per-replication seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replication_seed(master: u64, replication: u64) -> u64 {
    splitmix64(master.wrapping_add(replication))
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(domain(format!("horizon must be positive and finite, got {horizon}")));
    }
    Ok(())
}

/// Inhomogeneous Poisson shoots of rate N·w(t) by thinning against N·w_max,
/// each carrying an independent follower-count jump.
pub fn simulate_events(
    params: &NetworkParams,
    spec: &PopularitySpec,
    dist: &DegreeDistribution,
    horizon: f64,
    seed: u64,
) -> Result<EventTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_events_with(params, spec, dist, horizon, &mut rng)
}

pub fn simulate_events_with<R: Rng + ?Sized>(
    params: &NetworkParams,
    spec: &PopularitySpec,
    dist: &DegreeDistribution,
    horizon: f64,
    rng: &mut R,
) -> Result<EventTrace> {
    params.validate()?;
    spec.validate()?;
    dist.validate()?;
    check_horizon(horizon)?;
    let w_max = spec.peak_rate(horizon)?;
    let mut trace = EventTrace::default();
    if w_max == 0.0 {
        return Ok(trace);
    }
    let candidates = Exp::new(params.n() * w_max)
        .map_err(|e| Error::Numeric(format!("majorant rate: {e}")))?;
    let mut t = 0.0;
    loop {
        t += candidates.sample(rng);
        if t > horizon {
            break;
        }
        let w = spec.evaluate(t)?;
        if rng.random::<f64>() * w_max < w {
            trace.event_times.push(t);
            trace.jump_sizes.push(dist.sample(rng));
        }
    }
    Ok(trace)
}

/// Per-step simulation: in each step of length `dt` every one of the N users
/// shoots independently with probability w·dt (w at the step midpoint). The
/// number of shooters in a step is drawn as the equivalent Binomial(N, w·dt);
/// shooters within a step are spaced evenly inside it.
pub fn simulate_micro(
    params: &NetworkParams,
    spec: &PopularitySpec,
    dist: &DegreeDistribution,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<EventTrace> {
    params.validate()?;
    spec.validate()?;
    dist.validate()?;
    check_horizon(horizon)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(domain(format!("dt must be positive, got {dt}")));
    }
    let w_max = spec.peak_rate(horizon)?;
    if w_max * dt > 1.0 {
        return Err(domain(format!(
            "w_max·dt = {} exceeds 1 and is not a probability",
            w_max * dt
        )));
    }
    if params.n() * w_max * dt > 0.1 {
        log::warn!(
            "N·w_max·dt = {:.3} > 0.1; multiple shoots per step distort the micro-simulation",
            params.n() * w_max * dt
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = EventTrace::default();
    let steps = (horizon / dt).ceil() as u64;
    for k in 0..steps {
        let start = k as f64 * dt;
        let end = ((k + 1) as f64 * dt).min(horizon);
        if end <= start {
            break;
        }
        let width = end - start;
        let w = spec.evaluate(0.5 * (start + end))?;
        let p = (w * width).min(1.0);
        if p == 0.0 {
            continue;
        }
        let shooters = Binomial::new(params.n_users, p)
            .map_err(|e| Error::Numeric(format!("binomial step: {e}")))?
            .sample(&mut rng);
        for j in 0..shooters {
            let frac = (j + 1) as f64 / (shooters + 1) as f64;
            trace.event_times.push(start + width * frac);
            trace.jump_sizes.push(dist.sample(&mut rng));
        }
    }
    Ok(trace)
}

/// P(x, t) on x = 0..=x_max, one row per requested time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionGrid {
    pub x_max: usize,
    pub times: Vec<f64>,
    pub pmf: Vec<Vec<f64>>,
    /// 1 − Σ pmf per row: mass that jumped past x_max.
    pub leak: Vec<f64>,
}

impl DistributionGrid {
    pub fn x_values(&self) -> impl Iterator<Item = usize> {
        0..=self.x_max
    }

    /// Mean of a row, renormalized by its retained mass.
    pub fn mean(&self, row: usize) -> f64 {
        let p = &self.pmf[row];
        let mass: f64 = p.iter().sum();
        p.iter().enumerate().map(|(x, &q)| x as f64 * q).sum::<f64>() / mass
    }

    pub fn variance(&self, row: usize) -> f64 {
        let p = &self.pmf[row];
        let mass: f64 = p.iter().sum();
        let mean = self.mean(row);
        p.iter()
            .enumerate()
            .map(|(x, &q)| (x as f64 - mean).powi(2) * q)
            .sum::<f64>()
            / mass
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MasterEquationConfig {
    pub x_max: usize,
    /// RK4 step; defaults to 1/(50·N·w_max).
    pub dt: Option<f64>,
    pub leak_tolerance: f64,
}

impl MasterEquationConfig {
    pub fn new(x_max: usize) -> Self {
        Self {
            x_max,
            dt: None,
            leak_tolerance: 1e-6,
        }
    }
}

/// dP(x)/dt = N·w(t)·[Σ_{i=0}^{x} P(x−i)·f(i) − P(x)]
fn master_rhs(rate: f64, jumps: &[f64], p: &[f64], out: &mut [f64]) {
    for x in 0..p.len() {
        let reach = jumps.len().min(x + 1);
        let mut inflow = 0.0;
        for (i, &fi) in jumps[..reach].iter().enumerate() {
            inflow += p[x - i] * fi;
        }
        out[x] = rate * (inflow - p[x]);
    }
}

/// Integrates the master equation with classical RK4 from the point mass at
/// zero. Requires a finite-support follower law.
pub fn evolve_master_equation(
    params: &NetworkParams,
    spec: &PopularitySpec,
    dist: &DegreeDistribution,
    times: &[f64],
    config: MasterEquationConfig,
) -> Result<DistributionGrid> {
    params.validate()?;
    spec.validate()?;
    let jumps = dist.finite_pmf()?;
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(domain("master equation times must be finite and >= 0"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(domain("master equation times must be ascending"));
    }
    let horizon = times.last().copied().unwrap_or(0.0);
    let w_max = if horizon > 0.0 {
        spec.peak_rate(horizon)?
    } else {
        0.0
    };
    let n = params.n();
    let dt = match config.dt {
        Some(dt) if dt > 0.0 && dt.is_finite() => dt,
        Some(dt) => return Err(domain(format!("RK4 step must be positive, got {dt}"))),
        None if w_max > 0.0 => 1.0 / (50.0 * n * w_max),
        None => f64::INFINITY,
    };

    let size = config.x_max + 1;
    let mut state = vec![0.0; size];
    state[0] = 1.0;
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![0.0; size], vec![0.0; size], vec![0.0; size], vec![0.0; size]);
    let mut scratch = vec![0.0; size];
    let rate = |t: f64| -> Result<f64> { Ok(n * spec.evaluate(t)?) };

    let mut grid = DistributionGrid {
        x_max: config.x_max,
        times: times.to_vec(),
        pmf: Vec::with_capacity(times.len()),
        leak: Vec::with_capacity(times.len()),
    };
    let mut now = 0.0;
    for &target in times {
        let span = target - now;
        if span > 0.0 {
            let steps = if dt.is_finite() { (span / dt).ceil().max(1.0) as usize } else { 1 };
            let h = span / steps as f64;
            for step in 0..steps {
                let t = now + step as f64 * h;
                let (r1, r2, r3) = (rate(t)?, rate(t + 0.5 * h)?, rate((t + h).min(target))?);
                master_rhs(r1, &jumps, &state, &mut k1);
                for x in 0..size {
                    scratch[x] = state[x] + 0.5 * h * k1[x];
                }
                master_rhs(r2, &jumps, &scratch, &mut k2);
                for x in 0..size {
                    scratch[x] = state[x] + 0.5 * h * k2[x];
                }
                master_rhs(r2, &jumps, &scratch, &mut k3);
                for x in 0..size {
                    scratch[x] = state[x] + h * k3[x];
                }
                master_rhs(r3, &jumps, &scratch, &mut k4);
                for x in 0..size {
                    state[x] += h / 6.0 * (k1[x] + 2.0 * k2[x] + 2.0 * k3[x] + k4[x]);
                }
            }
            now = target;
        }
        let row: Vec<f64> = state.iter().map(|&p| p.max(0.0)).collect();
        let leak = (1.0 - row.iter().sum::<f64>()).max(0.0);
        if leak > config.leak_tolerance {
            let intensity = cumulative_intensity(params, spec, target)?;
            let m = dist.moments()?;
            let (mean, sd) = (m.mean * intensity, (m.mean_sq * intensity).sqrt());
            let suggested = (mean + 10.0 * sd).ceil() as usize + jumps.len();
            return Err(Error::Truncation {
                leak,
                tolerance: config.leak_tolerance,
                required_x_max: suggested.max(2 * config.x_max),
            });
        }
        grid.pmf.push(row);
        grid.leak.push(leak);
    }
    Ok(grid)
}

/// Which stochastic generator drives an ensemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Generator {
    Events,
    Micro { dt: f64 },
}

/// X(t) on `grid` for each replication, row-major by replication. Replication
/// `i` is seeded with `replication_seed(seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_reads(
    params: &NetworkParams,
    spec: &PopularitySpec,
    dist: &DegreeDistribution,
    horizon: f64,
    grid: &[f64],
    replications: usize,
    seed: u64,
    generator: Generator,
) -> Result<Vec<Vec<u64>>> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(domain("ensemble grid must be ascending"));
    }
    (0..replications as u64)
        .into_par_iter()
        .map(|i| {
            let s = replication_seed(seed, i);
            let trace = match generator {
                Generator::Events => simulate_events(params, spec, dist, horizon, s)?,
                Generator::Micro { dt } => simulate_micro(params, spec, dist, dt, horizon, s)?,
            };
            Ok(trace.reads_on_grid(grid))
        })
        .collect()
}

/// Per-time sample statistics over an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub replications: usize,
    pub sample_mean: Vec<f64>,
    /// Unbiased (n − 1) sample variance.
    pub sample_var: Vec<f64>,
    /// √(sample_var / replications).
    pub standard_error: Vec<f64>,
    /// Large-sample standard error of `sample_var`.
    pub variance_standard_error: Vec<f64>,
}

/// Mean/variance accumulator that can be merged in any order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * self.count as f64 * other.count as f64 / count as f64;
        Self { count, mean, m2 }
    }

    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Summarizes replication-major samples taken on `times`.
pub fn summarize(times: &[f64], samples: &[Vec<u64>]) -> EnsembleStats {
    let n = samples.len();
    let mut stats = EnsembleStats {
        times: times.to_vec(),
        replications: n,
        sample_mean: Vec::with_capacity(times.len()),
        sample_var: Vec::with_capacity(times.len()),
        standard_error: Vec::with_capacity(times.len()),
        variance_standard_error: Vec::with_capacity(times.len()),
    };
    for j in 0..times.len() {
        let acc = samples.iter().fold(RunningMoments::default(), |mut acc, row| {
            acc.push(row[j] as f64);
            acc
        });
        let var = acc.sample_variance();
        let m4 = samples
            .iter()
            .map(|row| (row[j] as f64 - acc.mean).powi(4))
            .sum::<f64>()
            / n as f64;
        let nf = n as f64;
        let var_of_var = ((m4 - var * var * (nf - 3.0) / (nf - 1.0)) / nf).max(0.0);
        stats.sample_mean.push(acc.mean);
        stats.sample_var.push(var);
        stats.standard_error.push((var / nf).sqrt());
        stats.variance_standard_error.push(var_of_var.sqrt());
    }
    stats
}

/// Monte Carlo mean and variance of X(t) on `grid` from independent
/// event-level replications.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_statistics(
    params: &NetworkParams,
    spec: &PopularitySpec,
    dist: &DegreeDistribution,
    horizon: f64,
    grid: &[f64],
    replications: usize,
    seed: u64,
) -> Result<EnsembleStats> {
    if replications < 2 {
        return Err(domain("ensemble statistics need at least 2 replications"));
    }
    let samples = sample_reads(params, spec, dist, horizon, grid, replications, seed, Generator::Events)?;
    Ok(summarize(grid, &samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64, dist: &DegreeDistribution) -> NetworkParams {
        NetworkParams::from_degree(n, dist).unwrap()
    }

    #[test]
    fn zero_rate_gives_empty_trace() {
        let dist = DegreeDistribution::Degenerate { k: 2 };
        let p = params(100, &dist);
        let spec = PopularitySpec::constant(0.0).unwrap();
        assert!(simulate_events(&p, &spec, &dist, 10.0, 1).unwrap().is_empty());
        let micro = simulate_micro(&p, &spec, &dist, 0.01, 10.0, 1).unwrap();
        assert!(micro.is_empty());
        assert_eq!(micro.reads_on_grid(&[0.0, 5.0, 10.0]), vec![0, 0, 0]);
    }

    #[test]
    fn traces_are_ordered_and_reproducible() {
        let dist = DegreeDistribution::Discrete {
            support: vec![1, 2, 3],
            probs: vec![0.5, 0.3, 0.2],
        };
        let p = params(50, &dist);
        let spec = PopularitySpec::gamma_kernel(2.0, 1.0, 0.1).unwrap();
        let a = simulate_events(&p, &spec, &dist, 10.0, 7).unwrap();
        let b = simulate_events(&p, &spec, &dist, 10.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.event_times.windows(2).all(|w| w[1] > w[0]));
        assert!(a.jump_sizes.iter().all(|&j| dist.in_support(j)));
        let traj = a.trajectory();
        assert!(traj.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(a.reads_at(10.0), *traj.last().unwrap());

        let m = simulate_micro(&p, &spec, &dist, 0.01, 10.0, 7).unwrap();
        assert!(m.event_times.windows(2).all(|w| w[1] > w[0]));
        assert!(m.event_times.iter().all(|&t| t > 0.0 && t <= 10.0));
    }

    #[test]
    fn micro_rejects_non_probability_steps() {
        let dist = DegreeDistribution::Degenerate { k: 1 };
        let p = params(10, &dist);
        let spec = PopularitySpec::constant(0.5).unwrap();
        assert!(matches!(
            simulate_micro(&p, &spec, &dist, 3.0, 10.0, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tabulated_rate_must_cover_horizon() {
        let dist = DegreeDistribution::Degenerate { k: 1 };
        let p = params(10, &dist);
        let spec = PopularitySpec::tabulated(vec![0.0, 1.0], vec![0.1, 0.2]).unwrap();
        assert!(simulate_events(&p, &spec, &dist, 2.0, 0).is_err());
        assert!(simulate_events(&p, &spec, &dist, 1.0, 0).is_ok());
    }

    #[test]
    fn master_equation_starts_at_point_mass() {
        let dist = DegreeDistribution::Degenerate { k: 1 };
        let p = params(10, &dist);
        let spec = PopularitySpec::constant(0.1).unwrap();
        let grid =
            evolve_master_equation(&p, &spec, &dist, &[0.0, 1.0], MasterEquationConfig::new(40))
                .unwrap();
        assert_eq!(grid.pmf[0][0], 1.0);
        assert!(grid.pmf[0][1..].iter().all(|&p| p == 0.0));
        // Λ(1) = 1: P(0, 1) = e^{−1}.
        assert!((grid.pmf[1][0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn master_equation_reports_truncation() {
        let dist = DegreeDistribution::Degenerate { k: 3 };
        let p = params(100, &dist);
        let spec = PopularitySpec::constant(0.1).unwrap();
        let err = evolve_master_equation(&p, &spec, &dist, &[5.0], MasterEquationConfig::new(20))
            .unwrap_err();
        match err {
            Error::Truncation { required_x_max, .. } => assert!(required_x_max > 20),
            other => panic!("unexpected {other:?}"),
        }
        let pareto = DegreeDistribution::ParetoDiscrete { alpha: 4.0, m_min: 1 };
        assert!(evolve_master_equation(&p, &spec, &pareto, &[1.0], MasterEquationConfig::new(20))
            .is_err());
    }

    #[test]
    fn zero_jumps_conserve_mass() {
        let dist = DegreeDistribution::Discrete {
            support: vec![0, 1],
            probs: vec![0.5, 0.5],
        };
        let p = params(10, &dist);
        let spec = PopularitySpec::constant(0.2).unwrap();
        let grid =
            evolve_master_equation(&p, &spec, &dist, &[3.0], MasterEquationConfig::new(60)).unwrap();
        assert!(grid.leak[0] < 1e-10);
        assert!((grid.mean(0) - 0.5 * 6.0).abs() < 1e-8);
    }

    #[test]
    fn ensemble_basics() {
        let dist = DegreeDistribution::Degenerate { k: 4 };
        let p = params(10, &dist);
        let zero = PopularitySpec::constant(0.0).unwrap();
        let stats = ensemble_statistics(&p, &zero, &dist, 5.0, &[1.0, 5.0], 2, 3).unwrap();
        assert_eq!(stats.sample_var, vec![0.0, 0.0]);
        assert!(ensemble_statistics(&p, &zero, &dist, 5.0, &[1.0], 1, 3).is_err());

        let spec = PopularitySpec::constant(0.3).unwrap();
        let stats = ensemble_statistics(&p, &spec, &dist, 5.0, &[2.0, 5.0], 200, 11).unwrap();
        for j in 0..2 {
            let se = (stats.sample_var[j] / 200.0).sqrt();
            assert_eq!(stats.standard_error[j], se);
        }
        let again = ensemble_statistics(&p, &spec, &dist, 5.0, &[2.0, 5.0], 200, 11).unwrap();
        assert_eq!(stats, again);
    }

    #[test]
    fn running_moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..101).map(|i| ((i * 37) % 17) as f64 * 0.5).collect();
        let mut all = RunningMoments::default();
        xs.iter().for_each(|&x| all.push(x));
        let (left, right) = xs.split_at(40);
        let mut a = RunningMoments::default();
        let mut b = RunningMoments::default();
        left.iter().for_each(|&x| a.push(x));
        right.iter().for_each(|&x| b.push(x));
        let merged = b.merge(a);
        assert_eq!(merged.count, all.count);
        assert!((merged.mean - all.mean).abs() < 1e-12);
        assert!((merged.sample_variance() - all.sample_variance()).abs() < 1e-10);
    }
}
