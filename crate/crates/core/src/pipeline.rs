//! Calibration and validation pipeline over a tweet-record dataset: community
//! summary, empirical popularity, smoothing, kernel fit, empirical reads and
//! the model's confidence band.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fitting::{
    empirical_popularity, initial_guess, lm_fit_gamma, moving_average, FitResult, LmOptions,
};
use crate::model::{DegreeDistribution, NetworkParams, PopularitySpec, TimeSeries, TweetRecord};
use crate::moments::{asymptotic_moments, confidence_band, MomentCurves};
use crate::simulator::{simulate_events, splitmix64};

/// 2020-02-01T00:00:00Z, the absolute origin of synthesized datasets.
pub const SYNTHETIC_EPOCH: f64 = 1_580_515_200.0;

/// N = distinct users; ⟨f⟩, ⟨f²⟩ over one follower count per user (the
/// latest one observed).
pub fn compute_network_params(ds: &Dataset) -> Result<NetworkParams> {
    if ds.is_empty() {
        return Err(Error::EmptyInput("dataset has no records".into()));
    }
    let mut latest: BTreeMap<&str, u64> = BTreeMap::new();
    for r in &ds.records {
        latest.insert(r.user_id.as_str(), r.follower_count);
    }
    let n = latest.len() as f64;
    let (s1, s2) = latest.values().fold((0.0, 0.0), |(s1, s2), &f| {
        let f = f as f64;
        (s1 + f, s2 + f * f)
    });
    NetworkParams::new(latest.len() as u64, s1 / n, (s2 / n).max((s1 / n).powi(2)))
        .map_err(|e| e.context("community summary"))
}

/// Cumulative follower sum at each distinct record time.
pub fn empirical_reads(ds: &Dataset) -> Result<TimeSeries> {
    if ds.is_empty() {
        return Err(Error::EmptyInput("dataset has no records".into()));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut total = 0u64;
    for r in &ds.records {
        total += r.follower_count;
        if times.last() == Some(&r.timestamp) {
            *values.last_mut().unwrap() = total as f64;
        } else {
            times.push(r.timestamp);
            values.push(total as f64);
        }
    }
    TimeSeries::new(times, values)
}

/// Shoot events from the event-level simulator, attributed to users drawn
/// uniformly from `N` synthetic ids. Timestamps stay on the process clock, so
/// t = 0 is the onset of the process rather than the first shoot.
pub fn synthesize_dataset(
    params: &NetworkParams,
    spec: &PopularitySpec,
    dist: &DegreeDistribution,
    horizon: f64,
    seed: u64,
) -> Result<Dataset> {
    let trace = simulate_events(params, spec, dist, horizon, seed)?;
    if trace.is_empty() {
        return Err(Error::EmptyInput(
            "the model produced no shoot events over the horizon".into(),
        ));
    }
    let mut ids = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x05EE_D1D5));
    let width = params.n_users.to_string().len();
    let records = trace
        .event_times
        .iter()
        .zip(&trace.jump_sizes)
        .map(|(&t, &f)| TweetRecord {
            timestamp: t,
            user_id: format!("u{:0width$}", ids.random_range(0..params.n_users)),
            follower_count: f,
        })
        .collect();
    Ok(Dataset {
        records,
        source_path: format!("synthetic:seed={seed}"),
        epoch: SYNTHETIC_EPOCH,
        rejected: Vec::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    /// Popularity bins; defaults to min(200, max(20, ⌈records/50⌉)).
    pub n_bins: Option<usize>,
    pub smooth_k: usize,
    pub level: f64,
    /// Fit the raw popularity series instead of the smoothed one.
    pub fit_raw: bool,
    /// Community size to use instead of the number of distinct active users.
    pub n_users: Option<u64>,
    pub lm: LmOptions,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            n_bins: None,
            smooth_k: 5,
            level: 0.95,
            fit_raw: false,
            n_users: None,
            lm: LmOptions::default(),
        }
    }
}

pub fn default_bins(n_records: usize) -> usize {
    n_records.div_ceil(50).clamp(20, 200)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub source: String,
    pub network: NetworkParams,
    pub active_users: u64,
    pub n_bins: usize,
    pub smooth_k: usize,
    pub fit: FitResult,
    pub converged: bool,
    pub popularity_raw: TimeSeries,
    pub popularity_smooth: TimeSeries,
    pub empirical_reads: TimeSeries,
    pub curves: MomentCurves,
    /// Share of record times at which the empirical reads fall inside the band.
    pub coverage_fraction: f64,
    pub long_run_limit: f64,
    pub long_run_variance: f64,
}

/// Fraction of points with `lo[i] <= x[i] <= hi[i]`.
pub fn coverage(x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let inside = x
        .iter()
        .zip(lo.iter().zip(hi))
        .filter(|(v, (l, h))| **l <= **v && **v <= **h)
        .count();
    inside as f64 / x.len() as f64
}

/// Runs the whole pipeline. A fit that hits the iteration cap still yields a
/// report, with `converged = false`.
pub fn validate(ds: &Dataset, options: &ValidateOptions) -> Result<ValidationReport> {
    let mut network = compute_network_params(ds)?;
    let active_users = network.n_users;
    if let Some(n) = options.n_users {
        network = NetworkParams::new(n, network.mean_followers, network.mean_sq_followers)?;
    }
    let n_bins = options.n_bins.unwrap_or_else(|| default_bins(ds.len()));
    let popularity_raw = empirical_popularity(&ds.records, network.n_users, n_bins)
        .map_err(|e| e.context("empirical popularity"))?;
    let popularity_smooth = moving_average(&popularity_raw, options.smooth_k)?;
    let target = if options.fit_raw { &popularity_raw } else { &popularity_smooth };
    let guess = initial_guess(target).map_err(|e| e.context("initial guess for the popularity fit"))?;
    let fit = lm_fit_gamma(target, guess, options.lm).map_err(|e| e.context("popularity fit"))?;
    let spec = fit.spec();

    let reads = empirical_reads(ds)?;
    let curves = confidence_band(&network, &spec, &reads.times, options.level)?;
    let coverage_fraction = coverage(&reads.values, &curves.band_low, &curves.band_high);
    let limits = asymptotic_moments(&network, &spec)?;

    Ok(ValidationReport {
        source: ds.source_path.clone(),
        network,
        active_users,
        n_bins,
        smooth_k: options.smooth_k,
        converged: fit.converged,
        fit,
        popularity_raw,
        popularity_smooth,
        empirical_reads: reads,
        curves,
        coverage_fraction,
        long_run_limit: limits.mean_limit_exact,
        long_run_variance: limits.var_limit_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[(f64, &str, u64)]) -> Dataset {
        Dataset {
            records: rows
                .iter()
                .map(|&(t, u, f)| TweetRecord {
                    timestamp: t,
                    user_id: u.into(),
                    follower_count: f,
                })
                .collect(),
            source_path: "mem".into(),
            epoch: 0.0,
            rejected: Vec::new(),
        }
    }

    #[test]
    fn network_params_dedup_users() {
        let p = compute_network_params(&ds(&[(0.0, "A", 10), (1.0, "B", 4), (2.0, "A", 10)])).unwrap();
        assert_eq!((p.n_users, p.mean_followers, p.mean_sq_followers), (2, 7.0, 58.0));
        let p = compute_network_params(&ds(&[(0.0, "A", 3)])).unwrap();
        assert_eq!((p.n_users, p.mean_followers, p.mean_sq_followers), (1, 3.0, 9.0));
        let p = compute_network_params(&ds(&[(0.0, "A", 4), (1.0, "A", 6)])).unwrap();
        assert_eq!(p.mean_followers, 6.0);
    }

    #[test]
    fn reads_are_cumulative() {
        let r = empirical_reads(&ds(&[(1.0, "a", 3), (2.0, "b", 5), (3.0, "c", 2)])).unwrap();
        assert_eq!(r.values, vec![3.0, 8.0, 10.0]);
        let r = empirical_reads(&ds(&[(0.0, "a", 7)])).unwrap();
        assert_eq!(r.values, vec![7.0]);
        let r = empirical_reads(&ds(&[(0.0, "a", 0), (1.0, "b", 0)])).unwrap();
        assert_eq!(r.values, vec![0.0, 0.0]);
        let r = empirical_reads(&ds(&[(0.0, "a", 1), (1.0, "b", 2), (1.0, "c", 4)])).unwrap();
        assert_eq!((r.times, r.values), (vec![0.0, 1.0], vec![1.0, 7.0]));
    }

    #[test]
    fn zero_rate_synthesis_is_empty_input() {
        let dist = DegreeDistribution::Degenerate { k: 2 };
        let params = NetworkParams::from_degree(100, &dist).unwrap();
        let spec = PopularitySpec::gamma_kernel(2.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            synthesize_dataset(&params, &spec, &dist, 5.0, 1),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn default_bin_rule() {
        assert_eq!(default_bins(10), 20);
        assert_eq!(default_bins(5000), 100);
        assert_eq!(default_bins(1_000_000), 200);
    }

    #[test]
    fn coverage_counts_inclusive_band() {
        assert_eq!(coverage(&[1.0, 2.0, 5.0], &[1.0, 0.0, 0.0], &[1.0, 3.0, 4.0]), 2.0 / 3.0);
    }
}
