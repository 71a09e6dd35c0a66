mod common;

use hashpop::model::{DegreeDistribution, NetworkParams, PopularitySpec};
use hashpop::moments::confidence_band;
use hashpop::simulator::{
    evolve_master_equation, sample_reads, simulate_events, simulate_micro, summarize, Generator,
    MasterEquationConfig, RunningMoments,
};
use hashpop::stats::ks_two_sample;
use proptest::prelude::*;

fn unit_jumps() -> DegreeDistribution {
    DegreeDistribution::Degenerate { k: 1 }
}

/// Pearson statistic of observed counts against pmf bins, pooling the tail.
fn chi_square(observed: &[u64], pmf: &[f64], n: usize) -> (f64, usize) {
    let mut stat = 0.0;
    let mut bins = 0;
    let mut obs_tail = 0u64;
    let mut exp_tail = 0.0;
    for (k, p) in pmf.iter().enumerate() {
        let expected = p * n as f64;
        let o = observed.get(k).copied().unwrap_or(0);
        if expected >= 5.0 {
            stat += (o as f64 - expected).powi(2) / expected;
            bins += 1;
        } else {
            obs_tail += o;
            exp_tail += expected;
        }
    }
    let rest: u64 = observed.iter().skip(pmf.len()).sum();
    obs_tail += rest;
    exp_tail += n as f64 * (1.0 - pmf.iter().sum::<f64>());
    if exp_tail > 0.0 {
        stat += (obs_tail as f64 - exp_tail).powi(2) / exp_tail;
        bins += 1;
    }
    (stat, bins - 1)
}

#[test]
fn event_counts_are_poisson() {
    let params = NetworkParams::from_degree(20, &unit_jumps()).unwrap();
    let spec = PopularitySpec::constant(0.2).unwrap();
    let samples = sample_reads(&params, &spec, &unit_jumps(), 2.0, &[2.0], 20_000, 11, Generator::Events).unwrap();
    let mut hist = vec![0u64; 60];
    for row in &samples {
        hist[row[0] as usize] += 1;
    }
    let (stat, dof) = chi_square(&hist, &common::poisson_pmf(8.0, 60), samples.len());
    // 99.9% point of χ² with about 15 degrees of freedom is below 40.
    assert!(dof >= 8 && stat < 40.0, "chi2 {stat} on {dof} dof");
}

#[test]
fn constant_rate_gaps_are_exponential() {
    let params = NetworkParams::from_degree(10, &unit_jumps()).unwrap();
    let spec = PopularitySpec::constant(0.3).unwrap();
    let trace = simulate_events(&params, &spec, &unit_jumps(), 3000.0, 5).unwrap();
    let mut gaps = Vec::with_capacity(trace.len());
    let mut last = 0.0;
    for &t in &trace.event_times {
        gaps.push(t - last);
        last = t;
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;
    let rate = 3.0;
    let d = gaps
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let cdf = 1.0 - (-rate * g).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0f64, f64::max);
    // One-sample KS critical value at 0.1%: 1.95/√n.
    assert!(d < 1.95 / n.sqrt(), "KS {d} with n = {n}");
}

#[test]
fn micro_with_two_users_is_poisson() {
    let params = NetworkParams::from_degree(2, &unit_jumps()).unwrap();
    let spec = PopularitySpec::constant(0.75).unwrap();
    let samples = sample_reads(
        &params,
        &spec,
        &unit_jumps(),
        4.0,
        &[4.0],
        20_000,
        12,
        Generator::Micro { dt: 1e-3 },
    )
    .unwrap();
    let mut hist = vec![0u64; 40];
    for row in &samples {
        hist[row[0] as usize] += 1;
    }
    let (stat, dof) = chi_square(&hist, &common::poisson_pmf(6.0, 40), samples.len());
    assert!(dof >= 6 && stat < 40.0, "chi2 {stat} on {dof} dof");
}

#[test]
fn micro_rejects_oversized_step() {
    let params = NetworkParams::from_degree(2, &unit_jumps()).unwrap();
    let spec = PopularitySpec::constant(0.5).unwrap();
    assert!(simulate_micro(&params, &spec, &unit_jumps(), 3.0, 10.0, 1).is_err());
}

#[test]
fn band_covers_about_its_level() {
    let dist = DegreeDistribution::Discrete {
        support: vec![1, 5, 20],
        probs: vec![0.6, 0.3, 0.1],
    };
    let params = NetworkParams::from_degree(400, &dist).unwrap();
    let spec = PopularitySpec::gamma_kernel(2.0, 1.0, 0.2).unwrap();
    let t = 4.0;
    let band = confidence_band(&params, &spec, &[t], 0.95).unwrap();
    assert!(band.intensity[0] > band.gaussian_valid_from_intensity);
    let samples = sample_reads(&params, &spec, &dist, t, &[t], 5000, 13, Generator::Events).unwrap();
    let inside = samples
        .iter()
        .filter(|r| {
            let x = r[0] as f64;
            band.band_low[0] <= x && x <= band.band_high[0]
        })
        .count() as f64
        / samples.len() as f64;
    assert!((inside - 0.95).abs() <= 0.02, "coverage {inside}");
}

#[test]
fn master_equation_matches_compound_poisson_mixture() {
    // With jumps in {0, 2} the pmf is Poisson(Λ·p₂) mapped to even counts.
    let dist = DegreeDistribution::Discrete {
        support: vec![0, 2],
        probs: vec![0.25, 0.75],
    };
    let params = NetworkParams::from_degree(8, &dist).unwrap();
    let spec = PopularitySpec::constant(0.5).unwrap();
    let grid = evolve_master_equation(&params, &spec, &dist, &[0.0, 3.0], MasterEquationConfig::new(120)).unwrap();
    let poisson = common::poisson_pmf(8.0 * 0.5 * 3.0 * 0.75, 61);
    for (x, p) in grid.pmf[1].iter().enumerate() {
        let exact = if x % 2 == 0 { poisson[x / 2] } else { 0.0 };
        assert!((p - exact).abs() < 1e-8, "x={x}: {p} vs {exact}");
    }
}

#[test]
fn master_equation_reports_truncation() {
    let params = NetworkParams::from_degree(100, &unit_jumps()).unwrap();
    let spec = PopularitySpec::constant(1.0).unwrap();
    let err = evolve_master_equation(&params, &spec, &unit_jumps(), &[0.0, 1.0], MasterEquationConfig::new(50)).unwrap_err();
    assert!(err.to_string().contains("x_max"), "{err}");
}

#[test]
fn ensembles_are_reproducible_and_seed_sensitive() {
    let dist = DegreeDistribution::Degenerate { k: 3 };
    let params = NetworkParams::from_degree(30, &dist).unwrap();
    let spec = PopularitySpec::gamma_kernel(2.0, 1.0, 0.1).unwrap();
    let grid = [1.0, 2.0, 5.0];
    let a = sample_reads(&params, &spec, &dist, 5.0, &grid, 64, 99, Generator::Events).unwrap();
    let b = sample_reads(&params, &spec, &dist, 5.0, &grid, 64, 99, Generator::Events).unwrap();
    let c = sample_reads(&params, &spec, &dist, 5.0, &grid, 64, 100, Generator::Events).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let micro = sample_reads(&params, &spec, &dist, 5.0, &grid, 64, 99, Generator::Micro { dt: 0.01 }).unwrap();
    assert_eq!(micro, sample_reads(&params, &spec, &dist, 5.0, &grid, 64, 99, Generator::Micro { dt: 0.01 }).unwrap());
    assert_eq!(summarize(&grid, &a), summarize(&grid, &b));
}

#[test]
fn micro_and_event_agree_in_distribution() {
    let dist = DegreeDistribution::Discrete {
        support: vec![1, 2, 3],
        probs: vec![0.5, 0.3, 0.2],
    };
    let params = NetworkParams::from_degree(50, &dist).unwrap();
    let spec = PopularitySpec::gamma_kernel(2.0, 1.0, 0.1).unwrap();
    let ev = sample_reads(&params, &spec, &dist, 5.0, &[5.0], 4000, 21, Generator::Events).unwrap();
    let mi = sample_reads(&params, &spec, &dist, 5.0, &[5.0], 4000, 22, Generator::Micro { dt: 1e-3 }).unwrap();
    let ev: Vec<f64> = ev.iter().map(|r| r[0] as f64).collect();
    let mi: Vec<f64> = mi.iter().map(|r| r[0] as f64).collect();
    // Two-sample KS critical value at 0.1% for n = m = 4000.
    assert!(ks_two_sample(&ev, &mi) < 1.95 * (2.0f64 / 4000.0).sqrt());
}

proptest! {
    #[test]
    fn trajectories_are_nondecreasing_and_in_support(seed in any::<u64>(), c in 0.01f64..0.5) {
        let dist = DegreeDistribution::Discrete { support: vec![2, 7], probs: vec![0.4, 0.6] };
        let params = NetworkParams::from_degree(40, &dist).unwrap();
        let spec = PopularitySpec::gamma_kernel(1.5, 2.0, c).unwrap();
        let trace = simulate_events(&params, &spec, &dist, 8.0, seed).unwrap();
        prop_assert!(trace.event_times.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(trace.event_times.iter().all(|&t| t > 0.0 && t <= 8.0));
        prop_assert!(trace.jump_sizes.iter().all(|&j| j == 2 || j == 7));
        let path = trace.trajectory();
        prop_assert!(path.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn running_moments_merge_in_any_split(xs in prop::collection::vec(-1e3f64..1e3, 2..200), cut in 0usize..200) {
        let cut = cut.min(xs.len());
        let mut whole = RunningMoments::default();
        let mut left = RunningMoments::default();
        let mut right = RunningMoments::default();
        for (i, &x) in xs.iter().enumerate() {
            whole.push(x);
            if i < cut { left.push(x) } else { right.push(x) }
        }
        let merged = left.merge(right);
        prop_assert_eq!(merged.count, whole.count);
        prop_assert!((merged.mean - whole.mean).abs() <= 1e-9 * (1.0 + whole.mean.abs()));
        prop_assert!((merged.sample_variance() - whole.sample_variance()).abs() <= 1e-8 * (1.0 + whole.sample_variance()));
    }

    #[test]
    fn master_equation_conserves_mass(c in 0.01f64..0.5, k in 0u64..4) {
        let dist = DegreeDistribution::Discrete { support: vec![k, k + 1], probs: vec![0.5, 0.5] };
        let params = NetworkParams::from_degree(10, &dist).unwrap();
        let spec = PopularitySpec::constant(c).unwrap();
        let grid = evolve_master_equation(&params, &spec, &dist, &[0.0, 1.0, 2.0], MasterEquationConfig::new(150)).unwrap();
        for row in 0..3 {
            let total: f64 = grid.pmf[row].iter().sum::<f64>() + grid.leak[row];
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(grid.pmf[row].iter().all(|&p| p >= 0.0));
        }
    }
}
