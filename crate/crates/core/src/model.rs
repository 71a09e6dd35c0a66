//! Domain types shared by every part of the model: tweet records, community
//! summaries, popularity functions and follower-count laws.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::special::{normal_sf, upper_tail_partial_moment_lognormal};

/// One observed shoot: a tweet or retweet carrying the tracked hashtag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    /// Seconds since the dataset epoch.
    pub timestamp: f64,
    pub user_id: String,
    /// Followers of the sender at send time.
    pub follower_count: u64,
}

/// Community summary driving the moment formulas: number of users and the
/// first two moments of the follower-count law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub n_users: u64,
    pub mean_followers: f64,
    pub mean_sq_followers: f64,
}

impl NetworkParams {
    pub fn new(n_users: u64, mean_followers: f64, mean_sq_followers: f64) -> Result<Self> {
        let params = Self {
            n_users,
            mean_followers,
            mean_sq_followers,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn from_degree(n_users: u64, dist: &DegreeDistribution) -> Result<Self> {
        let m = dist.moments()?;
        Self::new(n_users, m.mean, m.mean_sq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::InvalidParameter("n_users must be at least 1".into()));
        }
        if !(self.mean_followers.is_finite() && self.mean_followers > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mean_followers must be positive and finite, got {}",
                self.mean_followers
            )));
        }
        if !self.mean_sq_followers.is_finite() {
            return Err(Error::InvalidParameter("mean_sq_followers must be finite".into()));
        }
        let floor = self.mean_followers * self.mean_followers;
        if self.mean_sq_followers < floor * (1.0 - 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "mean_sq_followers {} is below mean_followers^2 {}",
                self.mean_sq_followers, floor
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> f64 {
        self.n_users as f64
    }

    /// ⟨f²⟩/⟨f⟩, the variance-to-mean ratio of the read count.
    pub fn dispersion(&self) -> f64 {
        self.mean_sq_followers / self.mean_followers
    }
}

/// The hashtag-popularity function w(t): per-user shoot rate at time t.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopularitySpec {
    Constant { c: f64 },
    /// `c · e^a / (a·b)^a · t^a · e^(−t/b)`, peaking at `c` when `t = a·b`.
    GammaKernel { a: f64, b: f64, c: f64 },
    /// Piecewise-linear rate through the knots; no extrapolation.
    Tabulated { times: Vec<f64>, rates: Vec<f64> },
}

/// Closed-form landmarks of the gamma kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub t_max: f64,
    pub w_max: f64,
    pub t_inf: f64,
}

fn check_peak(c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidParameter(format!(
            "peak popularity c must lie in [0, 1], got {c}"
        )));
    }
    Ok(())
}

impl PopularitySpec {
    pub fn constant(c: f64) -> Result<Self> {
        let spec = PopularitySpec::Constant { c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gamma_kernel(a: f64, b: f64, c: f64) -> Result<Self> {
        let spec = PopularitySpec::GammaKernel { a, b, c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tabulated(times: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        let spec = PopularitySpec::Tabulated { times, rates };
        spec.validate()?;
        Ok(spec)
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            PopularitySpec::Constant { .. } => "Constant",
            PopularitySpec::GammaKernel { .. } => "GammaKernel",
            PopularitySpec::Tabulated { .. } => "Tabulated",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PopularitySpec::Constant { c } => check_peak(*c),
            PopularitySpec::GammaKernel { a, b, c } => {
                if !(a.is_finite() && *a > 0.0 && b.is_finite() && *b > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma kernel needs a > 0 and b > 0, got a={a}, b={b}"
                    )));
                }
                check_peak(*c)
            }
            PopularitySpec::Tabulated { times, rates } => {
                if times.len() != rates.len() {
                    return Err(Error::InvalidParameter(
                        "tabulated times and rates differ in length".into(),
                    ));
                }
                if times.len() < 2 {
                    return Err(Error::InvalidParameter(
                        "tabulated popularity needs at least two knots".into(),
                    ));
                }
                if times.iter().any(|t| !t.is_finite()) {
                    return Err(Error::InvalidParameter("tabulated times must be finite".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidParameter(
                        "tabulated times must be strictly ascending".into(),
                    ));
                }
                if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                    return Err(Error::InvalidParameter(
                        "tabulated rates must be finite and non-negative".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// w(t). Fails for negative times and outside a tabulated range.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(domain(format!("popularity evaluated at t = {t} < 0")));
        }
        match self {
            PopularitySpec::Constant { c } => Ok(*c),
            PopularitySpec::GammaKernel { a, b, c } => Ok(gamma_kernel_value(*a, *b, *c, t)),
            PopularitySpec::Tabulated { times, rates } => interpolate(times, rates, t),
        }
    }

    pub fn landmarks(&self) -> Result<Landmarks> {
        match self {
            PopularitySpec::GammaKernel { a, b, c } => Ok(Landmarks {
                t_max: a * b,
                w_max: *c,
                t_inf: a * b + b * a.sqrt(),
            }),
            other => Err(Error::UnsupportedVariant {
                operation: "popularity_landmarks",
                variant: other.variant_name(),
            }),
        }
    }

    /// Supremum of w over [0, horizon]; used as the thinning majorant.
    pub fn peak_rate(&self, horizon: f64) -> Result<f64> {
        match self {
            PopularitySpec::Constant { c } | PopularitySpec::GammaKernel { c, .. } => Ok(*c),
            PopularitySpec::Tabulated { times, rates } => {
                let (first, last) = (times[0], times[times.len() - 1]);
                if first > 0.0 || last < horizon {
                    return Err(domain(format!(
                        "tabulated popularity covers [{first}, {last}] but [0, {horizon}] is required"
                    )));
                }
                let mut peak = 0.0f64;
                for (i, &t) in times.iter().enumerate() {
                    if t >= 0.0 && t <= horizon {
                        peak = peak.max(rates[i]);
                    }
                }
                // Interpolated endpoints bound the rate inside partial segments.
                peak = peak.max(interpolate(times, rates, 0.0)?);
                peak = peak.max(interpolate(times, rates, horizon)?);
                Ok(peak)
            }
        }
    }
}

pub(crate) fn gamma_kernel_value(a: f64, b: f64, c: f64, t: f64) -> f64 {
    if t == 0.0 || c == 0.0 {
        return 0.0;
    }
    let log_w = c.ln() + a + a * t.ln() - a * (a * b).ln() - t / b;
    log_w.exp()
}

fn interpolate(times: &[f64], rates: &[f64], t: f64) -> Result<f64> {
    let (first, last) = (times[0], times[times.len() - 1]);
    if t < first || t > last {
        return Err(domain(format!(
            "t = {t} lies outside the tabulated range [{first}, {last}]"
        )));
    }
    let idx = times.partition_point(|&x| x <= t);
    if idx == times.len() {
        return Ok(rates[rates.len() - 1]);
    }
    let (t0, t1) = (times[idx - 1], times[idx]);
    let (r0, r1) = (rates[idx - 1], rates[idx]);
    Ok(r0 + (r1 - r0) * (t - t0) / (t1 - t0))
}

/// First two raw moments of a follower-count law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeMoments {
    pub mean: f64,
    pub mean_sq: f64,
}

/// Out-degree (follower-count) law over the non-negative integers.
///
/// The parametric variants are continuous laws discretized by rounding to the
/// nearest integer, so `P(k) = F(k + ½) − F(k − ½)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegreeDistribution {
    Degenerate { k: u64 },
    Discrete { support: Vec<u64>, probs: Vec<f64> },
    EmpiricalSample { counts: Vec<u64> },
    LogNormalDiscretized { mu: f64, sigma: f64 },
    ParetoDiscrete { alpha: f64, m_min: u64 },
}

/// Terms summed explicitly for the unbounded parametric laws before the
/// continuous tail correction takes over.
const PARAMETRIC_TERMS: u64 = 2_000_000;

impl DegreeDistribution {
    pub fn variant_name(&self) -> &'static str {
        match self {
            DegreeDistribution::Degenerate { .. } => "Degenerate",
            DegreeDistribution::Discrete { .. } => "Discrete",
            DegreeDistribution::EmpiricalSample { .. } => "EmpiricalSample",
            DegreeDistribution::LogNormalDiscretized { .. } => "LogNormalDiscretized",
            DegreeDistribution::ParetoDiscrete { .. } => "ParetoDiscrete",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DegreeDistribution::Degenerate { .. } => Ok(()),
            DegreeDistribution::Discrete { support, probs } => {
                if support.is_empty() || support.len() != probs.len() {
                    return Err(Error::InvalidParameter(
                        "discrete law needs equal-length, non-empty support and probs".into(),
                    ));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::InvalidParameter(
                        "discrete probabilities must be finite and non-negative".into(),
                    ));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "discrete probabilities sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
            DegreeDistribution::EmpiricalSample { counts } => {
                if counts.is_empty() {
                    return Err(Error::InvalidParameter("empirical sample is empty".into()));
                }
                Ok(())
            }
            DegreeDistribution::LogNormalDiscretized { mu, sigma } => {
                if !(mu.is_finite() && sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "log-normal law needs finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
                    )));
                }
                Ok(())
            }
            DegreeDistribution::ParetoDiscrete { alpha, m_min } => {
                if !(alpha.is_finite() && *alpha > 1.0) || *m_min == 0 {
                    return Err(Error::InvalidParameter(format!(
                        "Pareto law needs alpha > 1 and m_min >= 1, got alpha={alpha}, m_min={m_min}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Exact moments for the finite variants, summed-to-tolerance moments for
    /// the parametric ones.
    pub fn moments(&self) -> Result<DegreeMoments> {
        self.validate()?;
        let (mean, mean_sq) = match self {
            DegreeDistribution::Degenerate { k } => {
                let k = *k as f64;
                (k, k * k)
            }
            DegreeDistribution::Discrete { support, probs } => {
                support.iter().zip(probs).fold((0.0, 0.0), |(m1, m2), (&k, &p)| {
                    let k = k as f64;
                    (m1 + p * k, m2 + p * k * k)
                })
            }
            DegreeDistribution::EmpiricalSample { counts } => {
                let n = counts.len() as f64;
                let (s1, s2) = counts.iter().fold((0.0, 0.0), |(s1, s2), &k| {
                    let k = k as f64;
                    (s1 + k, s2 + k * k)
                });
                (s1 / n, s2 / n)
            }
            DegreeDistribution::LogNormalDiscretized { .. } => {
                (self.parametric_moment(1)?, self.parametric_moment(2)?)
            }
            DegreeDistribution::ParetoDiscrete { alpha, .. } => {
                if *alpha <= 3.0 {
                    return Err(Error::DivergentMoment {
                        moment: "mean_sq",
                        detail: format!("Pareto tail exponent alpha = {alpha} <= 3"),
                    });
                }
                (self.parametric_moment(1)?, self.parametric_moment(2)?)
            }
        };
        Ok(DegreeMoments {
            mean,
            // Jensen holds exactly; clamp the rounding noise.
            mean_sq: mean_sq.max(mean * mean),
        })
    }

    fn parametric_survival(&self, x: f64) -> f64 {
        match self {
            DegreeDistribution::LogNormalDiscretized { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    normal_sf((x.ln() - mu) / sigma)
                }
            }
            DegreeDistribution::ParetoDiscrete { alpha, m_min } => {
                let m = *m_min as f64;
                if x <= m {
                    1.0
                } else {
                    (m / x).powf(*alpha)
                }
            }
            _ => unreachable!("only parametric laws have a continuous survival function"),
        }
    }

    /// E[X^j; X > t] for the underlying continuous law.
    fn parametric_tail_moment(&self, j: i32, t: f64) -> f64 {
        match self {
            DegreeDistribution::LogNormalDiscretized { mu, sigma } => {
                upper_tail_partial_moment_lognormal(*mu, *sigma, j, t)
            }
            DegreeDistribution::ParetoDiscrete { alpha, m_min } => {
                let m = (*m_min as f64).max(0.0);
                let t = t.max(m);
                alpha * m.powf(*alpha) * t.powf(j as f64 - alpha) / (alpha - j as f64)
            }
            _ => unreachable!(),
        }
    }

    /// Upper summation index for a parametric law.
    fn parametric_cutoff(&self) -> (u64, u64) {
        match self {
            DegreeDistribution::LogNormalDiscretized { mu, sigma } => {
                let hi = (mu + 10.0 * sigma).exp().ceil();
                let hi = if hi.is_finite() { hi as u64 } else { u64::MAX };
                (0, hi.clamp(1, PARAMETRIC_TERMS))
            }
            DegreeDistribution::ParetoDiscrete { m_min, .. } => {
                (*m_min, m_min.saturating_add(PARAMETRIC_TERMS))
            }
            _ => unreachable!(),
        }
    }

    fn parametric_pmf(&self, k: u64) -> f64 {
        let k = k as f64;
        (self.parametric_survival(k - 0.5) - self.parametric_survival(k + 0.5)).max(0.0)
    }

    fn parametric_moment(&self, j: i32) -> Result<f64> {
        let (lo, hi) = self.parametric_cutoff();
        let mut total = 0.0;
        for k in lo..=hi {
            let p = self.parametric_pmf(k);
            total += p * (k as f64).powi(j);
        }
        let tail = self.parametric_tail_moment(j, hi as f64 + 0.5);
        let value = total + tail;
        if !value.is_finite() {
            return Err(Error::DivergentMoment {
                moment: if j == 1 { "mean" } else { "mean_sq" },
                detail: format!("{} parameters overflow", self.variant_name()),
            });
        }
        Ok(value)
    }

    /// M_f(s) − 1 = E[e^{sY}] − 1, evaluated with `expm1` so that finite
    /// differences around s = 0 keep their precision.
    pub fn mgf_minus_one(&self, s: f64) -> Result<f64> {
        self.validate()?;
        if !s.is_finite() {
            return Err(domain("mgf argument must be finite"));
        }
        let value = match self {
            DegreeDistribution::Degenerate { k } => (s * *k as f64).exp_m1(),
            DegreeDistribution::Discrete { support, probs } => support
                .iter()
                .zip(probs)
                .map(|(&k, &p)| p * (s * k as f64).exp_m1())
                .sum(),
            DegreeDistribution::EmpiricalSample { counts } => {
                counts.iter().map(|&k| (s * k as f64).exp_m1()).sum::<f64>()
                    / counts.len() as f64
            }
            _ => {
                if s > 0.0 {
                    return Err(Error::DivergentMoment {
                        moment: "mgf",
                        detail: format!("{} at s = {s} > 0", self.variant_name()),
                    });
                }
                let (lo, hi) = self.parametric_cutoff();
                let mut total = 0.0;
                for k in lo..=hi {
                    total += self.parametric_pmf(k) * (s * k as f64).exp_m1();
                }
                let edge = hi as f64 + 0.5;
                let tail_mass = self.parametric_survival(edge);
                if tail_mass > 0.0 {
                    let conditional_mean = self.parametric_tail_moment(1, edge) / tail_mass;
                    total += tail_mass * (s * conditional_mean).exp_m1();
                }
                total
            }
        };
        if !value.is_finite() {
            return Err(Error::Numeric(format!("follower mgf overflows at s = {s}")));
        }
        Ok(value)
    }

    /// Draws one follower count.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            DegreeDistribution::Degenerate { k } => *k,
            DegreeDistribution::Discrete { support, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut last_positive = 0;
                for (i, &p) in probs.iter().enumerate() {
                    if p > 0.0 {
                        last_positive = i;
                        acc += p;
                        if u < acc {
                            return support[i];
                        }
                    }
                }
                support[last_positive]
            }
            DegreeDistribution::EmpiricalSample { counts } => {
                counts[rng.random_range(0..counts.len())]
            }
            DegreeDistribution::LogNormalDiscretized { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                round_to_count((mu + sigma * z).exp())
            }
            DegreeDistribution::ParetoDiscrete { alpha, m_min } => {
                let u = 1.0 - rng.random::<f64>();
                round_to_count(*m_min as f64 * u.powf(-1.0 / alpha))
            }
        }
    }

    /// Probability vector indexed by follower count, for the finite variants.
    pub fn finite_pmf(&self) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            DegreeDistribution::Degenerate { k } => {
                let mut pmf = vec![0.0; *k as usize + 1];
                pmf[*k as usize] = 1.0;
                Ok(pmf)
            }
            DegreeDistribution::Discrete { support, probs } => {
                let max = *support.iter().max().expect("validated non-empty") as usize;
                let mut pmf = vec![0.0; max + 1];
                for (&k, &p) in support.iter().zip(probs) {
                    pmf[k as usize] += p;
                }
                Ok(pmf)
            }
            DegreeDistribution::EmpiricalSample { counts } => {
                let max = *counts.iter().max().expect("validated non-empty") as usize;
                let mut pmf = vec![0.0; max + 1];
                let w = 1.0 / counts.len() as f64;
                for &k in counts {
                    pmf[k as usize] += w;
                }
                Ok(pmf)
            }
            other => Err(Error::UnsupportedVariant {
                operation: "finite_pmf",
                variant: other.variant_name(),
            }),
        }
    }

    /// Whether `k` can be drawn from this law.
    pub fn in_support(&self, k: u64) -> bool {
        match self {
            DegreeDistribution::Degenerate { k: point } => k == *point,
            DegreeDistribution::Discrete { support, probs } => support
                .iter()
                .zip(probs)
                .any(|(&s, &p)| s == k && p > 0.0),
            DegreeDistribution::EmpiricalSample { counts } => counts.contains(&k),
            DegreeDistribution::LogNormalDiscretized { .. } => true,
            DegreeDistribution::ParetoDiscrete { m_min, .. } => k >= *m_min,
        }
    }
}

fn round_to_count(x: f64) -> u64 {
    let r = x.round();
    if r >= u64::MAX as f64 {
        u64::MAX
    } else {
        r as u64
    }
}

/// A time-indexed series with strictly ascending times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "time series has {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "time series times must be strictly ascending".into(),
            ));
        }
        Ok(Self { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}
