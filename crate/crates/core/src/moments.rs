//! Mean, variance and generating function of the read count X(t).
//!
//! Everything reduces to the cumulative intensity Λ(t) = N∫₀ᵗ w(s)ds:
//! E[X(t)] = ⟨f⟩Λ(t), Var[X(t)] = ⟨f²⟩Λ(t), and M_X(s,t) = exp((M_f(s) − 1)Λ(t)).

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{DegreeDistribution, NetworkParams, PopularitySpec};
use crate::special::{ln_lower_incomplete_gamma, log_gamma, normal_quantile};

/// Below this intensity the Gaussian band is a poor description of X(t).
pub const GAUSSIAN_BAND_MIN_INTENSITY: f64 = 30.0;

/// ln(N·c·b·e^a/a^a), the log prefactor shared by Λ(t) and its limit.
fn gamma_log_prefactor(n: f64, a: f64, b: f64, c: f64) -> f64 {
    n.ln() + c.ln() + b.ln() + a - a * a.ln()
}

/// Λ(t) = N∫₀ᵗ w(s) ds.
pub fn cumulative_intensity(params: &NetworkParams, spec: &PopularitySpec, t: f64) -> Result<f64> {
    params.validate()?;
    spec.validate()?;
    if !(t >= 0.0) || t.is_infinite() {
        return Err(domain(format!("cumulative intensity needs finite t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let n = params.n();
    match spec {
        PopularitySpec::Constant { c } => Ok(n * c * t),
        PopularitySpec::GammaKernel { a, b, c } => {
            if *c == 0.0 {
                return Ok(0.0);
            }
            let ln_gamma = ln_lower_incomplete_gamma(a + 1.0, t / b)?;
            Ok((gamma_log_prefactor(n, *a, *b, *c) + ln_gamma).exp())
        }
        PopularitySpec::Tabulated { times, rates } => Ok(n * trapezoid_from_zero(times, rates, t)?),
    }
}

/// Exact integral of the piecewise-linear rate over [0, t].
fn trapezoid_from_zero(times: &[f64], rates: &[f64], t: f64) -> Result<f64> {
    let (first, last) = (times[0], times[times.len() - 1]);
    if first > 0.0 || t > last {
        return Err(domain(format!(
            "tabulated popularity covers [{first}, {last}], cannot integrate over [0, {t}]"
        )));
    }
    let mut total = 0.0;
    for i in 1..times.len() {
        let (t0, t1) = (times[i - 1], times[i]);
        let lo = t0.max(0.0);
        let hi = t1.min(t);
        if hi <= lo {
            continue;
        }
        let slope = (rates[i] - rates[i - 1]) / (t1 - t0);
        let r_lo = rates[i - 1] + slope * (lo - t0);
        let r_hi = rates[i - 1] + slope * (hi - t0);
        total += 0.5 * (r_lo + r_hi) * (hi - lo);
    }
    Ok(total)
}

/// E[X(t)] = ⟨f⟩Λ(t).
pub fn mean_reads(params: &NetworkParams, spec: &PopularitySpec, t: f64) -> Result<f64> {
    Ok(params.mean_followers * cumulative_intensity(params, spec, t)?)
}

/// Var[X(t)] = ⟨f²⟩Λ(t).
pub fn variance_reads(params: &NetworkParams, spec: &PopularitySpec, t: f64) -> Result<f64> {
    Ok(params.mean_sq_followers * cumulative_intensity(params, spec, t)?)
}

/// Large-time limits of the mean and variance under a gamma kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticMoments {
    pub mean_limit_exact: f64,
    pub mean_limit_stirling: f64,
    pub var_limit_exact: f64,
    pub var_limit_stirling: f64,
}

/// Exact limits N·c·b·e^a/a^a·Γ(a+1)·⟨f^k⟩ and their Stirling forms
/// N·b·c·⟨f^k⟩·√(2π(a+1)).
pub fn asymptotic_moments(params: &NetworkParams, spec: &PopularitySpec) -> Result<AsymptoticMoments> {
    params.validate()?;
    spec.validate()?;
    let PopularitySpec::GammaKernel { a, b, c } = *spec else {
        return Err(Error::UnsupportedVariant {
            operation: "asymptotic_moments",
            variant: spec.variant_name(),
        });
    };
    let n = params.n();
    let intensity_limit = if c == 0.0 {
        0.0
    } else {
        (gamma_log_prefactor(n, a, b, c) + log_gamma(a + 1.0)?).exp()
    };
    let stirling = n * b * c * (2.0 * std::f64::consts::PI * (a + 1.0)).sqrt();
    if !intensity_limit.is_finite() {
        return Err(Error::Numeric("long-run intensity overflows".into()));
    }
    Ok(AsymptoticMoments {
        mean_limit_exact: params.mean_followers * intensity_limit,
        mean_limit_stirling: params.mean_followers * stirling,
        var_limit_exact: params.mean_sq_followers * intensity_limit,
        var_limit_stirling: params.mean_sq_followers * stirling,
    })
}

/// M_X(s, t) = E[e^{sX(t)}] = exp((M_f(s) − 1)·Λ(t)).
///
/// This is the explicit solution of the linear ODE ∂M/∂t = N(M_f(s) − 1)w(t)M
/// with M(s, 0) = 1, using the standard sign convention M_f(s) = E[e^{sY}].
pub fn mgf_value(
    params: &NetworkParams,
    spec: &PopularitySpec,
    dist: &DegreeDistribution,
    s: f64,
    t: f64,
) -> Result<f64> {
    let intensity = cumulative_intensity(params, spec, t)?;
    if intensity == 0.0 || s == 0.0 {
        return Ok(1.0);
    }
    let value = (dist.mgf_minus_one(s)? * intensity).exp();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("mgf overflows at s = {s}, t = {t}")));
    }
    Ok(value)
}

/// Mean curve with a Gaussian band mean ± z·√Var on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCurves {
    pub times: Vec<f64>,
    pub intensity: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub band_low: Vec<f64>,
    pub band_high: Vec<f64>,
    pub level: f64,
    pub z: f64,
    /// The band is approximate; it is only trusted where Λ(t) reaches this value.
    pub gaussian_valid_from_intensity: f64,
}

/// Two-sided standard normal quantile for a central `level`; 0 at level 0.
pub fn two_sided_z(level: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) {
        return Err(domain(format!("confidence level must lie in [0, 1), got {level}")));
    }
    if level == 0.0 {
        return Ok(0.0);
    }
    normal_quantile(0.5 + level / 2.0)
}

pub fn confidence_band(
    params: &NetworkParams,
    spec: &PopularitySpec,
    times: &[f64],
    level: f64,
) -> Result<MomentCurves> {
    let z = two_sided_z(level)?;
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(domain("band times must be ascending"));
    }
    let mut curves = MomentCurves {
        times: times.to_vec(),
        intensity: Vec::with_capacity(times.len()),
        mean: Vec::with_capacity(times.len()),
        variance: Vec::with_capacity(times.len()),
        band_low: Vec::with_capacity(times.len()),
        band_high: Vec::with_capacity(times.len()),
        level,
        z,
        gaussian_valid_from_intensity: GAUSSIAN_BAND_MIN_INTENSITY,
    };
    for &t in times {
        let intensity = cumulative_intensity(params, spec, t)?;
        let mean = params.mean_followers * intensity;
        let variance = params.mean_sq_followers * intensity;
        let half = z * variance.sqrt();
        curves.intensity.push(intensity);
        curves.mean.push(mean);
        curves.variance.push(variance);
        curves.band_low.push((mean - half).max(0.0));
        curves.band_high.push(mean + half);
    }
    Ok(curves)
}
