//! Special functions: log-gamma, the (non-regularized) lower incomplete gamma
//! function, Stirling's approximation and the standard normal helpers used for
//! confidence bands.
//!
//! Argument order is `(s, x)` with `s` the shape: γ(s, x) = ∫₀ˣ e^{−u} u^{s−1} du.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Iteration cap for the series and continued-fraction expansions.
pub const MAX_ITERATIONS: usize = 500;
const REL_TOL: f64 = 1e-15;
const TINY: f64 = 1e-300;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Outcome of an incomplete-gamma evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEvalResult {
    pub value: f64,
    pub converged: bool,
    pub terms_used: usize,
}

/// ln Γ(z) for z > 0.
pub fn log_gamma(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(domain(format!("log_gamma requires finite z > 0, got {z}")));
    }
    Ok(ln_gamma_unchecked(z))
}

fn ln_gamma_unchecked(z: f64) -> f64 {
    if z == 1.0 || z == 2.0 {
        return 0.0;
    }
    if z < 0.5 {
        // Reflection: Γ(z)Γ(1−z) = π / sin(πz).
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma_unchecked(1.0 - z);
    }
    let z = z - 1.0;
    let mut sum = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        sum += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + sum.ln()
}

/// Stirling's approximation √(2π/z)·(z/e)^z, evaluated in log space.
pub fn stirling_gamma(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(domain(format!("stirling_gamma requires finite z > 0, got {z}")));
    }
    let ln = ln_stirling_gamma(z);
    if ln > f64::MAX.ln() {
        return Err(Error::Numeric(format!(
            "Stirling approximation overflows at z = {z}"
        )));
    }
    Ok(ln.exp())
}

pub(crate) fn ln_stirling_gamma(z: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI / z).ln() + z * (z.ln() - 1.0)
}

/// Log-space evaluation: (ln γ(s, x), converged, terms used).
fn ln_lower_core(s: f64, x: f64) -> (f64, bool, usize) {
    if x == 0.0 {
        return (f64::NEG_INFINITY, true, 0);
    }
    let ln_prefix = -x + s * x.ln();
    if x < s + 1.0 {
        // γ(s,x) = e^{−x} x^s Σ_{n≥0} x^n / (s(s+1)…(s+n))
        let mut term = 1.0 / s;
        let mut sum = term;
        for n in 1..=MAX_ITERATIONS {
            term *= x / (s + n as f64);
            sum += term;
            if term.abs() < sum.abs() * REL_TOL {
                return (ln_prefix + sum.ln(), true, n + 1);
            }
        }
        (ln_prefix + sum.ln(), false, MAX_ITERATIONS)
    } else {
        // Modified Lentz on the continued fraction for Γ(s,x), then
        // γ = Γ(s) − Γ(s,x) = Γ(s)(1 − Q).
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        let mut converged = false;
        let mut terms = 1;
        for i in 1..=MAX_ITERATIONS {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            terms = i + 1;
            if (delta - 1.0).abs() < REL_TOL {
                converged = true;
                break;
            }
        }
        let ln_gamma_s = ln_gamma_unchecked(s);
        let q = (ln_prefix - ln_gamma_s).exp() * h;
        (ln_gamma_s + (-q).ln_1p(), converged, terms)
    }
}

fn check_incomplete_args(s: f64, x: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(domain(format!("incomplete gamma requires s > 0, got {s}")));
    }
    if !(x >= 0.0) {
        return Err(domain(format!("incomplete gamma requires x >= 0, got {x}")));
    }
    Ok(())
}

/// γ(s, x) together with convergence diagnostics. Only argument errors fail.
pub fn lower_incomplete_gamma_eval(s: f64, x: f64) -> Result<GammaEvalResult> {
    check_incomplete_args(s, x)?;
    if x.is_infinite() {
        return Ok(GammaEvalResult {
            value: ln_gamma_unchecked(s).exp(),
            converged: true,
            terms_used: 0,
        });
    }
    let (ln, converged, terms_used) = ln_lower_core(s, x);
    Ok(GammaEvalResult {
        value: ln.exp(),
        converged,
        terms_used,
    })
}

/// Lower incomplete gamma γ(s, x) = ∫₀ˣ e^{−u} u^{s−1} du.
pub fn lower_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    let r = lower_incomplete_gamma_eval(s, x)?;
    if !r.converged {
        return Err(Error::NonConvergence {
            what: "lower incomplete gamma",
            terms_used: r.terms_used,
        });
    }
    Ok(r.value)
}

/// ln γ(s, x); −∞ at x = 0. Stays finite where γ itself would overflow.
pub fn ln_lower_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    check_incomplete_args(s, x)?;
    if x.is_infinite() {
        return Ok(ln_gamma_unchecked(s));
    }
    let (ln, converged, terms_used) = ln_lower_core(s, x);
    if !converged {
        return Err(Error::NonConvergence {
            what: "lower incomplete gamma",
            terms_used,
        });
    }
    Ok(ln)
}

/// Upper tail of the standard normal, P(Z > x).
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation (relative error
/// below 1.2e-9) polished by one Halley step against `erfc`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("normal quantile needs p in (0, 1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// E[X^j; X > t] for X log-normal(mu, sigma).
pub(crate) fn upper_tail_partial_moment_lognormal(mu: f64, sigma: f64, j: i32, t: f64) -> f64 {
    let jf = j as f64;
    let full = (jf * mu + jf * jf * sigma * sigma / 2.0).exp();
    if t <= 0.0 {
        return full;
    }
    full * normal_sf((t.ln() - mu - jf * sigma * sigma) / sigma)
}
