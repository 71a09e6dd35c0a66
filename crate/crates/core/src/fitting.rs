//! Empirical popularity extraction, smoothing and Levenberg–Marquardt fitting
//! of the gamma kernel.

use std::collections::HashSet;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{gamma_kernel_value, PopularitySpec, TimeSeries, TweetRecord};

/// Fraction of the `n_users` community active in each of `n_bins` equal bins
/// over [0, last record time], per unit time. Times are bin midpoints.
pub fn empirical_popularity(records: &[TweetRecord], n_users: u64, n_bins: usize) -> Result<TimeSeries> {
    let horizon = records
        .iter()
        .map(|r| r.timestamp)
        .fold(f64::NEG_INFINITY, f64::max);
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to bin".into()));
    }
    empirical_popularity_over(records, n_users, n_bins, horizon)
}

/// As [`empirical_popularity`] but over an explicit window [0, horizon].
pub fn empirical_popularity_over(
    records: &[TweetRecord],
    n_users: u64,
    n_bins: usize,
    horizon: f64,
) -> Result<TimeSeries> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to bin".into()));
    }
    if n_bins == 0 || n_users == 0 {
        return Err(domain("n_bins and n_users must be at least 1"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(domain(format!(
            "observation window [0, {horizon}] has no length"
        )));
    }
    let width = horizon / n_bins as f64;
    let mut active: Vec<HashSet<&str>> = vec![HashSet::new(); n_bins];
    for r in records {
        if !(r.timestamp >= 0.0 && r.timestamp <= horizon) {
            return Err(domain(format!(
                "record at t = {} lies outside [0, {horizon}]",
                r.timestamp
            )));
        }
        let bin = ((r.timestamp / width) as usize).min(n_bins - 1);
        active[bin].insert(r.user_id.as_str());
    }
    let scale = 1.0 / (n_users as f64 * width);
    let times = (0..n_bins).map(|i| (i as f64 + 0.5) * width).collect();
    let values = active.iter().map(|users| users.len() as f64 * scale).collect();
    TimeSeries::new(times, values)
}

/// Centered k-point moving average; near the ends the window is clipped to
/// the available points.
pub fn moving_average(series: &TimeSeries, k: usize) -> Result<TimeSeries> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(domain(format!("moving-average window must be odd and positive, got {k}")));
    }
    let half = k / 2;
    let v = &series.values;
    let n = v.len();
    let smoothed = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    Ok(TimeSeries {
        times: series.times.clone(),
        values: smoothed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
}

/// Starting point for the kernel fit from the peak and its half-maximum width:
/// c0 = peak value, a0·b0 = peak time, b0 = width²/(4·t_peak) floored at t_peak/10.
pub fn initial_guess(series: &TimeSeries) -> Result<InitialGuess> {
    let (peak_idx, &c0) = series
        .values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &f64)>, (i, v)| match best {
            Some((_, b)) if *b >= *v => best,
            _ => Some((i, v)),
        })
        .ok_or_else(|| Error::NoSignal("series is empty".into()))?;
    if !(c0 > 0.0) {
        return Err(Error::NoSignal("popularity series has no positive value".into()));
    }
    let t = &series.times;
    let v = &series.values;
    let mut t_peak = t[peak_idx];
    if t_peak <= 0.0 {
        t_peak = t
            .iter()
            .copied()
            .find(|&x| x > 0.0)
            .ok_or_else(|| Error::NoSignal("no positive time in series".into()))?;
    }

    let half = c0 / 2.0;
    let mut left = t[0];
    for i in (0..peak_idx).rev() {
        if v[i] < half {
            left = t[i] + (half - v[i]) / (v[i + 1] - v[i]) * (t[i + 1] - t[i]);
            break;
        }
    }
    let mut right = t[t.len() - 1];
    for i in peak_idx + 1..v.len() {
        if v[i] < half {
            right = t[i - 1] + (v[i - 1] - half) / (v[i - 1] - v[i]) * (t[i] - t[i - 1]);
            break;
        }
    }
    let width = (right - left).max(0.0);
    let b0 = (width * width / (4.0 * t_peak)).max(t_peak / 10.0);
    Ok(InitialGuess {
        a0: t_peak / b0,
        b0,
        c0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Stop when an accepted step lowers the objective by less than this fraction.
    pub relative_tolerance: f64,
    /// Stop when ‖∇‖∞ of the objective, relative to Σv², falls below this.
    pub gradient_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_damping: 1e-3,
            relative_tolerance: 1e-10,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Linearized covariance of (a, b, c); absent when JᵀJ is singular or
    /// there are no spare degrees of freedom.
    pub covariance: Option<[[f64; 3]; 3]>,
    pub rmse: f64,
    /// Absent when the series has zero variance.
    pub r_squared: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squared residuals at the start and after each accepted step.
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn spec(&self) -> PopularitySpec {
        PopularitySpec::GammaKernel {
            a: self.a,
            b: self.b,
            c: self.c,
        }
    }

    pub fn predict(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        gamma_kernel_value(self.a, self.b, self.c, t)
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Unconstrained coordinates (ln a, ln b, logit c) → (a, b, c).
fn unpack(theta: &Vector3<f64>) -> (f64, f64, f64) {
    (theta[0].exp(), theta[1].exp(), logistic(theta[2]))
}

fn residuals(series: &TimeSeries, theta: &Vector3<f64>, out: &mut [f64]) -> f64 {
    let (a, b, c) = unpack(theta);
    let mut sse = 0.0;
    for ((r, &t), &v) in out.iter_mut().zip(&series.times).zip(&series.values) {
        let w = if t <= 0.0 { 0.0 } else { gamma_kernel_value(a, b, c, t) };
        *r = w - v;
        sse += *r * *r;
    }
    sse
}

/// Forward-difference Jacobian, one column per coordinate.
fn jacobian(series: &TimeSeries, theta: &Vector3<f64>, base: &[f64]) -> Vec<[f64; 3]> {
    let n = base.len();
    let mut jac = vec![[0.0; 3]; n];
    let mut shifted = vec![0.0; n];
    for j in 0..3 {
        let h = 1e-6 * (1.0 + theta[j].abs());
        let mut probe = *theta;
        probe[j] += h;
        residuals(series, &probe, &mut shifted);
        for i in 0..n {
            jac[i][j] = (shifted[i] - base[i]) / h;
        }
    }
    jac
}

fn normal_equations(jac: &[[f64; 3]], r: &[f64]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut a = Matrix3::zeros();
    let mut g = Vector3::zeros();
    for (row, &ri) in jac.iter().zip(r) {
        for p in 0..3 {
            g[p] += row[p] * ri;
            for q in 0..3 {
                a[(p, q)] += row[p] * row[q];
            }
        }
    }
    (a, g)
}

/// Fits w(t) = c·e^a/(ab)^a·t^a·e^{−t/b} to the series by Levenberg–Marquardt
/// in the coordinates (ln a, ln b, logit c), which keeps a, b > 0 and
/// c ∈ (0, 1) without clipping.
pub fn lm_fit_gamma(series: &TimeSeries, guess: InitialGuess, options: LmOptions) -> Result<FitResult> {
    let n = series.len();
    if n < 4 {
        return Err(domain(format!("a three-parameter fit needs at least 4 points, got {n}")));
    }
    if !(guess.a0 > 0.0 && guess.b0 > 0.0 && guess.c0 > 0.0)
        || !(guess.a0.is_finite() && guess.b0.is_finite() && guess.c0.is_finite())
    {
        return Err(domain(format!("invalid initial guess {guess:?}")));
    }
    let c0 = guess.c0.clamp(1e-12, 1.0 - 1e-9);
    let mut theta = Vector3::new(guess.a0.ln(), guess.b0.ln(), (c0 / (1.0 - c0)).ln());

    let scale = series.values.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; n];
    let mut trial_r = vec![0.0; n];
    let mut sse = residuals(series, &theta, &mut r);
    if !sse.is_finite() {
        return Err(Error::Numeric("objective is not finite at the initial guess".into()));
    }
    let mut trace = vec![sse];
    let mut lambda = options.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut system: Option<(Matrix3<f64>, Vector3<f64>)> = None;

    while iterations < options.max_iterations {
        let (a_mat, g) = match system {
            Some(s) => s,
            None => {
                let jac = jacobian(series, &theta, &r);
                let s = normal_equations(&jac, &r);
                system = Some(s);
                s
            }
        };
        if 2.0 * g.amax() / scale < options.gradient_tolerance {
            converged = true;
            break;
        }
        let diag = a_mat.diagonal();
        if diag.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::RankDeficient(
                "a fitted parameter has no influence on the residuals".into(),
            ));
        }
        iterations += 1;
        let damped = a_mat + Matrix3::from_diagonal(&(diag * lambda));
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let step = chol.solve(&(-g));
        let trial = theta + step;
        let trial_sse = residuals(series, &trial, &mut trial_r);
        if trial_sse.is_finite() && trial_sse < sse {
            let decrease = (sse - trial_sse) / sse;
            theta = trial;
            sse = trial_sse;
            std::mem::swap(&mut r, &mut trial_r);
            trace.push(sse);
            system = None;
            lambda = (lambda / 10.0).max(1e-15);
            if decrease < options.relative_tolerance || sse == 0.0 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // No step of any length lowers the objective: the achievable
                // relative decrease is zero.
                converged = true;
                break;
            }
        }
    }

    let (a, b, c) = unpack(&theta);
    let covariance = covariance_abc(series, &theta, &r, sse, (a, b, c));
    let predicted: Vec<f64> = r.iter().zip(&series.values).map(|(ri, v)| ri + v).collect();
    let quality = fit_quality(&series.values, &predicted);
    let (rmse, r_squared) = match quality {
        Ok(q) => (q.rmse, Some(q.r_squared)),
        Err(_) => ((sse / n as f64).sqrt(), None),
    };
    Ok(FitResult {
        a,
        b,
        c,
        covariance,
        rmse,
        r_squared,
        iterations,
        converged,
        objective_trace: trace,
    })
}

fn covariance_abc(
    series: &TimeSeries,
    theta: &Vector3<f64>,
    r: &[f64],
    sse: f64,
    (a, b, c): (f64, f64, f64),
) -> Option<[[f64; 3]; 3]> {
    let n = r.len();
    if n <= 3 {
        return None;
    }
    let chain = [a, b, c * (1.0 - c)];
    let jac: Vec<[f64; 3]> = jacobian(series, theta, r)
        .into_iter()
        .map(|row| [row[0] / chain[0], row[1] / chain[1], row[2] / chain[2]])
        .collect();
    let (info, _) = normal_equations(&jac, r);
    let inv = info.try_inverse()?;
    let sigma2 = sse / (n - 3) as f64;
    let mut cov = [[0.0; 3]; 3];
    for (p, row) in cov.iter_mut().enumerate() {
        for (q, cell) in row.iter_mut().enumerate() {
            *cell = sigma2 * inv[(p, q)];
        }
    }
    cov.iter().flatten().all(|x| x.is_finite()).then_some(cov)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    pub rmse: f64,
    pub r_squared: f64,
}

/// RMSE and coefficient of determination of `predicted` against `observed`.
pub fn fit_quality(observed: &[f64], predicted: &[f64]) -> Result<FitQuality> {
    if observed.is_empty() || observed.len() != predicted.len() {
        return Err(domain("observed and predicted must be non-empty and equally long"));
    }
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(v, p)| (v - p).powi(2))
        .sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedRSquared);
    }
    Ok(FitQuality {
        rmse: (ss_res / n).sqrt(),
        r_squared: 1.0 - ss_res / ss_tot,
    })
}

pub fn goodness_of_fit(series: &TimeSeries, fit: &FitResult) -> Result<FitQuality> {
    let predicted: Vec<f64> = series.times.iter().map(|&t| fit.predict(t)).collect();
    fit_quality(&series.values, &predicted)
}
