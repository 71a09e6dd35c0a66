//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

// 15-point Kronrod nodes on [-1, 1] (non-negative half) and weights; the odd
// entries are the embedded 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(mid);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(mid - dx) + f(mid + dx);
        k += WGK[j] * pair;
        if j % 2 == 1 {
            g += WG[j / 2] * pair;
        }
    }
    (k * half, ((k - g) * half).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = kronrod(f, a, b);
    // Past roundoff level further bisection cannot help.
    if err <= tol || err <= 50.0 * f64::EPSILON * value.abs() || depth == 0 {
        return value;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod (7/15) integral of `f` over [a, b] to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    adapt(&f, a, b, tol, 40)
}

/// γ(s, x) by quadrature. For s < 1 the substitution u = v^{1/s} removes the
/// endpoint singularity: γ(s, x) = (1/s)∫₀^{x^s} exp(−v^{1/s}) dv.
pub fn incomplete_gamma_quad(s: f64, x: f64) -> f64 {
    if s < 1.0 {
        let upper = x.powf(s);
        let scale = integrate(|v| (-v.powf(1.0 / s)).exp(), 0.0, upper, 1e-300_f64.max(upper * 1e-15));
        return scale / s;
    }
    let rough = integrate(|u| u.powf(s - 1.0) * (-u).exp(), 0.0, x, 1e-6);
    integrate(|u| u.powf(s - 1.0) * (-u).exp(), 0.0, x, (rough.abs() * 1e-14).max(1e-300))
}

/// N∫₀ᵗ c·e^a/(ab)^a·u^a·e^{−u/b} du by quadrature.
pub fn gamma_intensity_quad(n: f64, a: f64, b: f64, c: f64, t: f64) -> f64 {
    let ln_pre = c.ln() + a - a * (a * b).ln();
    let w = move |u: f64| {
        if u <= 0.0 {
            0.0
        } else {
            (ln_pre + a * u.ln() - u / b).exp()
        }
    };
    let rough = integrate(w, 0.0, t, 1e-8);
    n * integrate(w, 0.0, t, (rough * 1e-14).max(1e-300))
}

/// Poisson pmf by the multiplicative recurrence p(k) = p(k−1)·λ/k.
pub fn poisson_pmf(lambda: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut p = (-lambda).exp();
    for k in 0..len {
        if k > 0 {
            p *= lambda / k as f64;
        }
        out.push(p);
    }
    out
}
