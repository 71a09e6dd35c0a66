mod common;

use hashpop::special::{
    log_gamma, lower_incomplete_gamma, lower_incomplete_gamma_eval, normal_cdf, normal_quantile,
    stirling_gamma, MAX_ITERATIONS,
};
use proptest::prelude::*;

#[test]
fn incomplete_gamma_matches_quadrature() {
    let g = lower_incomplete_gamma(2.5, 1.7).unwrap();
    let q = common::incomplete_gamma_quad(2.5, 1.7);
    assert!((g - q).abs() <= 1e-10, "{g} vs {q}");
    for &(s, x) in &[(0.3, 0.05), (0.3, 12.0), (1.0, 3.0), (7.5, 7.0), (7.5, 9.0), (15.0, 40.0)] {
        let g = lower_incomplete_gamma(s, x).unwrap();
        let q = common::incomplete_gamma_quad(s, x);
        assert!((g - q).abs() <= 1e-10 * q.max(1.0), "s={s} x={x}: {g} vs {q}");
    }
}

#[test]
fn integer_order_has_elementary_form() {
    // γ(n, x) = (n−1)!·(1 − e^{−x}·Σ_{k<n} x^k/k!)
    for n in 1..8u32 {
        for &x in &[0.5, 2.0, 9.0] {
            let mut term = 1.0;
            let mut partial = 0.0;
            for k in 0..n {
                if k > 0 {
                    term *= x / k as f64;
                }
                partial += term;
            }
            let fact: f64 = (1..n).map(f64::from).product();
            let exact = fact * (1.0 - (-x).exp() * partial);
            let g = lower_incomplete_gamma(n as f64, x).unwrap();
            assert!((g - exact).abs() <= 1e-12 * fact, "n={n} x={x}");
        }
    }
}

#[test]
fn evaluation_reports_terms() {
    let r = lower_incomplete_gamma_eval(3.0, 1.0).unwrap();
    assert!(r.converged);
    assert!(r.terms_used > 0 && r.terms_used <= MAX_ITERATIONS);
    assert_eq!(lower_incomplete_gamma(3.0, 0.0).unwrap(), 0.0);
    assert!(lower_incomplete_gamma(0.0, 1.0).is_err());
    assert!(lower_incomplete_gamma(1.0, -1.0).is_err());
}

#[test]
fn stirling_error_shrinks() {
    assert!((stirling_gamma(10.0).unwrap() / 362_880.0 - 1.0).abs() < 0.01);
    let errs: Vec<f64> = [5.0, 10.0, 20.0, 50.0, 100.0]
        .iter()
        .map(|&z: &f64| (stirling_gamma(z).unwrap().ln() - log_gamma(z).unwrap()).abs())
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn normal_quantile_inverts_cdf() {
    for &p in &[1e-10, 0.001, 0.025, 0.3, 0.5, 0.9, 0.975, 1.0 - 1e-9] {
        let z = normal_quantile(p).unwrap();
        assert!((normal_cdf(z) - p).abs() <= 1e-12 * p.max(1e-3), "p={p}");
    }
}

proptest! {
    #[test]
    fn gamma_increases_in_x(s in 0.1f64..30.0, x in 0.0f64..60.0, dx in 1e-3f64..5.0) {
        let lo = lower_incomplete_gamma(s, x).unwrap();
        let hi = lower_incomplete_gamma(s, x + dx).unwrap();
        prop_assert!(hi >= lo * (1.0 - 1e-14));
    }

    #[test]
    fn gamma_recurrence(s in 0.1f64..30.0, x in 1e-3f64..60.0) {
        let g = lower_incomplete_gamma(s, x).unwrap();
        let next = lower_incomplete_gamma(s + 1.0, x).unwrap();
        let term = (s * x.ln() - x).exp();
        let scale = (s * g).max(term);
        prop_assert!((next - (s * g - term)).abs() <= 1e-10 * scale);
    }

    #[test]
    fn gamma_bounded_by_complete(s in 0.1f64..50.0, x in 0.0f64..200.0) {
        let g = lower_incomplete_gamma(s, x).unwrap();
        prop_assert!(g >= 0.0);
        prop_assert!(g <= log_gamma(s).unwrap().exp() * (1.0 + 1e-12));
    }

    #[test]
    fn log_gamma_recurrence(z in 0.05f64..100.0) {
        let lhs = log_gamma(z + 1.0).unwrap();
        let rhs = log_gamma(z).unwrap() + z.ln();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
