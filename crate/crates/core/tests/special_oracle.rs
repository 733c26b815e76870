//! Cross-checks the special functions and Gamma marginal against `statrs`.

use qmle::special::{gamma_p, gamma_p_inv, gamma_q, ln_gamma};
use qmle::GammaMarginal;
use statrs::distribution::{ContinuousCDF, Gamma};
use statrs::function::gamma as sg;

const SHAPES: [f64; 9] = [0.05, 0.5, 1.0, 2.5, 4.0, 5.0, 17.3, 80.0, 400.0];

#[test]
fn ln_gamma_agrees() {
    for a in SHAPES.iter().chain(&[1e-3, 0.999, 1.5, 171.0]) {
        let (ours, theirs) = (ln_gamma(*a), sg::ln_gamma(*a));
        assert!((ours - theirs).abs() <= 1e-12 * theirs.abs().max(1.0), "a={a}: {ours} vs {theirs}");
    }
}

#[test]
fn incomplete_gamma_agrees() {
    for &a in &SHAPES {
        for k in 1..=60 {
            let x = a * (0.02 * k as f64) + 0.1 * k as f64;
            let p = gamma_p(a, x).unwrap();
            let q = gamma_q(a, x).unwrap();
            let (tp, tq) = (sg::gamma_lr(a, x), sg::gamma_ur(a, x));
            assert!((p - tp).abs() < 1e-12, "P({a},{x}) {p} vs {tp}");
            assert!((q - tq).abs() < 1e-12, "Q({a},{x}) {q} vs {tq}");
        }
    }
}

#[test]
fn gamma_marginal_quantile_agrees() {
    for &shape in &[0.7, 4.0, 5.0, 12.0] {
        let ours = GammaMarginal::new(shape, 4.0).unwrap();
        let theirs = Gamma::new(shape, 0.25).unwrap();
        for k in 1..100 {
            let p = k as f64 / 100.0;
            let (x, y) = (ours.quantile(p).unwrap(), theirs.inverse_cdf(p));
            assert!((x - y).abs() < 1e-7 * y.max(1.0), "shape {shape} p {p}: {x} vs {y}");
            assert!((gamma_p_inv(shape, p).unwrap() * 4.0 - x).abs() < 1e-12 * x.max(1.0));
            assert!((ours.cdf(y).unwrap() - theirs.cdf(y)).abs() < 1e-12);
        }
    }
}
