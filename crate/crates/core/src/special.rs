//! Digamma and log-gamma.
//!
//! Both shift the argument above [`ASYMPTOTIC_MIN`] with the unit recurrence
//! and then evaluate the asymptotic (Stirling / Bernoulli) series. Arguments
//! below one half go through the reflection formula.

use std::f64::consts::PI;

const ASYMPTOTIC_MIN: f64 = 10.0;

/// Natural log of |Γ(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 && x == x.floor() {
        return f64::INFINITY;
    }
    if x < 0.5 {
        return (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x);
    }
    let mut z = x;
    let mut shift = 0.0;
    while z < ASYMPTOTIC_MIN {
        shift += z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Bernoulli terms B_{2k} / (2k (2k-1) z^{2k-1}).
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2 * (-691.0 / 360_360.0 + inv2 / 156.0))))));
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series - shift
}

/// Digamma ψ(x) = d/dx ln Γ(x).
pub fn digamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 && x == x.floor() {
        return f64::NAN;
    }
    if x < 0.5 {
        return digamma(1.0 - x) - PI / (PI * x).tan();
    }
    let mut z = x;
    let mut shift = 0.0;
    while z < ASYMPTOTIC_MIN {
        shift += 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    // Bernoulli terms B_{2k} / (2k z^{2k}).
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32_760.0 - inv2 / 12.0))))));
    z.ln() - 0.5 / z - series - shift
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER: f64 = 0.577_215_664_901_532_9;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn digamma_known_values() {
        assert!(rel(digamma(1.0), -EULER) < 1e-12);
        assert!(rel(digamma(0.5), -EULER - 2.0 * 2f64.ln()) < 1e-12);
        // ψ(n) = H_{n-1} - γ
        let h: f64 = (1..10).map(|k| 1.0 / k as f64).sum();
        assert!(rel(digamma(10.0), h - EULER) < 1e-12);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!(ln_gamma(2.0).abs() < 1e-13);
        assert!(rel(ln_gamma(0.5), PI.sqrt().ln()) < 1e-12);
        let fact: f64 = (1..20).map(|k| (k as f64).ln()).sum();
        assert!(rel(ln_gamma(20.0), fact) < 1e-13);
    }

    #[test]
    fn recurrences_hold() {
        for &x in &[0.5, 0.73, 1.9, 4.2, 11.5, 250.0, 5005.001] {
            assert!((ln_gamma(x + 1.0) - ln_gamma(x) - x.ln()).abs() < 1e-10 * ln_gamma(x + 1.0).abs().max(1.0));
            assert!((digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() < 1e-12 * digamma(x + 1.0).abs().max(1.0));
        }
    }

    #[test]
    fn reflection_branch() {
        // Γ(0.25) Γ(0.75) = π √2
        let lhs = ln_gamma(0.25) + ln_gamma(0.75);
        assert!(rel(lhs, (PI * 2f64.sqrt()).ln()) < 1e-12);
        assert!(ln_gamma(0.0).is_infinite());
        assert!(digamma(-1.0).is_nan());
    }

    #[test]
    fn agrees_with_statrs() {
        for i in 1..400 {
            let x = 0.013 * i as f64 + (i as f64).powf(1.7) * 0.05;
            assert!(rel(ln_gamma(x), statrs::function::gamma::ln_gamma(x)) < 1e-12 || (ln_gamma(x) - statrs::function::gamma::ln_gamma(x)).abs() < 1e-13);
            assert!((digamma(x) - statrs::function::gamma::digamma(x)).abs() < 1e-11 * digamma(x).abs().max(1.0));
        }
    }
}
