//! Noise-adding mechanism for differentially private data release.

use nalgebra::DMatrix;
use rand::distributions::Open01;
use rand::Rng as _;

use crate::deep::{fit_classifier, ClassifierModel};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Differential-privacy parameters: sensitivity `d`, loss bound `epsilon`,
/// failure probability `delta`. `epsilon = inf` means no noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpParams {
    pub d: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl DpParams {
    pub fn new(d: f64, epsilon: f64, delta: f64) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::invalid(format!("sensitivity d must be positive, got {d}")));
        }
        if !(epsilon > 0.0) || epsilon.is_nan() {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
        }
        Ok(DpParams { d, epsilon, delta })
    }

    pub fn is_noiseless(&self) -> bool {
        self.epsilon == f64::INFINITY
    }
}

/// Inverse CDF of the added noise at `r`.
pub fn dp_quantile(r: f64, params: &DpParams) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid(format!("quantile level must be in (0, 1), got {r}")));
    }
    Ok(quantile(r, params))
}

fn quantile(r: f64, params: &DpParams) -> f64 {
    if params.is_noiseless() {
        return 0.0;
    }
    let scale = params.d / params.epsilon;
    let lo = (1.0 - params.delta) / 2.0;
    let hi = (1.0 + params.delta) / 2.0;
    if r < lo {
        scale * (2.0 * r / (1.0 - params.delta)).ln()
    } else if r > hi {
        -scale * (2.0 * (1.0 - r) / (1.0 - params.delta)).ln()
    } else {
        0.0
    }
}

/// Add independent noise `dp_quantile(u)`, `u ~ U(0, 1)`, to every entry of `y`.
/// Entries are drawn in row-major order.
pub fn dp_perturb(y: &DMatrix<f64>, params: &DpParams, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let mut out = y.clone();
    if params.is_noiseless() {
        return out;
    }
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            let u: f64 = rng.sample(Open01);
            out[(i, j)] += quantile(u, params);
        }
    }
    out
}

/// Classifier fitted on already perturbed per-class data.
pub fn fit_private_classifier(
    y_plus_by_class: &[DMatrix<f64>],
    n: usize,
    r_max: f64,
    layers: usize,
    seed: u64,
) -> Result<ClassifierModel> {
    fit_classifier(y_plus_by_class, n, r_max, layers, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn params(d: f64, e: f64, delta: f64) -> DpParams {
        DpParams::new(d, e, delta).unwrap()
    }

    #[test]
    fn median_is_zero() {
        for p in [params(1.0, 1.0, 1e-5), params(3.0, 0.1, 0.4), params(1.0, f64::INFINITY, 0.1)] {
            assert_eq!(dp_quantile(0.5, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn lower_branch_value() {
        // ln(0.5 / (1 - 1e-5)) = ln 0.5 - ln(1 - 1e-5), evaluated by series
        let delta: f64 = 1e-5;
        let ln1m = -(delta + delta * delta / 2.0 + delta.powi(3) / 3.0);
        let expected = 0.5f64.ln() - ln1m;
        let got = dp_quantile(0.25, &params(1.0, 1.0, delta)).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((got + 0.693137).abs() < 1e-6);
    }

    #[test]
    fn odd_symmetry() {
        let p = params(1.0, 0.7, 0.05);
        let mut rng = rng_from_seed(0);
        for _ in 0..1000 {
            let r: f64 = rng.sample(Open01);
            assert_eq!(dp_quantile(1.0 - r, &p).unwrap(), -dp_quantile(r, &p).unwrap());
        }
    }

    #[test]
    fn monotone_and_continuous_at_boundaries() {
        let p = params(2.0, 0.5, 0.2);
        let mut prev = f64::NEG_INFINITY;
        for i in 1..10_000 {
            let v = dp_quantile(i as f64 / 10_000.0, &p).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let lo = (1.0 - p.delta) / 2.0;
        assert!(dp_quantile(lo - 1e-12, &p).unwrap().abs() < 1e-9);
        let hi = (1.0 + p.delta) / 2.0;
        assert!(dp_quantile(hi + 1e-12, &p).unwrap().abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_range() {
        let p = params(1.0, 1.0, 0.1);
        assert!(dp_quantile(0.0, &p).is_err());
        assert!(dp_quantile(1.0, &p).is_err());
        assert!(DpParams::new(0.0, 1.0, 0.1).is_err());
        assert!(DpParams::new(1.0, 0.0, 0.1).is_err());
        assert!(DpParams::new(1.0, 1.0, 1.0).is_err());
        assert!(DpParams::new(1.0, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn perturbation_statistics() {
        let delta = 0.01;
        let p = params(1.0, 1.0, delta);
        let y = DMatrix::zeros(1000, 1000);
        let out = dp_perturb(&y, &p, 42);
        let total = 1e6;
        let zeros = out.iter().filter(|v| **v == 0.0).count() as f64 / total;
        assert!((zeros - delta).abs() <= 3.0 * (delta / total).sqrt());
        let mean = out.iter().sum::<f64>() / total;
        assert!(mean.abs() <= 4.0 * (p.d / p.epsilon) / total.sqrt() * 2f64.sqrt());
    }

    #[test]
    fn perturbation_is_reproducible() {
        let y = DMatrix::from_fn(7, 5, |i, j| (i * j) as f64);
        let p = params(1.0, 0.3, 0.1);
        assert_eq!(dp_perturb(&y, &p, 3), dp_perturb(&y, &p, 3));
        assert_ne!(dp_perturb(&y, &p, 3), dp_perturb(&y, &p, 4));
        let none = params(1.0, f64::INFINITY, 0.1);
        assert_eq!(dp_perturb(&y, &none, 3), y);
    }
}
