//! Variational estimate of information leakage `I(t; x) - H(t)` from paired samples.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::special::{digamma, ln_gamma};
use crate::vmmbm::{default_m_max, fit_vmmbm_spectral, rel_change, VmmbmModel, VmmbmPrior, MAX_ITERS, REL_TOL};

/// The individual terms whose sum is the leakage estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeakageTerms {
    /// `-q/2 ln(2 pi)`.
    pub log_norm: f64,
    /// `q/2 (digamma(a_bar) - ln b_bar)`.
    pub log_precision: f64,
    /// `-(a_bar / 2 b_bar) <||t - m_bar^T G(x)^T||^2>`.
    pub fit: f64,
    /// `-(a_bar / 2 b_bar) q Tr(Lambda_bar^-1 <G^T G>)`.
    pub spread: f64,
    /// KL divergence between the tilted and the fitted Gaussian weight posteriors.
    pub kl_gaussian: f64,
    /// KL divergence between the tilted and the fitted Gamma noise posteriors.
    pub kl_gamma: f64,
}

impl LeakageTerms {
    pub fn total(&self) -> f64 {
        self.log_norm + self.log_precision + self.fit + self.spread - self.kl_gaussian - self.kl_gamma
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeakageEstimate {
    /// Estimated leakage in nats.
    pub value: f64,
    pub terms: LeakageTerms,
    /// Tilted posterior means as columns (M x q).
    pub m_bar: DMatrix<f64>,
    lambda_bar_eig: DVector<f64>,
    pub a_bar: f64,
    pub b_bar: f64,
    pub iterations: usize,
    pub model: VmmbmModel,
}

impl LeakageEstimate {
    /// Shared tilted posterior precision `Lambda_bar_k` (identical for every k).
    pub fn lambda_bar(&self) -> DMatrix<f64> {
        self.model.spectrum().compose(&self.lambda_bar_eig)
    }
}

/// Estimate the leakage of `t` (targets, N x q) through `x` (inputs, N x n)
/// with the default prior and `M_max = min(ceil(N/2), 1000)`.
pub fn estimate_leakage(x: &DMatrix<f64>, t: &DMatrix<f64>, seed: u64) -> Result<LeakageEstimate> {
    estimate_leakage_with(x, t, default_m_max(x.nrows()), seed, VmmbmPrior::default())
}

pub fn estimate_leakage_with(
    x: &DMatrix<f64>,
    t: &DMatrix<f64>,
    m_max: usize,
    seed: u64,
    prior: VmmbmPrior,
) -> Result<LeakageEstimate> {
    check_dim("estimate_leakage rows", x.nrows(), t.nrows())?;
    if x.nrows() < 4 {
        return Err(Error::invalid(format!(
            "leakage estimation needs at least 4 samples, got {}",
            x.nrows()
        )));
    }
    let (model, data) = fit_vmmbm_spectral(x, t, m_max, seed, prior)?;
    let n = x.nrows() as f64;
    let q = t.ncols() as f64;
    let m = model.base().m() as f64;
    let d = data.spectrum.gram_eigenvalues();
    let ell_hat = model.lambda_hat_eig().clone();
    let c_hat = model.coef().clone();
    let rt_t = data.rt_t();
    let (a_hat, b_hat) = (model.a_hat(), model.b_hat());

    let a_bar = a_hat + 0.5 * q;
    let mut ratio = a_hat / b_hat;
    let mut prev: Option<(DMatrix<f64>, f64)> = None;
    let mut last_change = f64::INFINITY;
    let mut result = None;
    for iter in 1..=MAX_ITERS {
        let ell_bar = DVector::from_fn(d.len(), |i, _| ell_hat[i] + ratio * d[i] / n);
        let mut c_bar = rt_t.clone() * (ratio / n);
        for (i, mut row) in c_bar.row_iter_mut().enumerate() {
            let base = c_hat.row(i) * ell_hat[i];
            row += base;
            row /= ell_bar[i];
        }
        let sq = data.residual_sq(&c_bar) / n;
        let tr = q * d.iter().zip(ell_bar.iter()).map(|(d, l)| d / n / l).sum::<f64>();
        let b_bar = b_hat + 0.5 * sq + 0.5 * tr;
        if !(b_bar.is_finite() && b_bar > 0.0) {
            return Err(Error::numerical(format!("tilted noise rate became {b_bar}")));
        }
        last_change = match &prev {
            Some((c0, b0)) => rel_change(&c_bar, c0).max(((b_bar - b0) / b_bar).abs()),
            None => f64::INFINITY,
        };
        if last_change < REL_TOL {
            result = Some((iter, c_bar, ell_bar, b_bar, sq, tr));
            break;
        }
        prev = Some((c_bar, b_bar));
        ratio = a_bar / b_bar;
    }
    let Some((iterations, c_bar, ell_bar, b_bar, sq, tr)) = result else {
        return Err(Error::NoConvergence {
            context: "information-leakage estimate",
            iterations: MAX_ITERS,
            residual: last_change,
        });
    };

    let scale = a_bar / (2.0 * b_bar);
    let delta = &c_bar - &c_hat;
    let mahal: f64 = (0..delta.nrows())
        .map(|i| ell_hat[i] * delta.row(i).norm_squared())
        .sum();
    let trace_ratio: f64 = ell_hat.iter().zip(ell_bar.iter()).map(|(h, b)| h / b).sum();
    let log_det_ratio: f64 = ell_hat.iter().zip(ell_bar.iter()).map(|(h, b)| (b / h).ln()).sum();
    let kl_gaussian = 0.5 * (mahal + q * (trace_ratio - m + log_det_ratio));
    let kl_gamma = (a_bar - a_hat) * digamma(a_bar) - ln_gamma(a_bar)
        + ln_gamma(a_hat)
        + a_hat * (b_bar.ln() - b_hat.ln())
        + a_bar * (b_hat - b_bar) / b_bar;
    let terms = LeakageTerms {
        log_norm: -0.5 * q * (2.0 * PI).ln(),
        log_precision: 0.5 * q * (digamma(a_bar) - b_bar.ln()),
        fit: -scale * sq,
        spread: -scale * tr,
        kl_gaussian,
        kl_gamma,
    };
    let value = terms.total();
    if !value.is_finite() {
        return Err(Error::numerical("leakage estimate is not finite"));
    }
    let m_bar = &data.spectrum.v * &c_bar;
    Ok(LeakageEstimate {
        value,
        terms,
        m_bar,
        lambda_bar_eig: ell_bar,
        a_bar,
        b_bar,
        iterations,
        model,
    })
}

/// Closed-form leakage for `x = t + w` with `t ~ N(0, var_t I)` and
/// `w ~ N(0, var_noise I)` in `dim` dimensions.
pub fn gaussian_reference_leakage(dim: usize, var_t: f64, var_noise: f64) -> Result<f64> {
    if !(var_t > 0.0 && var_noise > 0.0) {
        return Err(Error::invalid("variances must be positive"));
    }
    let k = dim as f64;
    let mi = if var_noise.is_infinite() { 0.0 } else { 0.5 * k * (var_t / var_noise).ln_1p() };
    Ok(mi - 0.5 * k * (2.0 * PI * std::f64::consts::E * var_t).ln())
}
