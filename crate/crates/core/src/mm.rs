//! Membership-mappings: Student-t kernel interpolation with inducing points,
//! fitted variationally.
//!
//! The fit follows the standard recipe: per-dimension bandwidths from the
//! data range, a shrink loop on the number of inducing points driven by the
//! Nyström residual `tau`, a variance test for the kernel scale, and an
//! alternating solve for the weights `alpha` and the noise precision `beta`.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::{column_variances, sym_eigen_desc, weighted_sq_dists, SpdFactor};

/// Degrees of freedom of the Student-t membership function.
pub const DEFAULT_NU: f64 = 2.1;
/// Threshold on `tau(M, 1)` below which the number of inducing points shrinks.
pub const KAPPA: f64 = 0.1;
const SHRINK_FACTOR: f64 = 0.9;
const BETA_REL_TOL: f64 = 1e-4;
const BETA_MAX_ITERS: usize = 100;
/// Smallest `tau(M, 1)` used when rescaling the kernel variance.
const TAU_FLOOR: f64 = 1e-12;
/// Column ranges below this fraction of the largest |entry| get zero bandwidth.
const RANGE_RTOL: f64 = 1e-10;
/// Smallest admissible `1 / beta`.
const INV_BETA_FLOOR: f64 = 1e-300;

/// Parameters of the kernel `sigma2 * exp(-0.5 * sum_k w_k |x_k - x2_k|^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    pub sigma2: f64,
    pub w: Vec<f64>,
    pub nu: f64,
}

impl KernelParams {
    pub fn new(sigma2: f64, w: Vec<f64>, nu: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!("kernel variance must be positive, got {sigma2}")));
        }
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("kernel bandwidths must be finite and non-negative"));
        }
        if !(nu > 2.0) {
            return Err(Error::invalid(format!("degrees of freedom must exceed 2, got {nu}")));
        }
        Ok(KernelParams { sigma2, w, nu })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    fn with_sigma2(&self, sigma2: f64) -> Self {
        KernelParams {
            sigma2,
            ..self.clone()
        }
    }
}

pub fn kernel_eval(x: &[f64], x2: &[f64], k: &KernelParams) -> Result<f64> {
    check_dim("kernel_eval", k.dim(), x.len())?;
    check_dim("kernel_eval", k.dim(), x2.len())?;
    let s: f64 = x
        .iter()
        .zip(x2)
        .zip(&k.w)
        .map(|((a, b), w)| w * (a - b) * (a - b))
        .sum();
    Ok(k.sigma2 * (-0.5 * s).exp())
}

/// Kernel matrix between the rows of `x` (N x n) and the rows of `a` (M x n).
pub fn kernel_matrix(x: &DMatrix<f64>, a: &DMatrix<f64>, k: &KernelParams) -> Result<DMatrix<f64>> {
    check_dim("kernel_matrix", k.dim(), x.ncols())?;
    check_dim("kernel_matrix", k.dim(), a.ncols())?;
    let mut d = weighted_sq_dists(x, a, &k.w);
    d.apply(|v| *v = k.sigma2 * (-0.5 * *v).exp());
    Ok(d)
}

/// Fitted membership-mapping model: weights `alpha` (M x p), inducing points
/// (M x n) and kernel parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipMappingModel {
    alpha: DMatrix<f64>,
    aux_points: DMatrix<f64>,
    kernel: KernelParams,
}

impl MembershipMappingModel {
    pub fn from_parts(alpha: DMatrix<f64>, aux_points: DMatrix<f64>, kernel: KernelParams) -> Result<Self> {
        if aux_points.nrows() == 0 {
            return Err(Error::invalid("a membership-mapping needs at least one inducing point"));
        }
        check_dim("membership-mapping alpha rows", aux_points.nrows(), alpha.nrows())?;
        check_dim("membership-mapping inducing point dim", kernel.dim(), aux_points.ncols())?;
        Ok(MembershipMappingModel {
            alpha,
            aux_points,
            kernel,
        })
    }

    /// Number of inducing points M.
    pub fn m(&self) -> usize {
        self.aux_points.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.aux_points.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn aux_points(&self) -> &DMatrix<f64> {
        &self.aux_points
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    /// Same inducing points and kernel, different weights.
    pub fn with_alpha(&self, alpha: DMatrix<f64>) -> Result<Self> {
        Self::from_parts(alpha, self.aux_points.clone(), self.kernel.clone())
    }

    /// `G(x) = [kr(x, a^1), ..., kr(x, a^M)]`.
    pub fn feature_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("feature_row", self.input_dim(), x.len())?;
        let xm = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.features(&xm)?.iter().copied().collect())
    }

    /// Stacked feature rows `R` (N x M) of every row of `x`.
    pub fn features(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("features", self.input_dim(), x.ncols())?;
        kernel_matrix(x, &self.aux_points, &self.kernel)
    }

    /// `alpha^T G(x)^T`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = DMatrix::from_row_slice(1, self.m(), &self.feature_row(x)?);
        Ok((g * &self.alpha).iter().copied().collect())
    }

    /// Predictions for every row of `x` (N x p).
    pub fn predict_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.features(x)? * &self.alpha)
    }
}

pub fn feature_row(x: &[f64], model: &MembershipMappingModel) -> Result<Vec<f64>> {
    model.feature_row(x)
}

pub fn mm_predict(model: &MembershipMappingModel, x: &[f64]) -> Result<Vec<f64>> {
    model.predict(x)
}

/// `w_k = (max_i x_k - min_i x_k)^-2`; a constant column gets `w_k = 0`.
pub fn choose_bandwidths(x: &DMatrix<f64>) -> Vec<f64> {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.column_iter()
        .map(|c| {
            let (lo, hi) = c
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let range = hi - lo;
            // spreads at rounding level count as constant columns
            if range > RANGE_RTOL * scale && range.is_finite() {
                1.0 / (range * range)
            } else {
                0.0
            }
        })
        .collect()
}

/// `M` k-means centroids of the rows of `x`.
pub fn select_inducing(x: &DMatrix<f64>, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    if m == 0 || m > x.nrows() {
        return Err(Error::invalid(format!(
            "number of inducing points must be in 1..={}, got {m}",
            x.nrows()
        )));
    }
    Ok(kmeans(x, m, seed)?.centroids)
}

/// `(Tr K_xx - Tr(K_aa^-1 K_xa^T K_xa)) / (nu + M - 2)`.
pub fn tau(x: &DMatrix<f64>, a: &DMatrix<f64>, k: &KernelParams) -> Result<f64> {
    let kxa = kernel_matrix(x, a, k)?;
    let kaa = kernel_matrix(a, a, k)?;
    nystrom_tau(x.nrows(), &kxa, &kaa, k)
}

fn nystrom_tau(n: usize, kxa: &DMatrix<f64>, kaa: &DMatrix<f64>, k: &KernelParams) -> Result<f64> {
    let m = kaa.nrows();
    let factor = SpdFactor::new(kaa)
        .map_err(|e| Error::numerical(format!("inducing-point Gram matrix (M = {m}): {e}")))?;
    let explained = if factor.jitter() == 0.0 {
        factor.whiten(&kxa.transpose()).norm_squared()
    } else {
        pinv_explained(kxa, kaa)
    };
    let trace_xx = n as f64 * k.sigma2;
    Ok((trace_xx - explained) / (k.nu + m as f64 - 2.0))
}

/// `Tr(K_xa K_aa^+ K_xa^T)` with eigenvalues at rounding level dropped from the pseudo-inverse.
fn pinv_explained(kxa: &DMatrix<f64>, kaa: &DMatrix<f64>) -> f64 {
    let (vals, vecs) = sym_eigen_desc(kaa.clone());
    let tol = vals[0].max(0.0) * kaa.nrows() as f64 * f64::EPSILON;
    let g = kxa * vecs;
    vals.iter()
        .enumerate()
        .filter(|(_, &v)| v > tol)
        .map(|(i, &v)| g.column(i).norm_squared() / v)
        .sum()
}

/// Diagnostics recorded while fitting a membership-mapping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitTrace {
    /// Every M visited by the shrink loop, starting at `M_max`.
    pub m_sequence: Vec<usize>,
    /// `tau(M, 1)` for each entry of `m_sequence`.
    pub tau_sequence: Vec<f64>,
    pub sigma2: f64,
    /// `beta` after every update, starting with the initial value 1.
    pub beta_sequence: Vec<f64>,
}

pub fn fit_membership_mapping(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    m_max: usize,
    seed: u64,
) -> Result<MembershipMappingModel> {
    fit_membership_mapping_traced(x, y, m_max, seed).map(|(m, _)| m)
}

pub fn fit_membership_mapping_traced(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    m_max: usize,
    seed: u64,
) -> Result<(MembershipMappingModel, FitTrace)> {
    let n = x.nrows();
    check_dim("fit_membership_mapping rows", n, y.nrows())?;
    if n == 0 {
        return Err(Error::invalid("cannot fit a membership-mapping on an empty dataset"));
    }
    if m_max == 0 || m_max > n {
        return Err(Error::invalid(format!(
            "M_max must be in 1..={n}, got {m_max}"
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    let p = y.ncols();
    let unit = KernelParams::new(1.0, choose_bandwidths(x), DEFAULT_NU)?;
    let mut trace = FitTrace::default();

    // Shrink the number of inducing points while the Nystrom residual is small.
    let mut m = m_max;
    let (aux, kxa1, kaa1, tau1) = loop {
        let aux = select_inducing(x, m, seed)?;
        let kxa = kernel_matrix(x, &aux, &unit)?;
        let kaa = kernel_matrix(&aux, &aux, &unit)?;
        let t = nystrom_tau(n, &kxa, &kaa, &unit)?;
        trace.m_sequence.push(m);
        trace.tau_sequence.push(t);
        let next = (SHRINK_FACTOR * m as f64).ceil() as usize;
        if t >= KAPPA || next >= m || m == 1 {
            break (aux, kxa, kaa, t);
        }
        m = next.max(1);
    };

    let var_mean = if p == 0 {
        0.0
    } else {
        column_variances(y).iter().sum::<f64>() / p as f64
    };
    let sigma2 = if tau1 >= var_mean {
        1.0
    } else {
        var_mean / tau1.max(TAU_FLOOR)
    };
    trace.sigma2 = sigma2;
    let kernel = unit.with_sigma2(sigma2);

    let kxa = kxa1 * sigma2;
    let kaa = kaa1 * sigma2;
    let gram = kxa.transpose() * &kxa;
    let rhs = kxa.transpose() * y;
    let tau_scaled = sigma2 * tau1;
    let solve_alpha = |inv_beta: f64| -> Result<DMatrix<f64>> {
        let system = &gram + &kaa * (tau_scaled + inv_beta);
        Ok(SpdFactor::new(&system)?.solve(&rhs))
    };

    let mut inv_beta = 1.0;
    trace.beta_sequence.push(1.0);
    for _ in 0..BETA_MAX_ITERS {
        let alpha = solve_alpha(inv_beta)?;
        let resid = y - &kxa * &alpha;
        let mse = if p == 0 { 0.0 } else { resid.norm_squared() / (n * p) as f64 };
        let next = mse.max(INV_BETA_FLOOR);
        if !next.is_finite() {
            return Err(Error::numerical("noise precision update produced a non-finite value"));
        }
        trace.beta_sequence.push(1.0 / next);
        let rel = (inv_beta / next - 1.0).abs();
        inv_beta = next;
        if rel < BETA_REL_TOL {
            break;
        }
    }
    let alpha = solve_alpha(inv_beta)?;
    let model = MembershipMappingModel::from_parts(alpha, aux, kernel)?;
    Ok((model, trace))
}
