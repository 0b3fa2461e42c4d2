//! Variational Bayesian inverse model built on a membership-mapping.
//!
//! The prior on every weight vector is `N(alpha_k, Lambda^-1)` with
//! `Lambda = lambda I`, and the noise precision has a `Gamma(a, b)` prior.
//! Because the prior precision is isotropic and the design matrix `R` is
//! shared by all outputs, every posterior precision is
//! `lambda I + (a_hat / b_hat) R^T R`, and all updates diagonalize in the
//! right singular basis of `R`. The fit iterates in that basis and stores a
//! single shared posterior precision.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::mm::{fit_membership_mapping, MembershipMappingModel};

pub const MAX_ITERS: usize = 500;
pub const REL_TOL: f64 = 1e-6;

/// `M_max = min(ceil(N / 2), 1000)`.
pub fn default_m_max(n: usize) -> usize {
    n.div_ceil(2).clamp(1, 1000)
}

/// Prior: weight precision `lambda I`, noise precision `Gamma(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VmmbmPrior {
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for VmmbmPrior {
    fn default() -> Self {
        VmmbmPrior {
            lambda: 1e-3,
            a: 1e-3,
            b: 1e-3,
        }
    }
}

/// Thin SVD of the design matrix, `R = U diag(s) V^T`, with the targets
/// projected once so that `||T - R V c||^2` costs O(Mq) for any `c`.
///
/// Working with the SVD of `R` rather than the eigenvectors of `R^T R` keeps
/// the small directions accurate when the kernel scale is large.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Spectrum {
    /// Right singular vectors as columns (M x M).
    pub v: DMatrix<f64>,
    /// Singular values.
    pub s: DVector<f64>,
}

impl Spectrum {
    /// Eigenvalues `s_i^2` of `R^T R`.
    pub fn gram_eigenvalues(&self) -> DVector<f64> {
        self.s.map(|v| v * v)
    }

    /// `V diag(e) V^T`.
    pub fn compose(&self, e: &DVector<f64>) -> DMatrix<f64> {
        let mut ve = self.v.clone();
        for (j, mut col) in ve.column_iter_mut().enumerate() {
            col *= e[j];
        }
        ve * self.v.transpose()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SpectralData {
    pub spectrum: Spectrum,
    /// `U^T T` (M x q).
    pub g: DMatrix<f64>,
    /// `||T - U U^T T||^2`.
    perp_sq: f64,
    /// Number of training rows N.
    pub n: usize,
}

impl SpectralData {
    pub fn new(r: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<Self> {
        let svd = r.clone().svd(true, true);
        let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
            return Err(Error::numerical("singular value decomposition of the design matrix failed"));
        };
        if svd.singular_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("design matrix has non-finite singular values"));
        }
        let g = u.transpose() * t;
        let perp_sq = (t - &u * &g).norm_squared();
        Ok(SpectralData {
            spectrum: Spectrum {
                v: vt.transpose(),
                s: svd.singular_values,
            },
            g,
            perp_sq,
            n: t.nrows(),
        })
    }

    /// `R^T T` in the singular basis: `diag(s) U^T T`.
    pub fn rt_t(&self) -> DMatrix<f64> {
        let mut b = self.g.clone();
        for (i, mut row) in b.row_iter_mut().enumerate() {
            row *= self.spectrum.s[i];
        }
        b
    }

    /// `||T - R V c||^2`.
    pub fn residual_sq(&self, c: &DMatrix<f64>) -> f64 {
        let s = &self.spectrum.s;
        let mut acc = self.perp_sq;
        for k in 0..c.ncols() {
            for i in 0..c.nrows() {
                let e = self.g[(i, k)] - s[i] * c[(i, k)];
                acc += e * e;
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VmmbmModel {
    /// Posterior means `m_hat_k` as columns (M x q).
    m_hat: DMatrix<f64>,
    /// `V^T m_hat` in the stored singular basis.
    coef: DMatrix<f64>,
    /// Eigenvalues of the shared posterior precision in the singular basis.
    lambda_hat_eig: DVector<f64>,
    spectrum: Spectrum,
    a_hat: f64,
    b_hat: f64,
    prior: VmmbmPrior,
    base: MembershipMappingModel,
    iterations: usize,
    residual: f64,
}

impl VmmbmModel {
    pub fn m_hat(&self) -> &DMatrix<f64> {
        &self.m_hat
    }

    /// Shared posterior precision `Lambda_hat_k` (identical for every k).
    pub fn lambda_hat(&self) -> DMatrix<f64> {
        self.spectrum.compose(&self.lambda_hat_eig)
    }

    pub(crate) fn lambda_hat_eig(&self) -> &DVector<f64> {
        &self.lambda_hat_eig
    }

    pub(crate) fn coef(&self) -> &DMatrix<f64> {
        &self.coef
    }

    pub(crate) fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn a_hat(&self) -> f64 {
        self.a_hat
    }

    pub fn b_hat(&self) -> f64 {
        self.b_hat
    }

    pub fn prior(&self) -> &VmmbmPrior {
        &self.prior
    }

    pub fn base(&self) -> &MembershipMappingModel {
        &self.base
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Largest relative residual of the four update equations at return.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn input_dim(&self) -> usize {
        self.base.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.m_hat.ncols()
    }

    /// Same model with every `m_hat_k` replaced.
    pub fn with_m_hat(&self, m_hat: DMatrix<f64>) -> Result<Self> {
        check_dim("posterior mean rows", self.m_hat.nrows(), m_hat.nrows())?;
        Ok(VmmbmModel {
            coef: self.spectrum.v.transpose() * &m_hat,
            m_hat,
            ..self.clone()
        })
    }

    /// `[G(x) m_hat_1, ..., G(x) m_hat_q]` for every row of `x`.
    pub fn estimate_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.base.features(x)? * &self.m_hat)
    }

    pub fn estimate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("vmmbm_estimate", self.input_dim(), x.len())?;
        let xm = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.estimate_batch(&xm)?.iter().copied().collect())
    }
}

pub fn vmmbm_estimate(model: &VmmbmModel, x: &[f64]) -> Result<Vec<f64>> {
    model.estimate(x)
}

pub fn fit_vmmbm(x: &DMatrix<f64>, t: &DMatrix<f64>, m_max: usize, seed: u64) -> Result<VmmbmModel> {
    fit_vmmbm_with_prior(x, t, m_max, seed, VmmbmPrior::default())
}

pub fn fit_vmmbm_with_prior(
    x: &DMatrix<f64>,
    t: &DMatrix<f64>,
    m_max: usize,
    seed: u64,
    prior: VmmbmPrior,
) -> Result<VmmbmModel> {
    fit_vmmbm_spectral(x, t, m_max, seed, prior).map(|(m, _)| m)
}

pub(crate) fn fit_vmmbm_spectral(
    x: &DMatrix<f64>,
    t: &DMatrix<f64>,
    m_max: usize,
    seed: u64,
    prior: VmmbmPrior,
) -> Result<(VmmbmModel, SpectralData)> {
    if !(prior.lambda > 0.0 && prior.a > 0.0 && prior.b > 0.0) {
        return Err(Error::invalid("prior parameters must be positive"));
    }
    let base = fit_membership_mapping(x, t, m_max, seed)?;
    let r = base.features(x)?;
    let data = SpectralData::new(&r, t)?;
    let (n, q) = (x.nrows(), t.ncols());
    let a_hat = prior.a + 0.5 * (q * n) as f64;

    let mut ratio = 1.0;
    let mut prev: Option<(DMatrix<f64>, f64)> = None;
    let mut last_change = f64::INFINITY;
    for iter in 1..=MAX_ITERS {
        let (c, ell, b_hat) = posterior_step(&base, &data, &prior, ratio);
        if !(b_hat.is_finite() && b_hat > 0.0) {
            return Err(Error::numerical(format!("noise posterior rate became {b_hat}")));
        }
        last_change = match &prev {
            Some((c0, b0)) => rel_change(&c, c0).max(((b_hat - b0) / b_hat).abs()),
            None => f64::INFINITY,
        };
        if last_change < REL_TOL {
            let model = VmmbmModel {
                m_hat: &data.spectrum.v * &c,
                coef: c.clone(),
                lambda_hat_eig: ell,
                spectrum: data.spectrum.clone(),
                a_hat,
                b_hat,
                prior,
                base: base.clone(),
                iterations: iter,
                residual: 0.0,
            };
            let res = residuals_in_basis(&model, &data).max();
            if res <= REL_TOL {
                return Ok((VmmbmModel { residual: res, ..model }, data));
            }
        }
        prev = Some((c, b_hat));
        ratio = a_hat / b_hat;
    }
    Err(Error::NoConvergence {
        context: "variational Bayesian inverse model",
        iterations: MAX_ITERS,
        residual: last_change,
    })
}

/// One pass of the precision, mean and rate updates at noise ratio `ratio`,
/// in the singular basis. Returns `(V^T m_hat, eig(Lambda_hat), b_hat)`.
fn posterior_step(
    base: &MembershipMappingModel,
    data: &SpectralData,
    prior: &VmmbmPrior,
    ratio: f64,
) -> (DMatrix<f64>, DVector<f64>, f64) {
    let sp = &data.spectrum;
    let d = sp.gram_eigenvalues();
    let ell = d.map(|v| prior.lambda + ratio * v);
    let mut c = sp.v.transpose() * base.alpha() * prior.lambda + data.rt_t() * ratio;
    for (i, mut row) in c.row_iter_mut().enumerate() {
        row /= ell[i];
    }
    let q = c.ncols() as f64;
    let trace: f64 = d.iter().zip(ell.iter()).map(|(d, l)| d / l).sum();
    let b_hat = prior.b + 0.5 * (data.residual_sq(&c) + q * trace);
    (c, ell, b_hat)
}

/// Largest column-wise relative change between two coefficient matrices.
pub(crate) fn rel_change(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    new.column_iter()
        .zip(old.column_iter())
        .map(|(a, b)| {
            let diff = (a - b).norm();
            let scale = a.norm().max(b.norm());
            if scale == 0.0 {
                0.0
            } else {
                diff / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Relative residuals of the four posterior update equations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VmmbmResiduals {
    /// `Lambda_hat = Lambda + (a_hat/b_hat) R^T R`.
    pub precision: f64,
    /// `Lambda_hat m_hat_k = Lambda alpha_k + (a_hat/b_hat) R^T t_k`.
    pub mean: f64,
    /// `a_hat = a + q N / 2`.
    pub shape: f64,
    /// `b_hat = b + (||T - R m_hat||^2 + q Tr(Lambda_hat^-1 R^T R)) / 2`.
    pub rate: f64,
}

impl VmmbmResiduals {
    pub fn max(&self) -> f64 {
        self.precision.max(self.mean).max(self.shape).max(self.rate)
    }
}

/// Re-evaluate the four update equations for a fitted model on its training
/// data, in the singular basis of the design matrix.
pub fn fixed_point_residuals(model: &VmmbmModel, x: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<VmmbmResiduals> {
    check_dim("fixed_point_residuals rows", x.nrows(), t.nrows())?;
    check_dim("fixed_point_residuals outputs", model.output_dim(), t.ncols())?;
    let r = model.base.features(x)?;
    let data = SpectralData::new(&r, t)?;
    Ok(residuals_in_basis(model, &data))
}

fn residuals_in_basis(model: &VmmbmModel, data: &SpectralData) -> VmmbmResiduals {
    let ratio = model.a_hat / model.b_hat;
    let sp = &data.spectrum;
    let prior = &model.prior;
    let d = sp.gram_eigenvalues();
    let expected = d.map(|v| prior.lambda + ratio * v);
    // eigenvalues of the stored precision in the (re)computed basis
    let stored = model.lambda_hat();
    let lam = DVector::from_fn(d.len(), |i, _| sp.v.column(i).dot(&(&stored * sp.v.column(i))));
    let precision = (&lam - &expected).norm() / expected.norm();

    let c = if sp.v == model.spectrum.v {
        model.coef.clone()
    } else {
        sp.v.transpose() * &model.m_hat
    };
    let rhs = sp.v.transpose() * model.base.alpha() * prior.lambda + data.rt_t() * ratio;
    let mut lhs = c.clone();
    for (i, mut row) in lhs.row_iter_mut().enumerate() {
        row *= expected[i];
    }
    let mean = if rhs.norm() == 0.0 { lhs.norm() } else { rel_change(&lhs, &rhs) };

    let q = model.output_dim() as f64;
    let a = prior.a + 0.5 * q * data.n as f64;
    let shape = ((model.a_hat - a) / a).abs();

    let trace: f64 = d.iter().zip(expected.iter()).map(|(d, l)| d / l).sum();
    let b = prior.b + 0.5 * (data.residual_sq(&c) + q * trace);
    let rate = ((model.b_hat - b) / b).abs();
    VmmbmResiduals {
        precision,
        mean,
        shape,
        rate,
    }
}
