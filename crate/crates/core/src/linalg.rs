//! Dense linear-algebra helpers shared by every model.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::par;

/// Initial diagonal jitter, relative to `trace / dim`.
pub const JITTER_START: f64 = 1e-8;
/// Largest diagonal jitter tried before giving up, relative to `trace / dim`.
pub const JITTER_MAX: f64 = 1e-2;

/// Above this input dimension, squared distances are formed through a matrix
/// product instead of a direct per-coordinate loop.
const DIRECT_DISTANCE_MAX_DIM: usize = 32;

/// Cholesky factor of a symmetric positive (semi-)definite matrix with
/// additive diagonal jitter.
///
/// The matrix is factored as is first; on failure the jitter starts at
/// `1e-8 * trace/dim` and doubles until `1e-2 * trace/dim`.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::invalid(format!(
                "SPD factorization of a non-square {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        if n == 0 {
            return Err(Error::invalid("SPD factorization of an empty matrix"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("matrix to factor has non-finite entries"));
        }
        let trace = a.trace();
        let scale = if trace > 0.0 { trace / n as f64 } else { 1.0 };
        if let Some(chol) = a.clone().cholesky() {
            return Ok(SpdFactor { chol, jitter: 0.0 });
        }
        let mut jitter = JITTER_START * scale;
        let max = JITTER_MAX * scale;
        loop {
            let mut m = a.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = m.cholesky() {
                return Ok(SpdFactor { chol, jitter });
            }
            jitter *= 2.0;
            if jitter > max * (1.0 + 1e-12) {
                return Err(Error::numerical(format!(
                    "matrix of size {n} not positive definite even with jitter {:.3e} (trace/dim {:.3e})",
                    max, scale
                )));
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `log |A + jitter I|`.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `L^{-1} B` for the lower Cholesky factor `L`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.chol.l();
        l.solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }
}

/// Eigen-decomposition of a symmetric matrix sorted by decreasing eigenvalue.
///
/// Ties keep the solver's original order. Eigenvectors are the columns of the
/// returned matrix.
pub fn sym_eigen_desc(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Squared weighted distances `sum_k w_k (x_k - a_k)^2` between rows of `x`
/// (N x n) and rows of `a` (M x n). Returns N x M.
pub fn weighted_sq_dists(x: &DMatrix<f64>, a: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let (n_rows, dim) = x.shape();
    let m_rows = a.nrows();
    debug_assert_eq!(a.ncols(), dim);
    debug_assert_eq!(w.len(), dim);
    let mut out = DMatrix::<f64>::zeros(n_rows, m_rows);
    if n_rows == 0 || m_rows == 0 {
        return out;
    }
    if dim <= DIRECT_DISTANCE_MAX_DIM {
        par::for_each_chunk_mut(out.as_mut_slice(), n_rows, |j, col| {
            for (i, d) in col.iter_mut().enumerate() {
                let mut s = 0.0;
                for k in 0..dim {
                    let diff = x[(i, k)] - a[(j, k)];
                    s += w[k] * diff * diff;
                }
                *d = s;
            }
        });
        return out;
    }
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let xs = scale_columns(x, &sw);
    let as_ = scale_columns(a, &sw);
    let xn: Vec<f64> = (0..n_rows).map(|i| xs.row(i).norm_squared()).collect();
    let an: Vec<f64> = (0..m_rows).map(|j| as_.row(j).norm_squared()).collect();
    let cross = &xs * as_.transpose();
    par::for_each_chunk_mut(out.as_mut_slice(), n_rows, |j, col| {
        for (i, d) in col.iter_mut().enumerate() {
            *d = (xn[i] + an[j] - 2.0 * cross[(i, j)]).max(0.0);
        }
    });
    out
}

/// Unweighted squared Euclidean distances between rows.
pub fn sq_dists(x: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let w = vec![1.0; x.ncols()];
    weighted_sq_dists(x, a, &w)
}

fn scale_columns(x: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = x.clone();
    for (k, mut col) in out.column_iter_mut().enumerate() {
        col *= s[k];
    }
    out
}

/// Column means of an N x p matrix.
pub fn column_means(y: &DMatrix<f64>) -> DVector<f64> {
    let n = y.nrows().max(1) as f64;
    DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.sum() / n))
}

/// Population variance (divide by N) of every column.
pub fn column_variances(y: &DMatrix<f64>) -> Vec<f64> {
    let n = y.nrows();
    if n == 0 {
        return vec![0.0; y.ncols()];
    }
    y.column_iter()
        .map(|c| {
            let mean = c.sum() / n as f64;
            c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
        })
        .collect()
}

/// Copy selected rows of a matrix.
pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Stack matrices with equal column counts vertically.
pub fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        debug_assert_eq!(p.ncols(), cols);
        out.rows_mut(r, p.nrows()).copy_from(*p);
        r += p.nrows();
    }
    out
}

/// Squared Euclidean norm of the difference of two slices.
pub fn sq_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the smallest value; ties go to the lowest index. NaN never wins.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}
