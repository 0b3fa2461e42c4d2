use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{column_means, sym_eigen_desc};

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;
/// A Gram-Schmidt remainder shorter than this is considered linearly dependent.
const DEPENDENT_TOL: f64 = 1e-6;

/// Leading principal directions of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// m x p, orthonormal rows, ordered by decreasing variance.
    pub rows: DMatrix<f64>,
    /// Eigenvalue (population covariance) for each row; 0 for completion rows.
    pub variances: Vec<f64>,
    /// Number of trailing rows that come from an orthonormal completion
    /// because the data covariance has rank below m.
    pub completed: usize,
}

/// Top-`m` eigenvectors of the sample covariance of the rows of `y`, one per row.
pub fn pca_projection(y: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    pca_projection_with_diagnostics(y, m).map(|p| p.rows)
}

pub fn pca_projection_with_diagnostics(y: &DMatrix<f64>, m: usize) -> Result<Pca> {
    let (n, p) = y.shape();
    if m == 0 || m > p {
        return Err(Error::invalid(format!(
            "projection dimension must be in 1..={p}, got {m}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("PCA of an empty dataset"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("PCA input contains non-finite values"));
    }
    let mean = column_means(y);
    let mut centered = y.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }

    // Candidate directions with their variances, largest first.
    let mut candidates: Vec<(f64, DVector<f64>)> = Vec::new();
    if n < p {
        // Dual form: eigenvectors of the N x N Gram matrix mapped back.
        let gram = &centered * centered.transpose();
        let (vals, vecs) = sym_eigen_desc(gram);
        let top = vals.first().copied().unwrap_or(0.0).max(0.0);
        for (i, &v) in vals.iter().enumerate().take(m) {
            if v <= RANK_TOL * top || v <= 0.0 {
                break;
            }
            let dir = centered.transpose() * vecs.column(i) / v.sqrt();
            candidates.push((v / n as f64, dir));
        }
    } else {
        let cov = centered.transpose() * &centered / n as f64;
        let (vals, vecs) = sym_eigen_desc(cov);
        let top = vals.first().copied().unwrap_or(0.0).max(0.0);
        for (i, &v) in vals.iter().enumerate().take(m) {
            if v <= RANK_TOL * top || v <= 0.0 {
                break;
            }
            candidates.push((v, vecs.column(i).into_owned()));
        }
    }

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut variances = Vec::with_capacity(m);
    for (var, dir) in candidates {
        if let Some(v) = orthonormalize(&dir, &basis) {
            basis.push(v);
            variances.push(var);
        }
    }
    let from_data = basis.len();
    let mut axis = 0;
    while basis.len() < m && axis < p {
        let mut e = DVector::zeros(p);
        e[axis] = 1.0;
        if let Some(v) = orthonormalize(&e, &basis) {
            basis.push(v);
            variances.push(0.0);
        }
        axis += 1;
    }
    debug_assert_eq!(basis.len(), m);

    let mut rows = DMatrix::zeros(m, p);
    for (i, mut v) in basis.into_iter().enumerate() {
        fix_sign(&mut v);
        rows.row_mut(i).copy_from(&v.transpose());
    }
    Ok(Pca {
        rows,
        variances,
        completed: m - from_data,
    })
}

/// Two passes of modified Gram-Schmidt against `basis`; `None` if dependent.
fn orthonormalize(v: &DVector<f64>, basis: &[DVector<f64>]) -> Option<DVector<f64>> {
    let norm0 = v.norm();
    if norm0 == 0.0 {
        return None;
    }
    let mut u = v / norm0;
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(&u);
            u.axpy(-c, b, 1.0);
        }
    }
    let norm = u.norm();
    if norm < DEPENDENT_TOL {
        return None;
    }
    Some(u / norm)
}

/// Make the largest-magnitude entry positive (first one on ties).
fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    fn orthonormal_error(p: &DMatrix<f64>) -> f64 {
        (p * p.transpose() - DMatrix::identity(p.nrows(), p.nrows())).abs().max()
    }

    #[test]
    fn axis_aligned_covariance() {
        let mut y = gaussian(400, 2, 1);
        y.column_mut(0).scale_mut(2.0);
        let p = pca_projection(&y, 1).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 0.02 && p[(0, 1)].abs() < 0.2);
        assert!(p[(0, 0)] > 0.0);
    }

    #[test]
    fn full_basis_is_orthonormal() {
        let y = gaussian(30, 6, 2);
        let p = pca_projection(&y, 6).unwrap();
        assert!(orthonormal_error(&p) < 1e-8);
    }

    #[test]
    fn correlated_cloud_along_diagonal() {
        let mut rng = rng_from_seed(3);
        let mut y = DMatrix::zeros(500, 2);
        for i in 0..250 {
            let s: f64 = rng.sample(StandardNormal);
            let t: f64 = rng.sample(StandardNormal);
            y[(2 * i, 0)] = 3.0 * s + 0.3 * t;
            y[(2 * i, 1)] = 3.0 * s - 0.3 * t;
            y[(2 * i + 1, 0)] = 3.0 * s - 0.3 * t;
            y[(2 * i + 1, 1)] = 3.0 * s + 0.3 * t;
        }
        // closed-form leading eigenvector of the 2x2 scatter matrix
        let c = column_means(&y);
        let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
        for i in 0..500 {
            let u = y[(i, 0)] - c[0];
            let v = y[(i, 1)] - c[1];
            a += u * u;
            b += u * v;
            d += v * v;
        }
        let lambda = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let (ex, ey) = (b, lambda - a);
        let norm = (ex * ex + ey * ey).sqrt();
        let (ex, ey) = (ex / norm, ey / norm);
        let p = pca_projection(&y, 1).unwrap();
        let s = if ex.abs() >= ey.abs() { ex.signum() } else { ey.signum() };
        assert!((p[(0, 0)] - s * ex).abs() < 1e-8);
        assert!((p[(0, 1)] - s * ey).abs() < 1e-8);
        let r = 0.5f64.sqrt();
        assert!((p[(0, 0)] - r).abs() < 1e-3 && (p[(0, 1)] - r).abs() < 1e-3);
    }

    #[test]
    fn rank_deficiency_is_completed() {
        let y = gaussian(3, 8, 4);
        let pca = pca_projection_with_diagnostics(&y, 5).unwrap();
        assert_eq!(pca.completed, 3);
        assert!(orthonormal_error(&pca.rows) < 1e-8);
        let zeros = DMatrix::zeros(4, 3);
        let z = pca_projection_with_diagnostics(&zeros, 2).unwrap();
        assert_eq!(z.completed, 2);
        assert!(orthonormal_error(&z.rows) < 1e-8);
    }

    #[test]
    fn dual_and_primal_agree() {
        let y = gaussian(12, 10, 5);
        let wide = pca_projection(&y, 4).unwrap();
        // same data with duplicated rows goes through the primal branch
        let tall = crate::linalg::vstack(&[&y, &y]);
        let narrow = pca_projection(&tall, 4).unwrap();
        assert!((wide - narrow).abs().max() < 1e-8);
    }

    #[test]
    fn invalid_dimension() {
        let y = gaussian(5, 3, 0);
        assert!(pca_projection(&y, 0).is_err());
        assert!(pca_projection(&y, 4).is_err());
    }
}
