//! Seeded k-means used for inducing points and wide-autoencoder partitions.
//!
//! Initialization picks one seeded random row, then repeatedly adds the row
//! farthest from all chosen centres. Lloyd sweeps run until the assignment is
//! stable or [`MAX_SWEEPS`] is reached. An empty cluster is re-seeded with the
//! row farthest from its own centroid.

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{argmin, sq_dists};
use crate::rng::rng_from_seed;

pub const MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug)]
pub struct KMeans {
    /// k x n centroid matrix.
    pub centroids: DMatrix<f64>,
    /// Cluster index of every input row.
    pub labels: Vec<usize>,
    pub sweeps: usize,
}

impl KMeans {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.nrows()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Row indices belonging to each cluster, in input order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centroids.nrows()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeans> {
    let (n, dim) = x.shape();
    if k == 0 {
        return Err(Error::invalid("k-means needs at least one cluster"));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "k-means asked for {k} clusters from {n} points"
        )));
    }
    let mut centroids = farthest_point_init(x, k, seed);
    let mut labels = vec![usize::MAX; n];
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let d = sq_dists(x, &centroids);
        let mut changed = false;
        let mut row = vec![0.0; k];
        for i in 0..n {
            for (j, r) in row.iter_mut().enumerate() {
                *r = d[(i, j)];
            }
            let best = argmin(&row);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        // Re-seed empty clusters from the worst-fit rows.
        let mut own: Vec<f64> = (0..n).map(|i| d[(i, labels[i])]).collect();
        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        for j in 0..k {
            if sizes[j] == 0 {
                let far = argmax(&own);
                sizes[labels[far]] -= 1;
                labels[far] = j;
                sizes[j] = 1;
                own[far] = -1.0;
            }
        }
        centroids = DMatrix::zeros(k, dim);
        for (i, &l) in labels.iter().enumerate() {
            for c in 0..dim {
                centroids[(l, c)] += x[(i, c)];
            }
        }
        for (j, &s) in sizes.iter().enumerate() {
            let inv = 1.0 / s as f64;
            for c in 0..dim {
                centroids[(j, c)] *= inv;
            }
        }
    }
    Ok(KMeans {
        centroids,
        labels,
        sweeps,
    })
}

fn farthest_point_init(x: &DMatrix<f64>, k: usize, seed: u64) -> DMatrix<f64> {
    let (n, dim) = x.shape();
    let mut rng = rng_from_seed(seed);
    let first = rng.gen_range(0..n);
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = (0..n).map(|i| row_sq_dist(x, i, first)).collect();
    while chosen.len() < k {
        let next = argmax(&min_d);
        chosen.push(next);
        for (i, d) in min_d.iter_mut().enumerate() {
            let v = row_sq_dist(x, i, next);
            if v < *d {
                *d = v;
            }
        }
    }
    DMatrix::from_fn(k, dim, |j, c| x[(chosen[j], c)])
}

fn row_sq_dist(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..x.ncols() {
        let d = x[(i, c)] - x[(j, c)];
        s += d * d;
    }
    s
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
