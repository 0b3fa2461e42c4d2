use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::{argmin, select_rows, sq_dists};
use crate::par;
use crate::rng::derive_seed;

use super::cdmma::{fit_cdmma, CdmmaModel};

/// Target number of samples per wide-autoencoder cell.
pub const CELL_SIZE: usize = 1000;
const CELL_SEED_TAG: u64 = 0x4345_4c4c;
const PARTITION_SEED_TAG: u64 = 0x5041_5254;

/// `ceil(N / 1000)`, at least 1.
pub fn num_cells(n: usize) -> usize {
    n.div_ceil(CELL_SIZE).max(1)
}

/// Parallel composition of autoencoders fitted on k-means cells.
#[derive(Clone, Debug, PartialEq)]
pub struct WideCdmmaModel {
    members: Vec<CdmmaModel>,
}

impl WideCdmmaModel {
    pub fn from_members(members: Vec<CdmmaModel>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::invalid("a wide autoencoder needs at least one member"));
        };
        let p = first.dim();
        for m in &members {
            check_dim("wide autoencoder member dimension", p, m.dim())?;
        }
        Ok(WideCdmmaModel { members })
    }

    pub fn members(&self) -> &[CdmmaModel] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    /// Best-member reconstructions and squared errors for every row of `y`.
    pub fn filter_batch(&self, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
        check_dim("wide autoencoder input", self.dim(), y.ncols())?;
        let per_member = self
            .members
            .iter()
            .map(|m| m.filter_batch(y))
            .collect::<Result<Vec<_>>>()?;
        let mut out = DMatrix::zeros(y.nrows(), y.ncols());
        let mut errs = Vec::with_capacity(y.nrows());
        for i in 0..y.nrows() {
            let e: Vec<f64> = per_member.iter().map(|m| m[i].error).collect();
            let s = argmin(&e);
            for (j, v) in per_member[s][i].output.iter().enumerate() {
                out[(i, j)] = *v;
            }
            errs.push(e[s]);
        }
        Ok((out, errs))
    }

    pub fn filter(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim("wide autoencoder input", self.dim(), y.len())?;
        let (out, _) = self.filter_batch(&DMatrix::from_row_slice(1, y.len(), y))?;
        Ok(out.iter().copied().collect())
    }
}

/// Partition `y` into `ceil(N/1000)` k-means cells and
/// fit one autoencoder per cell with `M_max = ceil(r_max * cell size)`.
pub fn fit_wide_cdmma(y: &DMatrix<f64>, n: usize, r_max: f64, layers: usize, seed: u64) -> Result<WideCdmmaModel> {
    let rows = y.nrows();
    if rows == 0 {
        return Err(Error::invalid("cannot fit a wide autoencoder on an empty dataset"));
    }
    if !(r_max > 0.0 && r_max <= 1.0) {
        return Err(Error::invalid(format!("r_max must be in (0, 1], got {r_max}")));
    }
    let cells = partition(y, num_cells(rows), derive_seed(seed, PARTITION_SEED_TAG, 0))?;
    let members = par::try_map_range(cells.len(), |s| {
        let part = select_rows(y, &cells[s]);
        let m_max = ((r_max * part.nrows() as f64).ceil() as usize).clamp(1, part.nrows());
        fit_cdmma(&part, n, m_max, layers, derive_seed(seed, CELL_SEED_TAG, s as u64))
            .map_err(|e| e.at_stage(format!("cell {}", s + 1)))
    })?;
    WideCdmmaModel::from_members(members)
}

/// Row indices of each cell; cells of fewer than 2 rows are merged into the
/// nearest (by centroid) cell that has at least 2.
fn partition(y: &DMatrix<f64>, cells: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if cells == 1 {
        return Ok(vec![(0..y.nrows()).collect()]);
    }
    let km = kmeans(y, cells, seed)?;
    let mut groups = km.members();
    let good: Vec<usize> = (0..groups.len()).filter(|&s| groups[s].len() >= 2).collect();
    if good.is_empty() {
        return Ok(vec![(0..y.nrows()).collect()]);
    }
    let d = sq_dists(&km.centroids, &km.centroids);
    for s in 0..groups.len() {
        if groups[s].len() >= 2 {
            continue;
        }
        let dists: Vec<f64> = good.iter().map(|&g| d[(s, g)]).collect();
        let target = good[argmin(&dists)];
        let moved = std::mem::take(&mut groups[s]);
        groups[target].extend(moved);
    }
    let mut out: Vec<Vec<usize>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    for g in &mut out {
        g.sort_unstable();
    }
    Ok(out)
}

/// Reconstruction of `y` by the best-reconstructing member.
pub fn wide_filter(model: &WideCdmmaModel, y: &[f64]) -> Result<Vec<f64>> {
    model.filter(y)
}
