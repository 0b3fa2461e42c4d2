use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::linalg::argmin;
use crate::mm::{fit_membership_mapping, MembershipMappingModel};
use crate::rng::derive_seed;

use super::pca::pca_projection;

const LAYER_SEED_TAG: u64 = 0x4c41_5945;

/// Subspace dimension of every layer: `max(n - l + 1, 1)` for `l = 1..=L`.
pub fn layer_dims(n: usize, layers: usize) -> Vec<usize> {
    (1..=layers).map(|l| (n + 1).saturating_sub(l).max(1)).collect()
}

/// A stack of projected membership-mapping autoencoders.
#[derive(Clone, Debug, PartialEq)]
pub struct CdmmaModel {
    layers: Vec<MembershipMappingModel>,
    projections: Vec<DMatrix<f64>>,
}

/// Per-query result of running every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerFilter {
    /// Reconstruction of the best layer.
    pub output: Vec<f64>,
    /// 1-based index of the best layer.
    pub layer: usize,
    pub error: f64,
}

impl CdmmaModel {
    pub fn from_parts(layers: Vec<MembershipMappingModel>, projections: Vec<DMatrix<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an autoencoder needs at least one layer"));
        }
        check_dim("autoencoder projections", layers.len(), projections.len())?;
        let p = projections[0].ncols();
        for (mm, proj) in layers.iter().zip(&projections) {
            check_dim("autoencoder projection width", p, proj.ncols())?;
            check_dim("autoencoder layer input", proj.nrows(), mm.input_dim())?;
            check_dim("autoencoder layer output", p, mm.output_dim())?;
        }
        Ok(CdmmaModel { layers, projections })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Data dimension p.
    pub fn dim(&self) -> usize {
        self.projections[0].ncols()
    }

    pub fn layers(&self) -> &[MembershipMappingModel] {
        &self.layers
    }

    pub fn projections(&self) -> &[DMatrix<f64>] {
        &self.projections
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.projections.iter().map(|p| p.nrows()).collect()
    }

    /// Reconstructions of every layer for every row of `y`: one N x p matrix per layer.
    pub fn layer_outputs(&self, y: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        check_dim("autoencoder input", self.dim(), y.ncols())?;
        let mut outs = Vec::with_capacity(self.layers.len());
        for (l, (mm, proj)) in self.layers.iter().zip(&self.projections).enumerate() {
            let prev = if l == 0 { y } else { &outs[l - 1] };
            let x = prev * proj.transpose();
            let out = mm.predict_batch(&x)?;
            outs.push(out);
        }
        Ok(outs)
    }

    /// Best-layer reconstruction of every row of `y`.
    pub fn filter_batch(&self, y: &DMatrix<f64>) -> Result<Vec<LayerFilter>> {
        let outs = self.layer_outputs(y)?;
        Ok((0..y.nrows())
            .map(|i| {
                let errs: Vec<f64> = outs.iter().map(|o| (o.row(i) - y.row(i)).norm_squared()).collect();
                let best = argmin(&errs);
                LayerFilter {
                    output: outs[best].row(i).iter().copied().collect(),
                    layer: best + 1,
                    error: errs[best],
                }
            })
            .collect())
    }

    pub fn filter(&self, y: &[f64]) -> Result<LayerFilter> {
        check_dim("autoencoder input", self.dim(), y.len())?;
        let ym = DMatrix::from_row_slice(1, y.len(), y);
        Ok(self.filter_batch(&ym)?.remove(0))
    }
}

/// Fit an `L`-layer autoencoder on the rows of `y` with base subspace dimension `n`.
pub fn fit_cdmma(y: &DMatrix<f64>, n: usize, m_max: usize, layers: usize, seed: u64) -> Result<CdmmaModel> {
    let (rows, p) = y.shape();
    if layers == 0 {
        return Err(Error::invalid("layer count must be at least 1"));
    }
    if n == 0 || n > p {
        return Err(Error::invalid(format!("subspace dimension must be in 1..={p}, got {n}")));
    }
    if m_max == 0 || m_max > rows {
        return Err(Error::invalid(format!("M_max must be in 1..={rows}, got {m_max}")));
    }
    let dims = layer_dims(n, layers);
    // Every layer projects onto leading directions of the same data.
    let basis = pca_projection(y, dims[0])?;
    let mut models = Vec::with_capacity(layers);
    let mut projections = Vec::with_capacity(layers);
    let mut prev_out: Option<DMatrix<f64>> = None;
    let mut m_cap = m_max;
    for (l, &d) in dims.iter().enumerate() {
        let proj = basis.rows(0, d).into_owned();
        let input = prev_out.as_ref().unwrap_or(y);
        let x = input * proj.transpose();
        let mm = fit_membership_mapping(&x, y, m_cap, derive_seed(seed, LAYER_SEED_TAG, l as u64))
            .map_err(|e| e.at_stage(format!("layer {}", l + 1)))?;
        m_cap = mm.m();
        prev_out = Some(mm.predict_batch(&x)?);
        models.push(mm);
        projections.push(proj);
    }
    CdmmaModel::from_parts(models, projections)
}

/// Best-layer reconstruction of `y` and the 1-based index of that layer.
pub fn cdmma_filter(model: &CdmmaModel, y: &[f64]) -> Result<(Vec<f64>, usize)> {
    let f = model.filter(y)?;
    Ok((f.output, f.layer))
}
