//! Layered membership-mapping autoencoders and the reconstruction classifier.

mod cdmma;
mod classifier;
mod pca;
mod wide;

pub use cdmma::{cdmma_filter, fit_cdmma, layer_dims, CdmmaModel, LayerFilter};
pub use classifier::{classify, fit_classifier, ClassifierModel};
pub use pca::{pca_projection, pca_projection_with_diagnostics, Pca};
pub use wide::{fit_wide_cdmma, num_cells, wide_filter, WideCdmmaModel};
