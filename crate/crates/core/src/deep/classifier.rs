use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::linalg::argmin;
use crate::par;
use crate::rng::derive_seed;

use super::wide::{fit_wide_cdmma, WideCdmmaModel};

const CLASS_SEED_TAG: u64 = 0x434c_4153;

/// One wide autoencoder per class; a query gets the label of the class that
/// reconstructs it best.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    per_class: Vec<WideCdmmaModel>,
}

impl ClassifierModel {
    pub fn from_classes(per_class: Vec<WideCdmmaModel>) -> Result<Self> {
        let Some(first) = per_class.first() else {
            return Err(Error::invalid("a classifier needs at least one class"));
        };
        let p = first.dim();
        for c in &per_class {
            check_dim("classifier class dimension", p, c.dim())?;
        }
        Ok(ClassifierModel { per_class })
    }

    pub fn per_class(&self) -> &[WideCdmmaModel] {
        &self.per_class
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn dim(&self) -> usize {
        self.per_class[0].dim()
    }

    /// Reconstructions of every row by every class: `(outputs[c], errors[c])`.
    pub fn class_outputs(&self, y: &DMatrix<f64>) -> Result<Vec<(DMatrix<f64>, Vec<f64>)>> {
        check_dim("classifier input", self.dim(), y.ncols())?;
        par::map_slice(&self.per_class, |w| w.filter_batch(y))
            .into_iter()
            .collect()
    }

    /// Squared reconstruction error of `y` under each class.
    pub fn class_errors(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim("classifier input", self.dim(), y.len())?;
        let ym = DMatrix::from_row_slice(1, y.len(), y);
        Ok(self.class_outputs(&ym)?.into_iter().map(|(_, e)| e[0]).collect())
    }

    /// 1-based labels for every row of `y`.
    pub fn classify_batch(&self, y: &DMatrix<f64>) -> Result<Vec<usize>> {
        let outs = self.class_outputs(y)?;
        Ok((0..y.nrows())
            .map(|i| {
                let e: Vec<f64> = outs.iter().map(|(_, err)| err[i]).collect();
                argmin(&e) + 1
            })
            .collect())
    }

    pub fn classify(&self, y: &[f64]) -> Result<usize> {
        Ok(argmin(&self.class_errors(y)?) + 1)
    }
}

/// Fit one wide autoencoder per class; `y_by_class[c]` holds the samples of class `c + 1`.
pub fn fit_classifier(
    y_by_class: &[DMatrix<f64>],
    n: usize,
    r_max: f64,
    layers: usize,
    seed: u64,
) -> Result<ClassifierModel> {
    if y_by_class.is_empty() {
        return Err(Error::invalid("a classifier needs at least one class"));
    }
    let p = y_by_class[0].ncols();
    for (c, y) in y_by_class.iter().enumerate() {
        if y.nrows() == 0 {
            return Err(Error::invalid(format!("class {} has no samples", c + 1)));
        }
        check_dim("classifier class dimension", p, y.ncols())?;
    }
    let per_class = par::try_map_range(y_by_class.len(), |c| {
        fit_wide_cdmma(&y_by_class[c], n, r_max, layers, derive_seed(seed, CLASS_SEED_TAG, c as u64))
            .map_err(|e| e.at_stage(format!("class {}", c + 1)))
    })?;
    ClassifierModel::from_classes(per_class)
}

/// Label (1-based) of the class whose wide autoencoder reconstructs `y` best.
pub fn classify(model: &ClassifierModel, y: &[f64]) -> Result<usize> {
    model.classify(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blob(n: usize, center: [f64; 2], seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, 2, |_, j| center[j] + rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn separable_blobs() {
        let classes = vec![blob(40, [-3.0, 0.0], 1), blob(40, [3.0, 0.0], 2)];
        let model = fit_classifier(&classes, 2, 0.5, 1, 0).unwrap();
        assert_eq!(model.num_classes(), 2);
        let mut correct = 0;
        for (c, y) in classes.iter().enumerate() {
            correct += model.classify_batch(y).unwrap().iter().filter(|&&l| l == c + 1).count();
        }
        assert!(correct as f64 / 80.0 >= 0.95, "accuracy {}", correct as f64 / 80.0);
    }

    #[test]
    fn batch_matches_single() {
        let classes = vec![blob(20, [0.0, 0.0], 3), blob(20, [2.0, 2.0], 4), blob(20, [-2.0, 2.0], 5)];
        let model = fit_classifier(&classes, 1, 1.0, 2, 7).unwrap();
        let q = blob(15, [0.0, 1.0], 6);
        let batch = model.classify_batch(&q).unwrap();
        for i in 0..15 {
            let row: Vec<f64> = q.row(i).iter().copied().collect();
            assert_eq!(batch[i], classify(&model, &row).unwrap());
        }
    }

    #[test]
    fn empty_class_rejected() {
        let classes = vec![blob(5, [0.0, 0.0], 1), DMatrix::zeros(0, 2)];
        assert!(matches!(fit_classifier(&classes, 1, 0.5, 1, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tie_goes_to_lowest_class() {
        let y = blob(10, [0.0, 0.0], 8);
        let model = fit_classifier(&[y.clone(), y.clone()], 2, 0.5, 1, 0).unwrap();
        let same = ClassifierModel::from_classes(vec![model.per_class()[0].clone(), model.per_class()[0].clone()]).unwrap();
        assert_eq!(same.classify(&[0.3, 0.1]).unwrap(), 1);
    }
}
