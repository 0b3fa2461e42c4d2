//! End-to-end privacy-preserving semi-supervised transfer learning run with
//! privacy-leakage, interpretability and transferability measures.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index;

use crate::deep::{fit_classifier, pca_projection, ClassifierModel};
use crate::dp::{dp_perturb, fit_private_classifier, DpParams};
use crate::error::{check_dim, Error, Result};
use crate::leakage::{estimate_leakage, LeakageEstimate};
use crate::linalg::{argmin, select_rows, vstack};
use crate::mm::{fit_membership_mapping, MembershipMappingModel};
use crate::rng::{derive_seed, rng_from_seed};
use crate::vmmbm::{default_m_max, VmmbmModel};

mod tags {
    pub const DP: u64 = 1;
    pub const SOURCE: u64 = 2;
    pub const TARGET: u64 = 3;
    pub const S2T: u64 = 4;
    pub const PRIVACY: u64 = 5;
    pub const INTERP: u64 = 6;
    pub const TRANSFER: u64 = 7;
    pub const SUBSAMPLE: u64 = 8;
}

/// Principal-subspace bases of the source and target domains.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceMaps {
    /// n_st x p_sr
    pub v_src: DMatrix<f64>,
    /// n_st x p_tg
    pub v_tgt: DMatrix<f64>,
    pub n_st: usize,
}

impl SubspaceMaps {
    pub fn source_dim(&self) -> usize {
        self.v_src.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.v_tgt.ncols()
    }

    /// Map every row of `y` (N x p_tg) into the source space.
    pub fn align_batch(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("align_target", self.target_dim(), y.ncols())?;
        if self.source_dim() == self.target_dim() {
            return Ok(y.clone());
        }
        Ok(y * self.v_tgt.transpose() * &self.v_src)
    }
}

/// `n_st = min(ceil(p_sr / 2), p_tg)`.
pub fn default_subspace_dim(p_sr: usize, p_tg: usize) -> usize {
    p_sr.div_ceil(2).min(p_tg).max(1)
}

pub fn build_subspace_maps(y_src_plus: &DMatrix<f64>, y_tgt: &DMatrix<f64>, n_st: usize) -> Result<SubspaceMaps> {
    let limit = y_src_plus.ncols().min(y_tgt.ncols());
    if n_st == 0 || n_st > limit {
        return Err(Error::invalid(format!("subspace dimension must be in 1..={limit}, got {n_st}")));
    }
    Ok(SubspaceMaps {
        v_src: pca_projection(y_src_plus, n_st)?,
        v_tgt: pca_projection(y_tgt, n_st)?,
        n_st,
    })
}

pub fn align_target(y_tgt: &[f64], maps: &SubspaceMaps) -> Result<Vec<f64>> {
    check_dim("align_target", maps.target_dim(), y_tgt.len())?;
    let y = DMatrix::from_row_slice(1, y_tgt.len(), y_tgt);
    Ok(maps.align_batch(&y)?.iter().copied().collect())
}

/// Pipeline hyperparameters. `None` dimensions are derived from the data.
#[derive(Clone, Debug, PartialEq)]
pub struct TaiConfig {
    pub dp: DpParams,
    /// Source classifier subspace dimension; default `min(20, p_sr)`.
    pub source_dim: Option<usize>,
    pub source_r_max: f64,
    pub source_layers: usize,
    /// Initial target classifier subspace dimension; default
    /// `min(20, min_c N_c - 1)`, at least 1.
    pub target_initial_dim: Option<usize>,
    pub target_initial_r_max: f64,
    pub target_initial_layers: usize,
    pub target_r_max: f64,
    pub target_layers: usize,
    /// Subspace dimensions of the self-training refits; its length is `it_max`.
    /// Default `min(5, p_sr), min(10, p_sr), min(15, p_sr), min(20, p_sr)`.
    pub n_sequence: Option<Vec<usize>>,
    /// Subspace alignment dimension; default `min(ceil(p_sr / 2), p_tg)`.
    pub subspace_dim: Option<usize>,
    /// Largest number of sample pairs fed to each leakage estimate.
    pub measure_sample_cap: usize,
}

impl TaiConfig {
    pub fn new(dp: DpParams) -> Self {
        TaiConfig {
            dp,
            source_dim: None,
            source_r_max: 0.5,
            source_layers: 5,
            target_initial_dim: None,
            target_initial_r_max: 1.0,
            target_initial_layers: 1,
            target_r_max: 0.5,
            target_layers: 1,
            n_sequence: None,
            subspace_dim: None,
            measure_sample_cap: 5000,
        }
    }

    pub fn it_max(&self) -> usize {
        self.n_sequence.as_ref().map_or(4, |s| s.len())
    }

    fn n_sequence_for(&self, p: usize) -> Vec<usize> {
        match &self.n_sequence {
            Some(s) => s.iter().map(|&n| n.clamp(1, p)).collect(),
            None => [5, 10, 15, 20].iter().map(|&n| n.min(p)).collect(),
        }
    }
}

/// Target classifier with the pseudo-labels it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetTraining {
    pub classifier: ClassifierModel,
    /// Pseudo-labels (1-based) of the unlabeled pool used for refit k, for k = 1..=it_max.
    pub pseudo_labels: Vec<Vec<usize>>,
    /// Pseudo-labels assigned by the final classifier.
    pub final_labels: Vec<usize>,
}

impl TargetTraining {
    /// Labeled samples of each class joined with the unlabeled rows pseudo-labeled as that class.
    pub fn class_sets(&self, labeled: &[DMatrix<f64>], unlabeled: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        augment(labeled, unlabeled, &self.final_labels)
    }
}

fn augment(labeled: &[DMatrix<f64>], unlabeled: &DMatrix<f64>, labels: &[usize]) -> Vec<DMatrix<f64>> {
    labeled
        .iter()
        .enumerate()
        .map(|(c, l)| {
            let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c + 1).collect();
            if rows.is_empty() {
                l.clone()
            } else {
                vstack(&[l, &select_rows(unlabeled, &rows)])
            }
        })
        .collect()
}

pub fn fit_target_classifier(
    labeled: &[DMatrix<f64>],
    unlabeled: &DMatrix<f64>,
    cfg: &TaiConfig,
    seed: u64,
) -> Result<ClassifierModel> {
    fit_target_classifier_traced(labeled, unlabeled, cfg, seed).map(|t| t.classifier)
}

/// Initial classifier on the labeled targets, then self-training refits on
/// labeled plus pseudo-labeled samples.
pub fn fit_target_classifier_traced(
    labeled: &[DMatrix<f64>],
    unlabeled: &DMatrix<f64>,
    cfg: &TaiConfig,
    seed: u64,
) -> Result<TargetTraining> {
    if labeled.is_empty() {
        return Err(Error::invalid("no target classes given"));
    }
    let p = labeled[0].ncols();
    let min_count = labeled.iter().map(|c| c.nrows()).min().unwrap_or(0);
    if min_count == 0 {
        return Err(Error::invalid("every class needs at least one labeled target sample"));
    }
    if unlabeled.nrows() > 0 {
        check_dim("unlabeled target dimension", p, unlabeled.ncols())?;
    }
    let n0 = cfg
        .target_initial_dim
        .unwrap_or_else(|| 20.min(min_count.saturating_sub(1)))
        .clamp(1, p);
    let mut classifier = fit_classifier(
        labeled,
        n0,
        cfg.target_initial_r_max,
        cfg.target_initial_layers,
        derive_seed(seed, tags::TARGET, 0),
    )?;
    let mut history = Vec::new();
    for (k, n) in cfg.n_sequence_for(p).into_iter().enumerate() {
        let labels = pseudo_label(&classifier, unlabeled)?;
        let sets = augment(labeled, unlabeled, &labels);
        history.push(labels);
        classifier = fit_classifier(&sets, n, cfg.target_r_max, cfg.target_layers, derive_seed(seed, tags::TARGET, k as u64 + 1))?;
    }
    let final_labels = pseudo_label(&classifier, unlabeled)?;
    Ok(TargetTraining {
        classifier,
        pseudo_labels: history,
        final_labels,
    })
}

fn pseudo_label(classifier: &ClassifierModel, unlabeled: &DMatrix<f64>) -> Result<Vec<usize>> {
    if unlabeled.nrows() == 0 {
        return Ok(Vec::new());
    }
    classifier.classify_batch(unlabeled)
}

/// Regression from source-autoencoder reconstructions to aligned target samples,
/// with `target_sets[c]` holding the samples assigned to class `c + 1`.
pub fn fit_source2target(
    source_classifier: &ClassifierModel,
    target_sets: &[DMatrix<f64>],
    seed: u64,
) -> Result<MembershipMappingModel> {
    check_dim("source2target classes", source_classifier.num_classes(), target_sets.len())?;
    let mut inputs = Vec::with_capacity(target_sets.len());
    for (c, set) in target_sets.iter().enumerate() {
        if set.nrows() == 0 {
            continue;
        }
        let (rec, _) = source_classifier.per_class()[c].filter_batch(set)?;
        inputs.push((rec, set.clone()));
    }
    if inputs.is_empty() {
        return Err(Error::invalid("source2target training set is empty"));
    }
    let x = vstack(&inputs.iter().map(|(r, _)| r).collect::<Vec<_>>());
    let y = vstack(&inputs.iter().map(|(_, s)| s).collect::<Vec<_>>());
    fit_membership_mapping(&x, &y, default_m_max(x.nrows()), seed)
}

/// Per-class candidate errors: target reconstruction, source reconstruction
/// mapped through the source2target model, and raw source reconstruction.
pub fn multitask_errors_batch(
    y: &DMatrix<f64>,
    tgt: &ClassifierModel,
    src: &ClassifierModel,
    s2t: &MembershipMappingModel,
) -> Result<Vec<Vec<[f64; 3]>>> {
    check_dim("multitask classes", tgt.num_classes(), src.num_classes())?;
    let t_out = tgt.class_outputs(y)?;
    let s_out = src.class_outputs(y)?;
    let mapped = s_out
        .iter()
        .map(|(rec, _)| s2t.predict_batch(rec))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..y.nrows())
        .map(|i| {
            (0..tgt.num_classes())
                .map(|c| {
                    let through = (mapped[c].row(i) - y.row(i)).norm_squared();
                    [t_out[c].1[i], through, s_out[c].1[i]]
                })
                .collect()
        })
        .collect())
}

fn multitask_argmin(errs: &[[f64; 3]]) -> usize {
    let per_class: Vec<f64> = errs.iter().map(|e| e[argmin(e)]).collect();
    argmin(&per_class) + 1
}

pub fn multitask_predict_batch(
    y: &DMatrix<f64>,
    tgt: &ClassifierModel,
    src: &ClassifierModel,
    s2t: &MembershipMappingModel,
) -> Result<Vec<usize>> {
    Ok(multitask_errors_batch(y, tgt, src, s2t)?
        .iter()
        .map(|e| multitask_argmin(e))
        .collect())
}

/// 1-based class of an aligned target sample.
pub fn multitask_predict(
    y_aligned: &[f64],
    tgt: &ClassifierModel,
    src: &ClassifierModel,
    s2t: &MembershipMappingModel,
) -> Result<usize> {
    let y = DMatrix::from_row_slice(1, y_aligned.len(), y_aligned);
    Ok(multitask_predict_batch(&y, tgt, src, s2t)?[0])
}

/// Inputs of one pipeline run. Rows of `private` and `interpretable` are
/// aligned with the class-major concatenation of `source`.
#[derive(Clone, Copy, Debug)]
pub struct TaiInputs<'a> {
    pub source: &'a [DMatrix<f64>],
    pub private: &'a DMatrix<f64>,
    pub interpretable: &'a DMatrix<f64>,
    pub target_labeled: &'a [DMatrix<f64>],
    pub target_unlabeled: &'a DMatrix<f64>,
    /// True labels of the unlabeled targets, used only for the accuracies.
    pub eval_labels: Option<&'a [usize]>,
}

/// Accuracies on the unlabeled targets (present when evaluation labels are given).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accuracies {
    pub source: Option<f64>,
    pub target: Option<f64>,
    pub multitask: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TaiReport {
    pub privacy_leakage: f64,
    pub interpretability: f64,
    pub transferability: f64,
    pub privacy_estimate: LeakageEstimate,
    pub interpretability_estimate: LeakageEstimate,
    pub transferability_estimate: LeakageEstimate,
    pub source_classifier: ClassifierModel,
    pub target_classifier: ClassifierModel,
    pub source2target: MembershipMappingModel,
    pub maps: SubspaceMaps,
    /// Multi-task labels of the unlabeled targets.
    pub predictions: Vec<usize>,
    pub accuracies: Accuracies,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(&'static str, f64)>,
}

impl TaiReport {
    /// Inverse model from released data to private variables.
    pub fn adversary(&self) -> &VmmbmModel {
        &self.privacy_estimate.model
    }

    /// Inverse model from released data to interpretable parameters.
    pub fn interpreter(&self) -> &VmmbmModel {
        &self.interpretability_estimate.model
    }
}

fn accuracy(pred: &[usize], truth: Option<&[usize]>) -> Option<f64> {
    let truth = truth?;
    if truth.is_empty() {
        return None;
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Some(hits as f64 / truth.len() as f64)
}

fn capped(x: &DMatrix<f64>, t: &DMatrix<f64>, cap: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    if x.nrows() <= cap {
        return (x.clone(), t.clone());
    }
    let mut rng = rng_from_seed(seed);
    let mut rows = index::sample(&mut rng, x.nrows(), cap).into_vec();
    rows.sort_unstable();
    (select_rows(x, &rows), select_rows(t, &rows))
}

fn validate(inputs: &TaiInputs<'_>) -> Result<(usize, usize)> {
    let c = inputs.source.len();
    if c == 0 {
        return Err(Error::invalid("no source classes given"));
    }
    let p_sr = inputs.source[0].ncols();
    for (i, s) in inputs.source.iter().enumerate() {
        if s.nrows() == 0 {
            return Err(Error::invalid(format!("source class {} is empty", i + 1)));
        }
        check_dim("source dimension", p_sr, s.ncols())?;
    }
    let n_src: usize = inputs.source.iter().map(|s| s.nrows()).sum();
    check_dim("private variable rows", n_src, inputs.private.nrows())?;
    check_dim("interpretable parameter rows", n_src, inputs.interpretable.nrows())?;
    check_dim("target classes", c, inputs.target_labeled.len())?;
    let p_tg = inputs.target_labeled[0].ncols();
    for t in inputs.target_labeled {
        check_dim("target dimension", p_tg, t.ncols())?;
    }
    if inputs.target_unlabeled.nrows() > 0 {
        check_dim("unlabeled target dimension", p_tg, inputs.target_unlabeled.ncols())?;
    }
    if let Some(l) = inputs.eval_labels {
        check_dim("evaluation labels", inputs.target_unlabeled.nrows(), l.len())?;
    }
    Ok((p_sr, p_tg))
}

/// Run the whole pipeline. Errors carry the name of the failing stage.
pub fn run_tai(inputs: &TaiInputs<'_>, cfg: &TaiConfig, seed: u64) -> Result<TaiReport> {
    let (p_sr, p_tg) = validate(inputs).map_err(|e| e.at_stage("input"))?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, f64)>| {
        timings.push((name, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    // Noisy release of the source data, one draw per entry.
    let flat = vstack(&inputs.source.iter().collect::<Vec<_>>());
    let y_plus = dp_perturb(&flat, &cfg.dp, derive_seed(seed, tags::DP, 0));
    let mut y_plus_by_class = Vec::with_capacity(inputs.source.len());
    let mut r = 0;
    for s in inputs.source {
        y_plus_by_class.push(y_plus.rows(r, s.nrows()).into_owned());
        r += s.nrows();
    }
    lap("perturb", &mut timings);

    let n_src = cfg.source_dim.unwrap_or(20.min(p_sr)).clamp(1, p_sr);
    let source_classifier = fit_private_classifier(
        &y_plus_by_class,
        n_src,
        cfg.source_r_max,
        cfg.source_layers,
        derive_seed(seed, tags::SOURCE, 0),
    )
    .map_err(|e| e.at_stage("source classifier"))?;
    lap("source classifier", &mut timings);

    let all_targets = vstack(
        &inputs
            .target_labeled
            .iter()
            .chain(std::iter::once(inputs.target_unlabeled))
            .filter(|m| m.nrows() > 0)
            .collect::<Vec<_>>(),
    );
    let n_st = cfg.subspace_dim.unwrap_or_else(|| default_subspace_dim(p_sr, p_tg));
    let maps = build_subspace_maps(&y_plus, &all_targets, n_st).map_err(|e| e.at_stage("subspace maps"))?;
    let labeled_sr = inputs
        .target_labeled
        .iter()
        .map(|t| maps.align_batch(t))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("alignment"))?;
    let unlabeled_sr = if inputs.target_unlabeled.nrows() > 0 {
        maps.align_batch(inputs.target_unlabeled).map_err(|e| e.at_stage("alignment"))?
    } else {
        DMatrix::zeros(0, p_sr)
    };
    lap("alignment", &mut timings);

    let target = fit_target_classifier_traced(&labeled_sr, &unlabeled_sr, cfg, derive_seed(seed, tags::TARGET, 0))
        .map_err(|e| e.at_stage("target classifier"))?;
    lap("target classifier", &mut timings);

    let sets = target.class_sets(&labeled_sr, &unlabeled_sr);
    let source2target = fit_source2target(&source_classifier, &sets, derive_seed(seed, tags::S2T, 0))
        .map_err(|e| e.at_stage("source2target"))?;
    lap("source2target", &mut timings);

    let cap = cfg.measure_sample_cap.max(4);
    let (px, pt) = capped(&y_plus, inputs.private, cap, derive_seed(seed, tags::SUBSAMPLE, 0));
    let privacy_estimate = estimate_leakage(&px, &pt, derive_seed(seed, tags::PRIVACY, 0))
        .map_err(|e| e.at_stage("privacy leakage"))?;
    lap("privacy leakage", &mut timings);

    let (ix, it) = capped(&y_plus, inputs.interpretable, cap, derive_seed(seed, tags::SUBSAMPLE, 1));
    let interpretability_estimate = estimate_leakage(&ix, &it, derive_seed(seed, tags::INTERP, 0))
        .map_err(|e| e.at_stage("interpretability"))?;
    lap("interpretability", &mut timings);

    // Feature pairs over every target sample, labeled ones included,
    // filtered by the autoencoders of the multi-task class.
    let all_sr = vstack(&labeled_sr.iter().chain(std::iter::once(&unlabeled_sr)).collect::<Vec<_>>());
    let classes = multitask_predict_batch(&all_sr, &target.classifier, &source_classifier, &source2target)
        .map_err(|e| e.at_stage("multi-task prediction"))?;
    let (tg_feat, sr_feat) = class_features(&all_sr, &classes, &target.classifier, &source_classifier)
        .map_err(|e| e.at_stage("transferability"))?;
    let (tx, tt) = capped(&tg_feat, &sr_feat, cap, derive_seed(seed, tags::SUBSAMPLE, 2));
    let transferability_estimate = estimate_leakage(&tx, &tt, derive_seed(seed, tags::TRANSFER, 0))
        .map_err(|e| e.at_stage("transferability"))?;
    lap("transferability", &mut timings);

    let n_lab = all_sr.nrows() - unlabeled_sr.nrows();
    let predictions = classes[n_lab..].to_vec();
    let accuracies = match inputs.eval_labels {
        Some(truth) if !predictions.is_empty() => Accuracies {
            source: accuracy(&source_classifier.classify_batch(&unlabeled_sr)?, Some(truth)),
            target: accuracy(&target.final_labels, Some(truth)),
            multitask: accuracy(&predictions, Some(truth)),
        },
        _ => Accuracies::default(),
    };

    Ok(TaiReport {
        privacy_leakage: privacy_estimate.value,
        interpretability: interpretability_estimate.value,
        transferability: transferability_estimate.value,
        privacy_estimate,
        interpretability_estimate,
        transferability_estimate,
        source_classifier,
        target_classifier: target.classifier,
        source2target,
        maps,
        predictions,
        accuracies,
        timings,
    })
}

/// `(WD(y; P_c^tg), WD(y; P_c^sr))` for every row with its class `c`.
fn class_features(
    y: &DMatrix<f64>,
    classes: &[usize],
    tgt: &ClassifierModel,
    src: &ClassifierModel,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut tg = DMatrix::zeros(y.nrows(), y.ncols());
    let mut sr = DMatrix::zeros(y.nrows(), y.ncols());
    for c in 1..=tgt.num_classes() {
        let rows: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == c).collect();
        if rows.is_empty() {
            continue;
        }
        let part = select_rows(y, &rows);
        let (t_rec, _) = tgt.per_class()[c - 1].filter_batch(&part)?;
        let (s_rec, _) = src.per_class()[c - 1].filter_batch(&part)?;
        for (k, &i) in rows.iter().enumerate() {
            tg.row_mut(i).copy_from(&t_rec.row(k));
            sr.row_mut(i).copy_from(&s_rec.row(k));
        }
    }
    Ok((tg, sr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blob(n: usize, center: &[f64], spread: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, center.len(), |_, j| center[j] + spread * rng.sample::<f64, _>(StandardNormal))
    }

    fn orthonormal_rows(v: &DMatrix<f64>) -> bool {
        (v * v.transpose() - DMatrix::identity(v.nrows(), v.nrows())).abs().max() < 1e-8
    }

    fn noiseless() -> TaiConfig {
        TaiConfig::new(DpParams::new(1.0, f64::INFINITY, 1e-5).unwrap())
    }

    #[test]
    fn identical_datasets_give_identical_maps() {
        let y = blob(40, &[0.0, 1.0, -1.0, 2.0], 1.0, 1);
        let maps = build_subspace_maps(&y, &y, 2).unwrap();
        assert!((&maps.v_src - &maps.v_tgt).abs().max() < 1e-8);
        assert!(orthonormal_rows(&maps.v_src));
        assert!(orthonormal_rows(&maps.v_tgt));
    }

    #[test]
    fn axis_aligned_covariance_gives_axes() {
        // symmetric +/- offsets along each axis: covariance exactly diag(4, 9, 1)
        let mut rows = Vec::new();
        for (axis, s) in [(0, 2.0), (1, 3.0), (2, 1.0)] {
            for sign in [1.0, -1.0] {
                let mut r = vec![0.0; 3];
                r[axis] = sign * s;
                rows.extend(r);
            }
        }
        let y = DMatrix::from_row_slice(6, 3, &rows);
        let maps = build_subspace_maps(&y, &y, 3).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((&maps.v_src - &expected).abs().max() < 1e-8, "{}", maps.v_src);
    }

    #[test]
    fn alignment_identity_zero_and_contraction() {
        let src = blob(30, &[0.0; 4], 1.0, 2);
        let tgt = blob(30, &[0.0; 4], 1.0, 3);
        let same = build_subspace_maps(&src, &tgt, 2).unwrap();
        let y = [0.3, -1.2, 2.0, 0.7];
        assert_eq!(align_target(&y, &same).unwrap(), y.to_vec());

        let tgt3 = blob(30, &[0.0; 3], 1.0, 4);
        let maps = build_subspace_maps(&src, &tgt3, default_subspace_dim(4, 3)).unwrap();
        assert_eq!(maps.n_st, 2);
        assert!(align_target(&[0.0; 3], &maps).unwrap().iter().all(|&v| v == 0.0));
        let mut rng = rng_from_seed(5);
        for _ in 0..50 {
            let y: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let out = align_target(&y, &maps).unwrap();
            assert_eq!(out.len(), 4);
            let n_in: f64 = y.iter().map(|v| v * v).sum();
            let n_out: f64 = out.iter().map(|v| v * v).sum();
            assert!(n_out <= n_in * (1.0 + 1e-12));
        }
        assert!(matches!(align_target(&[1.0; 4], &maps), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn subspace_dim_validated() {
        let y = blob(10, &[0.0; 3], 1.0, 6);
        assert!(build_subspace_maps(&y, &y, 0).is_err());
        assert!(build_subspace_maps(&y, &y, 4).is_err());
    }

    #[test]
    fn no_unlabeled_equals_plain_refits() {
        let labeled = vec![blob(6, &[-2.0, 0.0, 0.0], 0.5, 7), blob(6, &[2.0, 0.0, 0.0], 0.5, 8)];
        let empty = DMatrix::zeros(0, 3);
        let cfg = noiseless();
        let traced = fit_target_classifier_traced(&labeled, &empty, &cfg, 11).unwrap();

        let mut manual = fit_classifier(&labeled, 3, 1.0, 1, derive_seed(11, tags::TARGET, 0)).unwrap();
        for (k, n) in [3, 3, 3, 3].into_iter().enumerate() {
            manual = fit_classifier(&labeled, n, 0.5, 1, derive_seed(11, tags::TARGET, k as u64 + 1)).unwrap();
        }
        assert_eq!(traced.classifier, manual);
        assert_eq!(traced.pseudo_labels.len(), 4);
        assert!(traced.pseudo_labels.iter().all(|l| l.is_empty()));
    }

    #[test]
    fn self_training_on_blobs() {
        let c1 = [-2.5, 0.0, 1.0, 0.0];
        let c2 = [2.5, 0.0, -1.0, 0.0];
        let labeled = vec![blob(3, &c1, 0.7, 10), blob(3, &c2, 0.7, 11)];
        let unlabeled = vstack(&[&blob(100, &c1, 0.7, 12), &blob(100, &c2, 0.7, 13)]);
        let truth: Vec<usize> = (0..200).map(|i| if i < 100 { 1 } else { 2 }).collect();
        let traced = fit_target_classifier_traced(&labeled, &unlabeled, &noiseless(), 3).unwrap();

        for labels in traced.pseudo_labels.iter().chain(std::iter::once(&traced.final_labels)) {
            assert_eq!(labels.len(), 200);
            assert!(labels.iter().all(|&l| l == 1 || l == 2));
        }
        let hits = traced.final_labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(hits as f64 / 200.0 >= 0.95, "accuracy {}", hits as f64 / 200.0);

        let sets = traced.class_sets(&labeled, &unlabeled);
        assert_eq!(sets.iter().map(|s| s.nrows()).sum::<usize>(), 206);
    }

    #[test]
    fn missing_labeled_class_rejected() {
        let labeled = vec![blob(3, &[0.0, 0.0], 1.0, 1), DMatrix::zeros(0, 2)];
        assert!(fit_target_classifier(&labeled, &DMatrix::zeros(0, 2), &noiseless(), 0).is_err());
    }

    #[test]
    fn source2target_with_reconstructing_source_filter() {
        let sets = vec![blob(40, &[-2.0, 0.0, 0.0], 0.3, 20), blob(40, &[2.0, 0.0, 0.0], 0.3, 21)];
        // full-dimensional, fully sized autoencoders reproduce their training data
        let src = fit_classifier(&sets, 3, 1.0, 1, 4).unwrap();
        let s2t = fit_source2target(&src, &sets, 5).unwrap();
        let y = vstack(&sets.iter().collect::<Vec<_>>());
        let mut x = Vec::new();
        for (c, s) in sets.iter().enumerate() {
            x.push(src.per_class()[c].filter_batch(s).unwrap().0);
        }
        let x = vstack(&x.iter().collect::<Vec<_>>());
        let pred = s2t.predict_batch(&x).unwrap();
        let rmse = ((&pred - &y).norm_squared() / y.len() as f64).sqrt();
        assert!(rmse <= 0.05, "rmse {rmse}");
        assert_eq!(s2t.input_dim(), 3);
        assert_eq!(s2t.output_dim(), 3);
    }

    #[test]
    fn source2target_inducing_cap() {
        assert_eq!(default_m_max(3000), 1000);
        assert_eq!(default_m_max(81), 41);
    }

    #[test]
    fn multitask_matches_exhaustive_oracle() {
        let classes = vec![
            blob(25, &[-2.0, 0.0, 0.0], 0.6, 30),
            blob(25, &[2.0, 0.0, 0.0], 0.6, 31),
            blob(25, &[0.0, 2.5, 0.0], 0.6, 32),
        ];
        let tgt = fit_classifier(&classes, 2, 0.5, 1, 1).unwrap();
        let shifted: Vec<DMatrix<f64>> = classes.iter().map(|c| c.add_scalar(0.5)).collect();
        let src = fit_classifier(&shifted, 2, 0.5, 2, 2).unwrap();
        let s2t = fit_source2target(&src, &classes, 3).unwrap();
        let q = blob(60, &[0.0, 0.5, 0.0], 2.0, 33);
        let batch = multitask_predict_batch(&q, &tgt, &src, &s2t).unwrap();
        for i in 0..q.nrows() {
            let y: Vec<f64> = q.row(i).iter().copied().collect();
            let te = tgt.class_errors(&y).unwrap();
            let se = src.class_errors(&y).unwrap();
            let mut best = (f64::INFINITY, 0);
            for c in 0..3 {
                let rec = src.per_class()[c].filter(&y).unwrap();
                let mapped = s2t.predict(&rec).unwrap();
                let through: f64 = mapped.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
                for e in [te[c], through, se[c]] {
                    if e < best.0 {
                        best = (e, c + 1);
                    }
                }
            }
            assert_eq!(batch[i], best.1, "row {i}");
            assert_eq!(multitask_predict(&y, &tgt, &src, &s2t).unwrap(), best.1);
        }
    }

    #[test]
    fn multitask_argmin_rules() {
        let perfect = [[0.0, 5.0, 7.0], [3.0, 4.0, 9.0], [8.0, 2.0, 6.0]];
        assert_eq!(multitask_argmin(&perfect), 1);
        let errs = [[4.0, 5.0, 7.0], [3.0, 4.0, 9.0], [8.0, 3.5, 6.0]];
        assert_eq!(multitask_argmin(&errs), 2);
        for scale in [0.5, 0.99, 1.01] {
            let mut scaled = errs;
            scaled[1] = scaled[1].map(|e| e * scale);
            assert_eq!(multitask_argmin(&scaled), 2);
        }
        assert_eq!(multitask_argmin(&[[1.0; 3], [1.0; 3]]), 1);
    }

    fn small_problem() -> (Vec<DMatrix<f64>>, DMatrix<f64>, Vec<DMatrix<f64>>, DMatrix<f64>, Vec<usize>) {
        let centers = [[-2.0, 0.0, 1.0, 0.0], [2.0, 0.0, -1.0, 0.0]];
        let source: Vec<_> = centers.iter().enumerate().map(|(c, m)| blob(40, m, 0.6, 40 + c as u64)).collect();
        let onehot = DMatrix::from_fn(80, 2, |i, j| if i / 40 == j { 1.0 } else { 0.0 });
        let tcenters = [[-2.0, 1.0, 0.0], [2.0, -1.0, 0.0]];
        let labeled: Vec<_> = tcenters.iter().enumerate().map(|(c, m)| blob(4, m, 0.6, 50 + c as u64)).collect();
        let unlabeled = vstack(&[&blob(20, &tcenters[0], 0.6, 60), &blob(20, &tcenters[1], 0.6, 61)]);
        let truth = (0..40).map(|i| i / 20 + 1).collect();
        (source, onehot, labeled, unlabeled, truth)
    }

    #[test]
    fn run_tai_small_problem() {
        let (source, onehot, labeled, unlabeled, truth) = small_problem();
        let private = vstack(&source.iter().collect::<Vec<_>>());
        let inputs = TaiInputs {
            source: &source,
            private: &private,
            interpretable: &onehot,
            target_labeled: &labeled,
            target_unlabeled: &unlabeled,
            eval_labels: Some(&truth),
        };
        let mut cfg = TaiConfig::new(DpParams::new(1.0, 10.0, 1e-5).unwrap());
        cfg.source_layers = 2;
        let report = run_tai(&inputs, &cfg, 9).unwrap();
        assert!(report.privacy_leakage.is_finite());
        assert!(report.interpretability.is_finite());
        assert!(report.transferability.is_finite());
        assert_eq!(report.maps.n_st, 2);
        assert_eq!((report.adversary().input_dim(), report.adversary().output_dim()), (4, 4));
        assert_eq!((report.interpreter().input_dim(), report.interpreter().output_dim()), (4, 2));
        assert_eq!(report.predictions.len(), 40);
        assert!(report.accuracies.multitask.is_some());
        assert_eq!(report.source_classifier.dim(), 4);
        assert_eq!(report.target_classifier.dim(), 4);

        let again = run_tai(&inputs, &cfg, 9).unwrap();
        assert_eq!(report.privacy_leakage.to_bits(), again.privacy_leakage.to_bits());
        assert_eq!(report.interpretability.to_bits(), again.interpretability.to_bits());
        assert_eq!(report.transferability.to_bits(), again.transferability.to_bits());
    }

    #[test]
    fn run_tai_reports_stage() {
        let (source, onehot, labeled, unlabeled, _) = small_problem();
        let short = DMatrix::zeros(10, 4);
        let inputs = TaiInputs {
            source: &source,
            private: &short,
            interpretable: &onehot,
            target_labeled: &labeled,
            target_unlabeled: &unlabeled,
            eval_labels: None,
        };
        match run_tai(&inputs, &noiseless(), 0) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "input"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
