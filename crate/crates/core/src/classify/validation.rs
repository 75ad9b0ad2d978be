//! Stratified k-fold cross-validation and the 60/20/20 train/validation/test
//! protocol.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, train_checkpointed, ClassifierModel, ClassifyError, Dataset, TrainParams};
use crate::metrics::{evaluate, macro_f1, EvalReport, PredictionSet};
use crate::sampling::largest_remainder;

const CHECKPOINT_EVERY: u32 = 50;

/// Fold index for every example. Each class is shuffled, then dealt
/// round-robin with a counter that carries over between classes, so per-class
/// and total fold sizes each differ by at most one.
pub fn stratified_folds(labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    folds
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Held-out predictions in dataset order.
    pub predictions: PredictionSet,
    pub report: EvalReport,
    pub folds: Vec<usize>,
}

fn predict_into(
    model: &ClassifierModel,
    ds: &Dataset,
    indices: &[usize],
    set: &mut PredictionSet,
) -> Result<(), ClassifyError> {
    for &i in indices {
        set.push_scores(ds.labels()[i], model.score(&ds.features()[i])?)?;
    }
    Ok(())
}

/// Pooled stratified k-fold evaluation. Fails when `k < 2`, `k` exceeds the
/// dataset size, or some training fold would hold fewer than two examples of
/// a class.
pub fn cross_validate(
    ds: &Dataset,
    params: &TrainParams,
    k: usize,
    seed: u64,
) -> Result<CvResult, ClassifyError> {
    if k < 2 || k > ds.len() {
        return Err(ClassifyError::FoldCount { k, n: ds.len() });
    }
    let counts = ds.class_counts();
    for (c, &count) in counts.iter().enumerate() {
        // the largest test fold of a class holds ceil(count / k) members
        if count - count.div_ceil(k) < 2 {
            return Err(ClassifyError::DegenerateClass {
                class: ds.classes()[c].clone(),
                count,
                needed: 2 + count.div_ceil(k),
            });
        }
    }
    let folds = stratified_folds(ds.labels(), ds.classes().len(), k, seed);
    let models: Vec<ClassifierModel> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| folds[i] != f).collect();
            train(&ds.subset(&train_idx), params).map(|t| t.model)
        })
        .collect::<Result<_, _>>()?;
    let mut predictions = PredictionSet::new(ds.classes().to_vec())?;
    for (i, &f) in folds.iter().enumerate() {
        predict_into(&models[f], ds, &[i], &mut predictions)?;
    }
    let report = evaluate(&predictions)?;
    Ok(CvResult {
        predictions,
        report,
        folds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub model: ClassifierModel,
    pub best_epoch: u32,
    pub sizes: SplitSizes,
    pub validation: EvalReport,
    pub test: EvalReport,
}

/// Stratified 60/20/20 index split. Split totals use largest-remainder
/// rounding over the whole set; each split's total is then apportioned over
/// the classes' remaining members, and the test split takes what is left.
pub fn split_indices(labels: &[usize], n_classes: usize, seed: u64) -> [Vec<usize>; 3] {
    let totals = largest_remainder(labels.len(), &[60, 20, 20]);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let mut taken = vec![0usize; n_classes];
    let mut out: [Vec<usize>; 3] = Default::default();
    for (s, &total) in totals.iter().enumerate() {
        let remaining: Vec<usize> = by_class.iter().zip(&taken).map(|(m, t)| m.len() - t).collect();
        let per_class = if s == 2 {
            remaining.clone()
        } else {
            largest_remainder(total, &remaining)
        };
        for c in 0..n_classes {
            out[s].extend_from_slice(&by_class[c][taken[c]..taken[c] + per_class[c]]);
            taken[c] += per_class[c];
        }
        out[s].sort_unstable();
    }
    out
}

/// Trains on 60%, keeps the checkpoint (every 50 epochs) with the best
/// validation macro-F1 (earliest on ties), and reports on the last 20%.
pub fn train_split(ds: &Dataset, params: &TrainParams, seed: u64) -> Result<SplitResult, ClassifyError> {
    let [tr, va, te] = split_indices(ds.labels(), ds.classes().len(), seed);
    let sizes = SplitSizes {
        train: tr.len(),
        validation: va.len(),
        test: te.len(),
    };
    let (trained, mut checkpoints) = train_checkpointed(&ds.subset(&tr), params, CHECKPOINT_EVERY)?;
    if checkpoints.is_empty() {
        checkpoints.push((0, trained.model));
    }
    let eval_on = |m: &ClassifierModel, idx: &[usize]| -> Result<PredictionSet, ClassifyError> {
        let mut set = PredictionSet::new(ds.classes().to_vec())?;
        predict_into(m, ds, idx, &mut set)?;
        Ok(set)
    };
    let mut best: Option<(f64, usize, PredictionSet)> = None;
    for (i, (_, m)) in checkpoints.iter().enumerate() {
        let set = eval_on(m, &va)?;
        let f = macro_f1(&set);
        if best.as_ref().is_none_or(|b| f > b.0) {
            best = Some((f, i, set));
        }
    }
    let (_, bi, val_set) = best.expect("at least one checkpoint");
    let (best_epoch, model) = checkpoints.swap_remove(bi);
    let test = evaluate(&eval_on(&model, &te)?)?;
    Ok(SplitResult {
        validation: evaluate(&val_set)?,
        test,
        model,
        best_epoch,
        sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::FeatureVector;
    use rand::Rng;

    fn blobs(seed: u64, n: usize, k: usize, spread: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % k;
            let v = (0..3)
                .map(|j| if j == c { 6.0 } else { 0.0 } + rng.gen_range(-spread..spread))
                .collect();
            feats.push(FeatureVector::new(v));
            labels.push(c);
        }
        Dataset::new((0..k).map(|c| format!("c{c}")).collect(), feats, labels).unwrap()
    }

    #[test]
    fn folds_are_balanced_per_class() {
        let labels: Vec<usize> = (0..103).map(|i| (i * 7) % 3).collect();
        let folds = stratified_folds(&labels, 3, 5, 1);
        for c in 0..3 {
            let mut per = [0usize; 5];
            for (i, &f) in folds.iter().enumerate() {
                if labels[i] == c {
                    per[f] += 1;
                }
            }
            assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        assert_eq!(folds, stratified_folds(&labels, 3, 5, 1));
    }

    #[test]
    fn separable_three_class_cv() {
        let ds = blobs(1, 150, 3, 1.0);
        let r = cross_validate(&ds, &TrainParams::default(), 5, 7).unwrap();
        assert!(r.report.macro_avg.f1 >= 0.95);
        assert_eq!(r.report.n, 150);
    }

    #[test]
    fn leave_one_out_runs() {
        let ds = blobs(2, 6, 2, 1.0);
        let r = cross_validate(&ds, &TrainParams::default(), 6, 0).unwrap();
        assert_eq!(r.predictions.len(), 6);
        assert_eq!(r.report.confusion.iter().flatten().sum::<usize>(), 6);
    }

    #[test]
    fn fold_count_errors() {
        let ds = blobs(3, 6, 2, 1.0);
        assert!(matches!(cross_validate(&ds, &TrainParams::default(), 1, 0), Err(ClassifyError::FoldCount { .. })));
        assert!(matches!(cross_validate(&ds, &TrainParams::default(), 7, 0), Err(ClassifyError::FoldCount { .. })));
        let tiny = blobs(3, 4, 2, 1.0);
        assert!(matches!(
            cross_validate(&tiny, &TrainParams::default(), 2, 0),
            Err(ClassifyError::DegenerateClass { .. })
        ));
    }

    #[test]
    fn full_scale_split_sizes() {
        let labels: Vec<usize> = (0..7036).map(|i| i % 2).collect();
        let [a, b, c] = split_indices(&labels, 2, 3);
        assert_eq!((a.len(), b.len(), c.len()), (4222, 1407, 1407));
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..7036).collect::<Vec<_>>());
        for part in [&a, &b, &c] {
            let ones = part.iter().filter(|&&i| labels[i] == 1).count();
            assert!((ones as f64 - part.len() as f64 / 2.0).abs() <= 1.0);
        }
    }

    #[test]
    fn split_protocol_is_deterministic_and_accurate() {
        let ds = blobs(4, 300, 2, 1.5);
        let a = train_split(&ds, &TrainParams::default(), 9).unwrap();
        let b = train_split(&ds, &TrainParams::default(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sizes, SplitSizes { train: 180, validation: 60, test: 60 });
        assert!(a.test.macro_avg.f1 >= 0.95);
        assert_eq!(a.best_epoch % 50, 0);
    }
}
