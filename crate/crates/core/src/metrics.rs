//! Evaluation math: one-vs-rest precision/recall/F1, average precision,
//! macro averages and a permutation test on macro-F1 differences.
//!
//! Any rate with a zero denominator is reported as 0.

use std::io::Write;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction set is empty")]
    Empty,
    #[error("average precision needs at least one positive")]
    NoPositives,
    #[error("truth and score lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("class lists differ")]
    ClassMismatch,
    #[error("label {0:?} is not in the class list")]
    UnknownLabel(String),
    #[error("label index {0} out of range")]
    LabelIndex(usize),
    #[error("score vector has {got} entries, expected {expected}")]
    ScoreArity { expected: usize, got: usize },
    #[error("score vector sums to {0}, expected 1")]
    ScoreSum(f64),
    #[error("need at least two classes")]
    TooFewClasses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub truth: usize,
    pub predicted: usize,
    pub scores: Vec<f64>,
}

/// Predictions over a fixed class list. Labels are class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    classes: Vec<String>,
    items: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(classes: Vec<String>) -> Result<Self, MetricsError> {
        if classes.len() < 2 {
            return Err(MetricsError::TooFewClasses);
        }
        Ok(Self {
            classes,
            items: Vec::new(),
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn items(&self) -> &[Prediction] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, truth: usize, predicted: usize, scores: Vec<f64>) -> Result<(), MetricsError> {
        let k = self.classes.len();
        for idx in [truth, predicted] {
            if idx >= k {
                return Err(MetricsError::LabelIndex(idx));
            }
        }
        if scores.len() != k {
            return Err(MetricsError::ScoreArity {
                expected: k,
                got: scores.len(),
            });
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(MetricsError::ScoreSum(sum));
        }
        self.items.push(Prediction {
            truth,
            predicted,
            scores,
        });
        Ok(())
    }

    /// Adds an item whose predicted label is the arg-max score (first on ties).
    pub fn push_scores(&mut self, truth: usize, scores: Vec<f64>) -> Result<(), MetricsError> {
        let predicted = argmax(&scores);
        self.push(truth, predicted, scores)
    }

    pub fn class_index(&self, name: &str) -> Result<usize, MetricsError> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| MetricsError::UnknownLabel(name.to_owned()))
    }
}

pub fn argmax(scores: &[f64]) -> usize {
    scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &s)| if s > best.1 { (i, s) } else { best })
        .0
}

#[derive(Serialize, Deserialize)]
struct PredictionRepr {
    truth: String,
    predicted: String,
    scores: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PredictionSetRepr {
    classes: Vec<String>,
    items: Vec<PredictionRepr>,
}

impl Serialize for PredictionSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PredictionSetRepr {
            classes: self.classes.clone(),
            items: self
                .items
                .iter()
                .map(|p| PredictionRepr {
                    truth: self.classes[p.truth].clone(),
                    predicted: self.classes[p.predicted].clone(),
                    scores: p.scores.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PredictionSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = PredictionSetRepr::deserialize(d)?;
        let mut set = PredictionSet::new(repr.classes).map_err(D::Error::custom)?;
        for item in repr.items {
            let t = set.class_index(&item.truth).map_err(D::Error::custom)?;
            let p = set.class_index(&item.predicted).map_err(D::Error::custom)?;
            set.push(t, p, item.scores).map_err(D::Error::custom)?;
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc_pr: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc_pr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub per_class: IndexMap<String, ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    /// `confusion[truth][predicted]`, rows and columns in class order.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub n: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn confusion(classes: usize, pairs: impl Iterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (t, p) in pairs {
        m[t][p] += 1;
    }
    m
}

/// Per-class `(precision, recall, f1)` from a confusion matrix.
fn prf_from_confusion(m: &[Vec<usize>]) -> Vec<(f64, f64, f64)> {
    (0..m.len())
        .map(|c| {
            let tp = m[c][c];
            let predicted: usize = m.iter().map(|row| row[c]).sum();
            let actual: usize = m[c].iter().sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, actual);
            (p, r, f1(p, r))
        })
        .collect()
}

fn macro_f1_of(classes: usize, pairs: impl Iterator<Item = (usize, usize)>) -> f64 {
    let m = confusion(classes, pairs);
    prf_from_confusion(&m).iter().map(|x| x.2).sum::<f64>() / classes as f64
}

pub fn macro_f1(set: &PredictionSet) -> f64 {
    macro_f1_of(
        set.classes.len(),
        set.items.iter().map(|p| (p.truth, p.predicted)),
    )
}

pub fn evaluate(set: &PredictionSet) -> Result<EvalReport, MetricsError> {
    if set.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = set.classes.len();
    let m = confusion(k, set.items.iter().map(|p| (p.truth, p.predicted)));
    let prf = prf_from_confusion(&m);

    let mut per_class = IndexMap::with_capacity(k);
    for (c, name) in set.classes.iter().enumerate() {
        let truth: Vec<bool> = set.items.iter().map(|p| p.truth == c).collect();
        let scores: Vec<f64> = set.items.iter().map(|p| p.scores[c]).collect();
        let auc = match auc_pr(&truth, &scores) {
            Ok(v) => v,
            Err(MetricsError::NoPositives) => 0.0,
            Err(e) => return Err(e),
        };
        let (precision, recall, f1) = prf[c];
        per_class.insert(
            name.clone(),
            ClassMetrics {
                precision,
                recall,
                f1,
                auc_pr: auc,
                support: m[c].iter().sum(),
            },
        );
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.values().map(f).sum::<f64>() / k as f64;
    let macro_avg = MacroMetrics {
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
        auc_pr: mean(|c| c.auc_pr),
    };
    let correct: usize = (0..k).map(|c| m[c][c]).sum();
    Ok(EvalReport {
        per_class,
        macro_avg,
        confusion: m,
        accuracy: ratio(correct, set.len()),
        n: set.len(),
    })
}

/// Ranking order: score descending, input order on ties.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Average precision: `Σ (R_n − R_{n−1}) · P_n` over prediction ranks.
pub fn auc_pr(truth: &[bool], scores: &[f64]) -> Result<f64, MetricsError> {
    if truth.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(truth.len(), scores.len()));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut tp = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (rank, &i) in ranking(scores).iter().enumerate() {
        if truth[i] {
            tp += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (rank + 1) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision/recall after each rank, with the score at that rank as threshold.
pub fn pr_curve(truth: &[bool], scores: &[f64]) -> Result<Vec<PrPoint>, MetricsError> {
    if truth.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(truth.len(), scores.len()));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut tp = 0;
    Ok(ranking(scores)
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            tp += usize::from(truth[i]);
            PrPoint {
                threshold: scores[i],
                precision: tp as f64 / (rank + 1) as f64,
                recall: tp as f64 / positives as f64,
            }
        })
        .collect())
}

pub fn write_pr_csv<W: Write>(points: &[PrPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed_diff: f64,
    pub p_value: f64,
    pub n_shuffles: usize,
    pub diff_samples: Vec<f64>,
}

/// Two-sided permutation test on `macro_f1(a) − macro_f1(b)`.
///
/// Each shuffle re-partitions the pooled `(truth, predicted)` pairs into
/// groups of the original sizes. Shuffle `i` draws from a generator seeded
/// with `seed + i`, so results do not depend on evaluation order.
pub fn permutation_test(
    a: &PredictionSet,
    b: &PredictionSet,
    n_shuffles: usize,
    seed: u64,
) -> Result<PermutationResult, MetricsError> {
    if a.classes != b.classes {
        return Err(MetricsError::ClassMismatch);
    }
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = a.classes.len();
    let observed = macro_f1(a) - macro_f1(b);
    let pool: Vec<(usize, usize)> = a
        .items
        .iter()
        .chain(&b.items)
        .map(|p| (p.truth, p.predicted))
        .collect();
    let split = a.len();

    let diff_samples: Vec<f64> = (0..n_shuffles)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            idx.shuffle(&mut rng);
            let fa = macro_f1_of(k, idx[..split].iter().map(|&j| pool[j]));
            let fb = macro_f1_of(k, idx[split..].iter().map(|&j| pool[j]));
            fa - fb
        })
        .collect();

    // Differences that agree to rounding count as equally extreme.
    let cutoff = observed.abs() - 1e-12;
    let extreme = diff_samples.iter().filter(|d| d.abs() >= cutoff).count();
    Ok(PermutationResult {
        observed_diff: observed,
        p_value: (1 + extreme) as f64 / (n_shuffles + 1) as f64,
        n_shuffles,
        diff_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn classes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn one_hot(k: usize, i: usize) -> Vec<f64> {
        (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
    }

    fn set_from(k: usize, pairs: &[(usize, usize)]) -> PredictionSet {
        let mut s = PredictionSet::new(classes(k)).unwrap();
        for &(t, p) in pairs {
            s.push(t, p, one_hot(k, p)).unwrap();
        }
        s
    }

    fn random_set(rng: &mut ChaCha8Rng, k: usize, n: usize) -> PredictionSet {
        let mut s = PredictionSet::new(classes(k)).unwrap();
        for _ in 0..n {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let scores = raw.iter().map(|v| v / total).collect();
            s.push_scores(rng.gen_range(0..k), scores).unwrap();
        }
        s
    }

    /// Step-function integral of the PR curve: mean precision at the rank
    /// of each positive.
    fn brute_force_ap(truth: &[bool], scores: &[f64]) -> f64 {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        // insertion sort keeps equal scores in input order
        for i in 1..idx.len() {
            let mut j = i;
            while j > 0 && scores[idx[j - 1]] < scores[idx[j]] {
                idx.swap(j - 1, j);
                j -= 1;
            }
        }
        let positives = truth.iter().filter(|&&t| t).count() as f64;
        let mut hits = 0.0;
        let mut total = 0.0;
        for (rank, &i) in idx.iter().enumerate() {
            if truth[i] {
                hits += 1.0;
                total += hits / (rank + 1) as f64;
            }
        }
        total / positives
    }

    #[test]
    fn validation_of_items() {
        let mut s = PredictionSet::new(classes(2)).unwrap();
        assert_eq!(s.push(0, 2, vec![0.5, 0.5]), Err(MetricsError::LabelIndex(2)));
        assert!(matches!(s.push(0, 0, vec![1.0]), Err(MetricsError::ScoreArity { .. })));
        assert!(matches!(s.push(0, 0, vec![0.7, 0.7]), Err(MetricsError::ScoreSum(_))));
        assert_eq!(evaluate(&s), Err(MetricsError::Empty));
        assert_eq!(PredictionSet::new(classes(1)), Err(MetricsError::TooFewClasses));
    }

    #[test]
    fn all_correct_is_perfect() {
        let s = set_from(3, &[(0, 0), (1, 1), (2, 2), (1, 1)]);
        let r = evaluate(&s).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for c in r.per_class.values() {
            assert_eq!((c.precision, c.recall, c.f1, c.auc_pr), (1.0, 1.0, 1.0, 1.0));
        }
        assert_eq!(r.macro_avg.f1, 1.0);
    }

    #[test]
    fn binary_two_thirds_case() {
        // TP=2, FP=1, FN=1 for class 1, plus one TN
        let s = set_from(2, &[(1, 1), (1, 1), (0, 1), (1, 0), (0, 0)]);
        let r = evaluate(&s).unwrap();
        let c = &r.per_class["c1"];
        assert!((c.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.support, 3);
        assert_eq!(r.confusion, vec![vec![1, 1], vec![1, 2]]);
    }

    #[test]
    fn absent_class_scores_zero() {
        let s = set_from(3, &[(0, 0), (1, 0)]);
        let r = evaluate(&s).unwrap();
        let c2 = &r.per_class["c2"];
        assert_eq!((c2.precision, c2.recall, c2.f1, c2.auc_pr, c2.support), (0.0, 0.0, 0.0, 0.0, 0));
        assert!(r.per_class.values().all(|c| (0.0..=1.0).contains(&c.f1)));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(auc_pr(&[true, true, false], &[0.9, 0.8, 0.1]).unwrap(), 1.0);
        let ap = auc_pr(&[true, false, true], &[0.9, 0.8, 0.7]).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(auc_pr(&[false, false], &[0.1, 0.2]), Err(MetricsError::NoPositives));
        assert!(auc_pr(&[true], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn ap_tie_order_follows_input() {
        // tied scores: positive listed first ranks first
        assert_eq!(auc_pr(&[true, false], &[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(auc_pr(&[false, true], &[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn ap_matches_step_integrator() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth: Vec<bool> = (0..1000).map(|_| rng.gen_bool(0.3)).collect();
        let scores: Vec<f64> = (0..1000).map(|_| (rng.gen_range(0..200) as f64) / 200.0).collect();
        let a = auc_pr(&truth, &scores).unwrap();
        let b = brute_force_ap(&truth, &scores);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn evaluate_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let k = rng.gen_range(2..5);
            let n = rng.gen_range(1..200);
            let s = random_set(&mut rng, k, n);
            let r = evaluate(&s).unwrap();
            for c in 0..k {
                let tp = s.items().iter().filter(|p| p.truth == c && p.predicted == c).count();
                let fp = s.items().iter().filter(|p| p.truth != c && p.predicted == c).count();
                let fnn = s.items().iter().filter(|p| p.truth == c && p.predicted != c).count();
                let m = &r.per_class[c];
                let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                let rc = if tp + fnn == 0 { 0.0 } else { tp as f64 / (tp + fnn) as f64 };
                assert_eq!(m.precision, p);
                assert_eq!(m.recall, rc);
                assert_eq!(m.support, tp + fnn);
            }
            assert_eq!(r.per_class.values().map(|c| c.support).sum::<usize>(), s.len());
        }
    }

    #[test]
    fn identical_groups_give_p_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_set(&mut rng, 3, 100);
        let r = permutation_test(&a, &a.clone(), 200, 9).unwrap();
        assert_eq!(r.observed_diff, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.diff_samples.len(), 200);
    }

    #[test]
    fn strong_effect_is_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let perfect: Vec<(usize, usize)> = (0..300).map(|i| (i % 3, i % 3)).collect();
        let noisy: Vec<(usize, usize)> = (0..300).map(|i| (i % 3, rng.gen_range(0..3))).collect();
        let r = permutation_test(&set_from(3, &perfect), &set_from(3, &noisy), 1000, 1).unwrap();
        assert!(r.observed_diff > 0.5);
        assert!(r.p_value <= 0.01);
        assert!(r.p_value > 0.0);
    }

    #[test]
    fn permutation_is_reproducible_and_checks_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_set(&mut rng, 2, 50);
        let b = random_set(&mut rng, 2, 70);
        assert_eq!(
            permutation_test(&a, &b, 50, 3).unwrap(),
            permutation_test(&a, &b, 50, 3).unwrap()
        );
        let c = random_set(&mut rng, 3, 10);
        assert_eq!(permutation_test(&a, &c, 5, 0), Err(MetricsError::ClassMismatch));
    }

    #[test]
    fn prediction_set_json_round_trip() {
        let s = set_from(2, &[(0, 1), (1, 1)]);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains(r#""truth":"c0""#));
        let back: PredictionSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn pr_csv_has_header() {
        let pts = pr_curve(&[true, false], &[0.9, 0.2]).unwrap();
        let mut buf = Vec::new();
        write_pr_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "threshold,precision,recall\n0.9,1.0,1.0\n0.2,0.5,1.0\n");
    }

    proptest! {
        #[test]
        fn macro_f1_ignores_item_order(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_set(&mut rng, 3, 40);
            let mut shuffled = PredictionSet::new(s.classes().to_vec()).unwrap();
            let mut items = s.items().to_vec();
            items.shuffle(&mut rng);
            for p in items {
                shuffled.push(p.truth, p.predicted, p.scores).unwrap();
            }
            prop_assert_eq!(macro_f1(&s), macro_f1(&shuffled));
        }

        #[test]
        fn ap_invariant_under_monotone_transform(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth: Vec<bool> = (0..60).map(|i| i == 0 || rng.gen_bool(0.4)).collect();
            let scores: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..1.0)).collect();
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(auc_pr(&truth, &scores).unwrap(), auc_pr(&truth, &transformed).unwrap());
        }

        #[test]
        fn p_value_in_unit_interval(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_set(&mut rng, 2, 15);
            let b = random_set(&mut rng, 2, 25);
            let r = permutation_test(&a, &b, 30, seed).unwrap();
            prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        }
    }
}
