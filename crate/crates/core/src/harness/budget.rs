//! Fixed-budget labeling simulation over the four sampling settings.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Corpus, HarnessError};
use crate::classify::{cross_validate, Dataset, TrainParams};
use crate::dedup::{DedupConfig, Engine, HashWindow, DEFAULT_CAPACITY, DEFAULT_THRESHOLD};
use crate::metrics::{EvalReport, PredictionSet};
use crate::record::DamageLabel;
use crate::sampling::stratified_sample;

/// Which filters run before the labeled sample is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// Raw corpus.
    S1,
    /// The S1 sample after de-duplication.
    S2,
    /// Relevant images only.
    S3,
    /// Relevant images after de-duplication.
    S4,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::S1, Setting::S2, Setting::S3, Setting::S4];
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Setting {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Setting::S1),
            "S2" => Ok(Setting::S2),
            "S3" => Ok(Setting::S3),
            "S4" => Ok(Setting::S4),
            _ => Err(HarnessError::Budget(format!("unknown setting {s:?} (expected S1..S4)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub budget_usd: usize,
    pub cost_per_label: usize,
    pub sample_seed: u64,
    pub folds: usize,
    pub dedup_threshold: u32,
    pub train: TrainParams,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            budget_usd: 6000,
            cost_per_label: 1,
            sample_seed: 42,
            folds: 5,
            dedup_threshold: DEFAULT_THRESHOLD,
            train: TrainParams::default(),
        }
    }
}

impl BudgetConfig {
    /// Number of labels the budget buys.
    pub fn n_labels(&self) -> Result<usize, HarnessError> {
        if self.budget_usd < 1 {
            return Err(HarnessError::Budget("budget must be at least 1".into()));
        }
        if self.cost_per_label < 1 {
            return Err(HarnessError::Budget("cost per label must be at least 1".into()));
        }
        Ok(self.budget_usd / self.cost_per_label)
    }
}

/// Corpus indices chosen for labeling, in stream order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub setting: Setting,
    pub indices: Vec<usize>,
    pub wasted_labels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingReport {
    pub setting: Setting,
    pub budget_usd: usize,
    pub sample_size: usize,
    pub class_counts: IndexMap<String, usize>,
    pub wasted_labels: usize,
    pub eval: EvalReport,
}

fn damage_index(corpus: &Corpus, i: usize) -> usize {
    let d = corpus.items[i].record.damage.unwrap_or(DamageLabel::None);
    DamageLabel::ALL.iter().position(|&x| x == d).expect("known label")
}

fn dedup(corpus: &Corpus, indices: &[usize], threshold: u32) -> Result<Vec<usize>, HarnessError> {
    let mut window = HashWindow::new(DedupConfig::new(
        threshold,
        DEFAULT_CAPACITY.max(indices.len()),
        Engine::BkTree,
    )?);
    Ok(indices
        .iter()
        .copied()
        .filter(|&i| {
            let it = &corpus.items[i];
            !window.check_and_insert(it.hash, &it.record.id).is_duplicate()
        })
        .collect())
}

fn stratified(corpus: &Corpus, pool: &[usize], n: usize, seed: u64) -> Vec<usize> {
    let labels: Vec<usize> = pool.iter().map(|&i| damage_index(corpus, i)).collect();
    stratified_sample(&labels, DamageLabel::ALL.len(), n, seed)
        .into_iter()
        .map(|k| pool[k])
        .collect()
}

/// Draws the labeled sample for `setting`. `relevant[i]` is the relevancy
/// verdict for corpus item `i`, used by S3 and S4. Filtered settings label
/// `min(budget, pool)` images.
pub fn select_setting(
    corpus: &Corpus,
    cfg: &BudgetConfig,
    setting: Setting,
    relevant: &[bool],
) -> Result<Selection, HarnessError> {
    let n = cfg.n_labels()?;
    if n > corpus.len() {
        return Err(HarnessError::Budget(format!(
            "budget buys {n} labels but the corpus holds {} images",
            corpus.len()
        )));
    }
    if relevant.len() != corpus.len() {
        return Err(HarnessError::Budget(format!(
            "relevance mask has {} entries for {} images",
            relevant.len(),
            corpus.len()
        )));
    }
    let all: Vec<usize> = (0..corpus.len()).collect();
    let (indices, wasted_labels) = match setting {
        Setting::S1 => (stratified(corpus, &all, n, cfg.sample_seed), 0),
        Setting::S2 => {
            let s1 = stratified(corpus, &all, n, cfg.sample_seed);
            let kept = dedup(corpus, &s1, cfg.dedup_threshold)?;
            let wasted = s1.len() - kept.len();
            (kept, wasted)
        }
        Setting::S3 | Setting::S4 => {
            let mut pool: Vec<usize> = all.into_iter().filter(|&i| relevant[i]).collect();
            if setting == Setting::S4 {
                pool = dedup(corpus, &pool, cfg.dedup_threshold)?;
            }
            (stratified(corpus, &pool, n.min(pool.len()), cfg.sample_seed), 0)
        }
    };
    Ok(Selection {
        setting,
        indices,
        wasted_labels,
    })
}

/// Samples per `setting`, trains the damage classifier and scores it with
/// pooled stratified cross-validation.
pub fn budget_sim(
    corpus: &Corpus,
    cfg: &BudgetConfig,
    setting: Setting,
    relevant: &[bool],
) -> Result<SettingReport, HarnessError> {
    run_setting(corpus, cfg, setting, relevant).map(|(report, _)| report)
}

/// [`budget_sim`] that also returns the pooled out-of-fold predictions.
pub fn run_setting(
    corpus: &Corpus,
    cfg: &BudgetConfig,
    setting: Setting,
    relevant: &[bool],
) -> Result<(SettingReport, PredictionSet), HarnessError> {
    let sel = select_setting(corpus, cfg, setting, relevant)?;
    let classes: Vec<String> = DamageLabel::ALL.iter().map(|d| d.as_str().to_string()).collect();
    let labels: Vec<usize> = sel.indices.iter().map(|&i| damage_index(corpus, i)).collect();
    let features = sel.indices.iter().map(|&i| corpus.items[i].features.clone()).collect();
    let mut class_counts: IndexMap<String, usize> = classes.iter().map(|c| (c.clone(), 0)).collect();
    for &l in &labels {
        class_counts[l] += 1;
    }
    let ds = Dataset::new(classes, features, labels)?;
    let cv = cross_validate(&ds, &cfg.train, cfg.folds, cfg.sample_seed)?;
    let report = SettingReport {
        setting,
        budget_usd: cfg.budget_usd,
        sample_size: sel.indices.len(),
        class_counts,
        wasted_labels: sel.wasted_labels,
        eval: cv.report,
    };
    Ok((report, cv.predictions))
}
