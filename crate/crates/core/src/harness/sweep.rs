//! Threshold sweep over truth-labelled near pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Corpus, HarnessError};
use crate::dedup::{tune_threshold, AnnotatedPair, ThresholdCurve};
use crate::phash::hamming;

pub const DEFAULT_SWEEP_PAIRS: usize = 1100;
/// Pairs farther apart than this are never candidates.
pub const SWEEP_MAX_DISTANCE: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPair {
    pub a: String,
    pub b: String,
    pub distance: u32,
    pub is_same: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub seed: u64,
    pub candidates: usize,
    pub within_group_candidates: usize,
    pub pairs: Vec<SweepPair>,
    pub curve: ThresholdCurve,
}

impl SweepResult {
    pub fn annotated(&self) -> Vec<AnnotatedPair> {
        self.pairs
            .iter()
            .map(|p| AnnotatedPair {
                distance: p.distance,
                is_same: p.is_same,
            })
            .collect()
    }
}

/// All index pairs `(i, j)`, `i < j`, at distance ≤ [`SWEEP_MAX_DISTANCE`].
fn candidate_pairs(corpus: &Corpus) -> Vec<(usize, usize, u32)> {
    let hashes: Vec<_> = corpus.items.iter().map(|it| it.hash).collect();
    (0..hashes.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let hashes = &hashes;
            (i + 1..hashes.len()).filter_map(move |j| {
                let d = hamming(hashes[i], hashes[j]);
                (d <= SWEEP_MAX_DISTANCE).then_some((i, j, d))
            })
        })
        .collect()
}

/// Samples `n_pairs` near pairs uniformly, labels them by duplicate group and
/// tunes the threshold over `0..=20`.
pub fn sweep_threshold_experiment(corpus: &Corpus, n_pairs: usize, seed: u64) -> Result<SweepResult, HarnessError> {
    let candidates = candidate_pairs(corpus);
    if n_pairs == 0 || candidates.len() < n_pairs {
        return Err(HarnessError::InsufficientPairs {
            needed: n_pairs.max(1),
            available: candidates.len(),
        });
    }
    let within = candidates
        .iter()
        .filter(|&&(i, j, _)| corpus.group(i) == corpus.group(j))
        .count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, candidates.len(), n_pairs).into_vec();
    picked.sort_unstable();
    let pairs: Vec<SweepPair> = picked
        .into_iter()
        .map(|k| {
            let (i, j, distance) = candidates[k];
            SweepPair {
                a: corpus.items[i].record.id.clone(),
                b: corpus.items[j].record.id.clone(),
                distance,
                is_same: corpus.group(i) == corpus.group(j),
            }
        })
        .collect();
    let annotated: Vec<AnnotatedPair> = pairs
        .iter()
        .map(|p| AnnotatedPair {
            distance: p.distance,
            is_same: p.is_same,
        })
        .collect();
    let curve = tune_threshold(&annotated, 0, SWEEP_MAX_DISTANCE)?;
    Ok(SweepResult {
        seed,
        candidates: candidates.len(),
        within_group_candidates: within,
        pairs,
        curve,
    })
}
