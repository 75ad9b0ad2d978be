//! Labeled feature sets and construction of the balanced relevancy set.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClassifyError, FeatureVector};
use crate::record::{DamageLabel, ImageRecord, Relevance};

pub const DEFAULT_IRRELEVANT_CATEGORIES: [&str; 14] = [
    "website",
    "suit",
    "lab coat",
    "envelope",
    "dust jacket",
    "candle",
    "menu",
    "vestment",
    "monitor",
    "street sign",
    "puzzle",
    "television",
    "cash machine",
    "screen",
];

/// Feature vectors with class indices into `classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    classes: Vec<String>,
    features: Vec<FeatureVector>,
    labels: Vec<usize>,
    dim: usize,
}

impl Dataset {
    pub fn new(
        classes: Vec<String>,
        features: Vec<FeatureVector>,
        labels: Vec<usize>,
    ) -> Result<Self, ClassifyError> {
        if classes.len() < 2 {
            return Err(ClassifyError::TooFewClasses);
        }
        if features.len() != labels.len() {
            return Err(ClassifyError::LengthMismatch(features.len(), labels.len()));
        }
        let dim = features.first().map_or(0, FeatureVector::dim);
        for (i, f) in features.iter().enumerate() {
            if f.dim() != dim {
                return Err(ClassifyError::Dimension {
                    expected: dim,
                    got: f.dim(),
                });
            }
            if let Some(j) = f.values().iter().position(|v| !v.is_finite()) {
                return Err(ClassifyError::NonFinite { example: i, index: j });
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(ClassifyError::LabelIndex(l));
        }
        Ok(Self {
            classes,
            features,
            labels,
            dim,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// The examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            classes: self.classes.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            dim: self.dim,
        }
    }
}

/// Builds a balanced relevant/irrelevant set.
///
/// Severe and mild images are relevant candidates. None-labeled images whose
/// tags include a listed category form the irrelevant side. The larger side
/// is downsampled (seeded, uniform) to the size of the smaller one. Output
/// keeps input order.
pub fn build_relevance_dataset(
    images: &[ImageRecord],
    irrelevant_categories: &[&str],
    seed: u64,
) -> Result<Vec<ImageRecord>, ClassifyError> {
    let listed: HashSet<&str> = irrelevant_categories.iter().copied().collect();
    let mut relevant = Vec::new();
    let mut irrelevant = Vec::new();
    for (i, r) in images.iter().enumerate() {
        match r.damage {
            Some(DamageLabel::Severe | DamageLabel::Mild) => relevant.push(i),
            Some(DamageLabel::None) if r.object_tags.iter().any(|t| listed.contains(t.as_str())) => {
                irrelevant.push(i)
            }
            _ => {}
        }
    }
    if relevant.is_empty() {
        return Err(ClassifyError::NoRelevant);
    }
    if irrelevant.is_empty() {
        return Err(ClassifyError::NoIrrelevant);
    }
    let k = relevant.len().min(irrelevant.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![None; images.len()];
    for (side, label) in [(&relevant, Relevance::Relevant), (&irrelevant, Relevance::Irrelevant)] {
        for j in sample(&mut rng, side.len(), k) {
            keep[side[j]] = Some(label);
        }
    }
    Ok(images
        .iter()
        .zip(keep)
        .filter_map(|(r, label)| {
            label.map(|l| {
                let mut r = r.clone();
                r.relevance = Some(l);
                r
            })
        })
        .collect())
}
