//! Multinomial logistic regression: training, scoring and the binary model
//! file.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ClassifyError, Dataset, FeatureVector, FEATURE_DIM, FEATURE_SPEC_ID, RELEVANT};

const CHUNK: usize = 512;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    /// Recorded for provenance. Training itself is deterministic.
    pub seed: u64,
    pub epochs: u32,
    pub l2: f64,
    pub learning_rate: f64,
    pub decay_every: u32,
    pub decay_factor: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            seed: 42,
            epochs: 500,
            l2: 1e-4,
            learning_rate: 0.1,
            decay_every: 100,
            decay_factor: 0.5,
        }
    }
}

impl TrainParams {
    pub fn learning_rate_at(&self, epoch: u32) -> f64 {
        let steps = epoch.checked_div(self.decay_every).unwrap_or(0);
        self.learning_rate * self.decay_factor.powi(steps as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub id: String,
    pub dim: usize,
}

impl FeatureSpec {
    pub fn for_dim(dim: usize) -> Self {
        let id = if dim == FEATURE_DIM {
            FEATURE_SPEC_ID.to_string()
        } else {
            format!("raw{dim}")
        };
        Self { id, dim }
    }
}

/// Trained linear model. Weights are `classes × (dim + 1)` row-major with the
/// bias in the last column, applied to standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    classes: Vec<String>,
    feature_spec: FeatureSpec,
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    train_meta: TrainParams,
}

impl ClassifierModel {
    pub fn new(
        classes: Vec<String>,
        feature_spec: FeatureSpec,
        mean: Vec<f64>,
        scale: Vec<f64>,
        weights: Vec<f64>,
        train_meta: TrainParams,
    ) -> Result<Self, ClassifyError> {
        let d = feature_spec.dim;
        if classes.len() < 2 {
            return Err(ClassifyError::TooFewClasses);
        }
        for len in [mean.len(), scale.len()] {
            if len != d {
                return Err(ClassifyError::Dimension { expected: d, got: len });
            }
        }
        if weights.len() != classes.len() * (d + 1) {
            return Err(ClassifyError::Dimension {
                expected: classes.len() * (d + 1),
                got: weights.len(),
            });
        }
        Ok(Self {
            classes,
            feature_spec,
            mean,
            scale,
            weights,
            train_meta,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn feature_spec(&self) -> &FeatureSpec {
        &self.feature_spec
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn train_meta(&self) -> &TrainParams {
        &self.train_meta
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Softmax class probabilities.
    pub fn score(&self, f: &FeatureVector) -> Result<Vec<f64>, ClassifyError> {
        let d = self.feature_spec.dim;
        if f.dim() != d {
            return Err(ClassifyError::Dimension {
                expected: d,
                got: f.dim(),
            });
        }
        let z: Vec<f64> = f
            .values()
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        let mut out = vec![0.0; self.classes.len()];
        logits(&self.weights, &z, &mut out);
        softmax_in_place(&mut out);
        Ok(out)
    }

    pub fn predict(&self, f: &FeatureVector) -> Result<usize, ClassifyError> {
        Ok(crate::metrics::argmax(&self.score(f)?))
    }

    /// Probability of the `relevant` class.
    pub fn relevance_probability(&self, f: &FeatureVector) -> Result<f64, ClassifyError> {
        let idx = self
            .class_index(RELEVANT)
            .ok_or_else(|| ClassifyError::MissingClass(RELEVANT.to_string()))?;
        Ok(self.score(f)?[idx])
    }
}

fn logits(weights: &[f64], z: &[f64], out: &mut [f64]) {
    let stride = z.len() + 1;
    for (c, o) in out.iter_mut().enumerate() {
        let row = &weights[c * stride..(c + 1) * stride];
        *o = row[..z.len()].iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + row[z.len()];
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Regularized mean cross-entropy over standardized features.
#[derive(Debug, Clone)]
pub struct Objective {
    z: Vec<f64>,
    labels: Vec<usize>,
    classes: usize,
    dim: usize,
    l2: f64,
}

impl Objective {
    /// `z` holds `labels.len()` rows of `dim` already-standardized values.
    pub fn new(z: Vec<f64>, labels: Vec<usize>, classes: usize, dim: usize, l2: f64) -> Self {
        assert_eq!(z.len(), labels.len() * dim, "feature matrix shape");
        Self {
            z,
            labels,
            classes,
            dim,
            l2,
        }
    }

    pub fn n_params(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        let stride = self.dim + 1;
        (0..self.classes)
            .map(|c| w[c * stride..c * stride + self.dim].iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            * self.l2
    }

    /// Loss and its gradient at `w`.
    pub fn loss_and_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let (k, d) = (self.classes, self.dim);
        let stride = d + 1;
        let n = self.labels.len();
        let chunks: Vec<(f64, Vec<f64>)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|ci| {
                let mut loss = 0.0;
                let mut grad = vec![0.0; k * stride];
                let mut p = vec![0.0; k];
                for i in ci * CHUNK..((ci + 1) * CHUNK).min(n) {
                    let z = &self.z[i * d..(i + 1) * d];
                    logits(w, z, &mut p);
                    softmax_in_place(&mut p);
                    let y = self.labels[i];
                    loss -= p[y].max(f64::MIN_POSITIVE).ln();
                    for c in 0..k {
                        let r = p[c] - if c == y { 1.0 } else { 0.0 };
                        let g = &mut grad[c * stride..(c + 1) * stride];
                        for (gj, zj) in g[..d].iter_mut().zip(z) {
                            *gj += r * zj;
                        }
                        g[d] += r;
                    }
                }
                (loss, grad)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; k * stride];
        for (l, g) in chunks {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let inv_n = 1.0 / n as f64;
        for c in 0..k {
            for j in 0..stride {
                let idx = c * stride + j;
                grad[idx] *= inv_n;
                if j < d {
                    grad[idx] += 2.0 * self.l2 * w[idx];
                }
            }
        }
        (loss * inv_n + self.penalty(w), grad)
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        self.loss_and_grad(w).0
    }
}

/// A trained model with the objective value at each epoch boundary
/// (`loss_history[0]` is the initial loss).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: ClassifierModel,
    pub loss_history: Vec<f64>,
}

fn standardization(ds: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (ds.len() as f64, ds.dim());
    let mut mean = vec![0.0; d];
    for f in ds.features() {
        for (m, v) in mean.iter_mut().zip(f.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for f in ds.features() {
        for ((s, v), m) in var.iter_mut().zip(f.values()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd < 1e-12 {
                1.0
            } else {
                sd
            }
        })
        .collect();
    (mean, scale)
}

fn check_trainable(ds: &Dataset) -> Result<(), ClassifyError> {
    if ds.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    for (c, &count) in ds.class_counts().iter().enumerate() {
        if count < 2 {
            return Err(ClassifyError::DegenerateClass {
                class: ds.classes()[c].clone(),
                count,
                needed: 2,
            });
        }
    }
    Ok(())
}

/// Full-batch gradient descent from zero weights.
pub fn train(ds: &Dataset, params: &TrainParams) -> Result<TrainedModel, ClassifyError> {
    train_checkpointed(ds, params, 0).map(|(t, _)| t)
}

/// Trains like [`train`] and also returns a model snapshot every `every`
/// epochs (plus the final epoch). `every = 0` disables snapshots.
///
/// A step that would raise the objective is retried at half the step size,
/// so the recorded loss never increases.
pub fn train_checkpointed(
    ds: &Dataset,
    params: &TrainParams,
    every: u32,
) -> Result<(TrainedModel, Vec<(u32, ClassifierModel)>), ClassifyError> {
    check_trainable(ds)?;
    let (k, d) = (ds.classes().len(), ds.dim());
    let (mean, scale) = standardization(ds);
    let mut z = Vec::with_capacity(ds.len() * d);
    for f in ds.features() {
        z.extend(f.values().iter().zip(mean.iter().zip(&scale)).map(|(x, (m, s))| (x - m) / s));
    }
    let obj = Objective::new(z, ds.labels().to_vec(), k, d, params.l2);
    let make = |w: &[f64]| ClassifierModel {
        classes: ds.classes().to_vec(),
        feature_spec: FeatureSpec::for_dim(d),
        mean: mean.clone(),
        scale: scale.clone(),
        weights: w.to_vec(),
        train_meta: params.clone(),
    };

    let mut w = vec![0.0; obj.n_params()];
    let (mut loss, mut grad) = obj.loss_and_grad(&w);
    let mut history = vec![loss];
    let mut checkpoints = Vec::new();
    for epoch in 0..params.epochs {
        let mut step = params.learning_rate_at(epoch);
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - step * gi).collect();
            let (l, g) = obj.loss_and_grad(&cand);
            if l <= loss {
                w = cand;
                loss = l;
                grad = g;
                break;
            }
            step *= 0.5;
        }
        history.push(loss);
        let done = epoch + 1;
        if every > 0 && (done % every == 0 || done == params.epochs) {
            checkpoints.push((done, make(&w)));
        }
    }
    Ok((
        TrainedModel {
            model: make(&w),
            loss_history: history,
        },
        checkpoints,
    ))
}

const MAGIC: &[u8; 4] = b"CFMD";
const VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq)]
#[error("model file invalid at byte {offset}: {reason}")]
pub struct ModelFileError {
    pub offset: usize,
    pub reason: String,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Binary model layout, all integers little-endian:
/// `"CFMD" u8:version u16:n_classes {u16:len bytes}* u16:len spec_id u32:dim
/// u64:seed u32:epochs f64:l2 f64:lr u32:decay_every f64:decay_factor
/// f64[dim]:mean f64[dim]:scale f64[n_classes*(dim+1)]:weights`.
pub fn encode_model(m: &ClassifierModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(m.classes.len() as u16).to_le_bytes());
    for c in &m.classes {
        put_str(&mut out, c);
    }
    put_str(&mut out, &m.feature_spec.id);
    out.extend_from_slice(&(m.feature_spec.dim as u32).to_le_bytes());
    let t = &m.train_meta;
    out.extend_from_slice(&t.seed.to_le_bytes());
    out.extend_from_slice(&t.epochs.to_le_bytes());
    out.extend_from_slice(&t.l2.to_le_bytes());
    out.extend_from_slice(&t.learning_rate.to_le_bytes());
    out.extend_from_slice(&t.decay_every.to_le_bytes());
    out.extend_from_slice(&t.decay_factor.to_le_bytes());
    put_f64s(&mut out, &m.mean);
    put_f64s(&mut out, &m.scale);
    put_f64s(&mut out, &m.weights);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> ModelFileError {
        ModelFileError {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated, needed {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ModelFileError> {
        Ok(self.take(N)?.try_into().expect("slice length"))
    }

    fn u16(&mut self) -> Result<u16, ModelFileError> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32, ModelFileError> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, ModelFileError> {
        self.array().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, ModelFileError> {
        self.array().map(f64::from_le_bytes)
    }

    fn string(&mut self) -> Result<String, ModelFileError> {
        let len = self.u16()? as usize;
        let start = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| ModelFileError {
            offset: start,
            reason: "string is not UTF-8".into(),
        })
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ModelFileError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ClassifierModel, ModelFileError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ModelFileError {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let version = r.array::<1>()?[0];
    if version != VERSION {
        return Err(ModelFileError {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let n_classes = r.u16()? as usize;
    let classes = (0..n_classes).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let id = r.string()?;
    let dim = r.u32()? as usize;
    let train_meta = TrainParams {
        seed: r.u64()?,
        epochs: r.u32()?,
        l2: r.f64()?,
        learning_rate: r.f64()?,
        decay_every: r.u32()?,
        decay_factor: r.f64()?,
    };
    let mean = r.f64s(dim)?;
    let scale = r.f64s(dim)?;
    let weights = r.f64s(n_classes * (dim + 1))?;
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes"));
    }
    ClassifierModel::new(classes, FeatureSpec { id, dim }, mean, scale, weights, train_meta)
        .map_err(|e| r.err(e.to_string()))
}
