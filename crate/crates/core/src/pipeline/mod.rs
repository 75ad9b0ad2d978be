//! The streaming filter: ingest → fetch/decode → relevancy → de-duplication,
//! with per-record outcomes and retention accounting.
//!
//! Fetching, decoding, feature extraction and relevancy scoring run on a
//! pool of workers fed through bounded queues. Results are re-sequenced into
//! arrival order before a single owner applies the filters, so verdicts do
//! not depend on scheduling.

mod fetch;
mod ingest;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::thread;

use crossbeam_channel::bounded;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{extract_with_hash, ClassifierModel, FeatureVector, FEATURE_DIM, RELEVANCE_THRESHOLD, RELEVANT};
use crate::dedup::{restore, snapshot, DedupDecision, Engine, HashWindow, SnapshotError};
use crate::imagecore::decode;
use crate::phash::PerceptualHash;
use crate::record::{ImageRecord, Relevance};

pub use fetch::{FetchError, Fetcher, FileFetcher};
#[cfg(feature = "http")]
pub use fetch::HttpFetcher;
pub use ingest::{ingest, IngestStats, Ingested};
pub use report::{RetentionReport, RetentionRow, ALL_ROW, UNLABELED_ROW};

pub const DEFAULT_WORKERS: usize = 8;
pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

pub const REASON_FETCH: &str = "fetch-error";
pub const REASON_DECODE: &str = "decode-error";
pub const REASON_KEPT: &str = "kept";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read record source: {0}")]
    Source(#[source] std::io::Error),
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("snapshot file {path}: {source}")]
    SnapshotIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Fetch,
    Relevancy,
    Dedup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Pass,
    Drop,
}

/// The terminal outcome of one record: the stage that dropped it, or the
/// last stage with `pass`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub record_id: String,
    pub stage: Stage,
    pub action: Action,
    pub reason: String,
}

/// Probability that a record is relevant.
pub trait RelevanceScorer: Send + Sync {
    /// Rejects scorers that cannot work on pipeline features.
    fn check(&self) -> Result<(), String> {
        Ok(())
    }

    fn relevance(&self, record: &ImageRecord, features: &FeatureVector) -> Result<f64, String>;
}

impl RelevanceScorer for ClassifierModel {
    fn check(&self) -> Result<(), String> {
        if self.feature_spec().dim != FEATURE_DIM {
            return Err(format!(
                "model expects {}-dimensional features, pipeline produces {FEATURE_DIM}",
                self.feature_spec().dim
            ));
        }
        if self.class_index(RELEVANT).is_none() {
            return Err(format!("model has no {RELEVANT:?} class"));
        }
        Ok(())
    }

    fn relevance(&self, _: &ImageRecord, features: &FeatureVector) -> Result<f64, String> {
        self.relevance_probability(features).map_err(|e| e.to_string())
    }
}

/// Scores from the record's own relevance label (1 or 0). Unlabeled records
/// count as relevant.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelScorer;

impl RelevanceScorer for LabelScorer {
    fn relevance(&self, record: &ImageRecord, _: &FeatureVector) -> Result<f64, String> {
        Ok(match record.relevance {
            Some(Relevance::Irrelevant) => 0.0,
            _ => 1.0,
        })
    }
}

/// Passes every record.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassAll;

impl RelevanceScorer for PassAll {
    fn relevance(&self, _: &ImageRecord, _: &FeatureVector) -> Result<f64, String> {
        Ok(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub workers: usize,
    pub queue_capacity: usize,
    /// Run de-duplication before relevancy filtering.
    pub dedup_first: bool,
    pub relevance_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            workers: DEFAULT_WORKERS,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            dedup_first: false,
            relevance_threshold: RELEVANCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub kept: Vec<ImageRecord>,
    /// One outcome per input record, in input order.
    pub outcomes: Vec<StageOutcome>,
    pub report: RetentionReport,
}

enum Analyzed {
    Ok { hash: PerceptualHash, p_relevant: f64 },
    Dropped(&'static str),
}

fn analyze(r: &ImageRecord, fetcher: &dyn Fetcher, scorer: &dyn RelevanceScorer) -> Analyzed {
    let bytes = match fetcher.fetch(&r.url) {
        Ok(b) => b,
        Err(e) => {
            log::debug!("{}: {e}", r.id);
            return Analyzed::Dropped(REASON_FETCH);
        }
    };
    let img = match decode(&bytes) {
        Ok(img) => img,
        Err(e) => {
            log::debug!("{}: {e}", r.id);
            return Analyzed::Dropped(REASON_DECODE);
        }
    };
    let (features, hash) = extract_with_hash(&img);
    match scorer.relevance(r, &features) {
        Ok(p) => Analyzed::Ok { hash, p_relevant: p },
        Err(e) => {
            // Checked up front, so this only fires for a misbehaving scorer.
            log::error!("{}: scoring failed: {e}", r.id);
            Analyzed::Ok { hash, p_relevant: 0.0 }
        }
    }
}

/// Features and hash of one record, or its drop reason and a detail message.
pub type Extracted = Result<(FeatureVector, PerceptualHash), (&'static str, String)>;

/// Fetches, decodes and featurizes every record in parallel. Results keep
/// input order; failures carry the drop reason and a detail message.
pub fn extract_records(
    records: &[ImageRecord],
    fetcher: &dyn Fetcher,
) -> Vec<Extracted> {
    records
        .par_iter()
        .map(|r| {
            let bytes = fetcher.fetch(&r.url).map_err(|e| (REASON_FETCH, e.to_string()))?;
            let img = decode(&bytes).map_err(|e| (REASON_DECODE, e.to_string()))?;
            Ok(extract_with_hash(&img))
        })
        .collect()
}

fn outcome(r: &ImageRecord, stage: Stage, action: Action, reason: impl Into<String>) -> StageOutcome {
    StageOutcome {
        record_id: r.id.clone(),
        stage,
        action,
        reason: reason.into(),
    }
}

/// Runs the filters over `records` in order, updating `window` in place.
pub fn run_pipeline(
    records: &[ImageRecord],
    fetcher: &dyn Fetcher,
    scorer: &dyn RelevanceScorer,
    window: &mut HashWindow,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    scorer.check().map_err(PipelineError::Config)?;
    if cfg.workers == 0 || cfg.queue_capacity == 0 {
        return Err(PipelineError::Config("workers and queue capacity must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.relevance_threshold) {
        return Err(PipelineError::Config("relevance threshold must be in [0, 1]".into()));
    }

    let stage_order = if cfg.dedup_first {
        [Stage::Dedup, Stage::Relevancy]
    } else {
        [Stage::Relevancy, Stage::Dedup]
    };
    let mut outcomes = Vec::with_capacity(records.len());
    let mut kept = Vec::new();
    let mut tally = report::Tally::new(records, stage_order);

    thread::scope(|s| {
        let (job_tx, job_rx) = bounded::<usize>(cfg.queue_capacity);
        let (res_tx, res_rx) = bounded::<(usize, Analyzed)>(cfg.queue_capacity);
        s.spawn(move || {
            for i in 0..records.len() {
                if job_tx.send(i).is_err() {
                    break;
                }
            }
        });
        for _ in 0..cfg.workers {
            let (job_rx, res_tx) = (job_rx.clone(), res_tx.clone());
            s.spawn(move || {
                for i in job_rx {
                    if res_tx.send((i, analyze(&records[i], fetcher, scorer))).is_err() {
                        break;
                    }
                }
            });
        }
        drop(res_tx);

        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, a) in res_rx {
            pending.insert(i, a);
            while let Some(a) = pending.remove(&next) {
                let r = &records[next];
                let o = match a {
                    Analyzed::Dropped(reason) => outcome(r, Stage::Fetch, Action::Drop, reason),
                    Analyzed::Ok { hash, p_relevant } => {
                        let mut result = None;
                        for stage in stage_order {
                            let drop_reason = match stage {
                                Stage::Relevancy if p_relevant < cfg.relevance_threshold => {
                                    Some(format!("irrelevant p={p_relevant:.4}"))
                                }
                                Stage::Dedup => match window.check_and_insert(hash, &r.id) {
                                    DedupDecision::Duplicate { matched_id, distance } => {
                                        Some(format!("duplicate-of:{matched_id} d={distance}"))
                                    }
                                    DedupDecision::Distinct => None,
                                },
                                _ => None,
                            };
                            if let Some(reason) = drop_reason {
                                result = Some(outcome(r, stage, Action::Drop, reason));
                                break;
                            }
                        }
                        result.unwrap_or_else(|| {
                            kept.push(r.clone());
                            outcome(r, stage_order[1], Action::Pass, REASON_KEPT)
                        })
                    }
                };
                tally.record(next, &o);
                outcomes.push(o);
                next += 1;
            }
        }
    });

    Ok(PipelineOutput {
        kept,
        outcomes,
        report: tally.finish(),
    })
}

pub fn save_snapshot(window: &HashWindow, path: &Path) -> Result<(), PipelineError> {
    fs::write(path, snapshot(window)).map_err(|source| PipelineError::SnapshotIo {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_snapshot(path: &Path, engine: Engine) -> Result<HashWindow, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::SnapshotIo {
        path: path.display().to_string(),
        source,
    })?;
    Ok(restore(&bytes, engine)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dedup::DedupConfig;
    use crate::imagecore::netpbm;
    use crate::imagecore::Raster;
    use crate::record::DamageLabel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells: Vec<u8> = (0..16).map(|_| rng.gen()).collect();
        Raster::from_rgb_fn(48, 48, |x, y| {
            let v = cells[(y / 12) * 4 + x / 12];
            [v, v / 2, 255 - v]
        })
        .unwrap()
    }

    fn setup(images: &[(usize, u64)]) -> (tempfile::TempDir, Vec<ImageRecord>) {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = Vec::new();
        for &(i, seed) in images {
            let name = format!("img{i}.ppm");
            fs::write(dir.path().join(&name), netpbm::encode(&textured(seed))).unwrap();
            recs.push(ImageRecord::new(format!("r{i}"), name));
        }
        (dir, recs)
    }

    fn window() -> HashWindow {
        HashWindow::new(DedupConfig::default())
    }

    #[test]
    fn repeated_image_keeps_one() {
        let (dir, recs) = setup(&[(0, 1), (1, 1), (2, 1), (3, 1), (4, 1)]);
        let out = run_pipeline(&recs, &FileFetcher::new(dir.path()), &PassAll, &mut window(), &PipelineConfig::default()).unwrap();
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.outcomes[0].reason, REASON_KEPT);
        assert!(out.outcomes[1..].iter().all(|o| o.reason == "duplicate-of:r0 d=0"));
        let all = &out.report.rows[UNLABELED_ROW];
        assert_eq!((all.raw, all.after_relevancy, all.after_dedup), (5, 5, 1));
        assert_eq!(out.report.overall_reduction, 1.0 - 1.0 / 5.0);
    }

    #[test]
    fn irrelevant_stream_is_dropped_at_relevancy() {
        let (dir, mut recs) = setup(&[(0, 1), (1, 2), (2, 3)]);
        for r in &mut recs {
            r.relevance = Some(Relevance::Irrelevant);
        }
        let mut w = window();
        let out = run_pipeline(&recs, &FileFetcher::new(dir.path()), &LabelScorer, &mut w, &PipelineConfig::default()).unwrap();
        assert!(out.kept.is_empty());
        assert!(out.outcomes.iter().all(|o| o.stage == Stage::Relevancy && o.reason == "irrelevant p=0.0000"));
        assert!(w.is_empty());
    }

    #[test]
    fn fetch_and_decode_failures() {
        let (dir, mut recs) = setup(&[(0, 1)]);
        let bytes = netpbm::encode(&textured(5));
        fs::write(dir.path().join("trunc.ppm"), &bytes[..bytes.len() / 2]).unwrap();
        recs.push(ImageRecord::new("t", "trunc.ppm"));
        recs.push(ImageRecord::new("m", "missing.ppm"));
        let out = run_pipeline(&recs, &FileFetcher::new(dir.path()), &PassAll, &mut window(), &PipelineConfig::default()).unwrap();
        let reasons: Vec<_> = out.outcomes.iter().map(|o| o.reason.as_str()).collect();
        assert_eq!(reasons, [REASON_KEPT, REASON_DECODE, REASON_FETCH]);
        let row = &out.report.rows[UNLABELED_ROW];
        assert_eq!((row.fetch_errors, row.decode_errors), (1, 1));
    }

    #[test]
    fn outcomes_follow_input_order_under_concurrency() {
        let imgs: Vec<(usize, u64)> = (0..60).map(|i| (i, (i % 20) as u64)).collect();
        let (dir, recs) = setup(&imgs);
        let fetcher = FileFetcher::new(dir.path());
        let one = PipelineConfig {
            workers: 1,
            queue_capacity: 1,
            ..PipelineConfig::default()
        };
        let a = run_pipeline(&recs, &fetcher, &PassAll, &mut window(), &one).unwrap();
        let b = run_pipeline(&recs, &fetcher, &PassAll, &mut window(), &PipelineConfig::default()).unwrap();
        assert_eq!(a, b);
        let ids: Vec<_> = a.outcomes.iter().map(|o| o.record_id.clone()).collect();
        let want: Vec<_> = recs.iter().map(|r| r.id.clone()).collect();
        assert_eq!(ids, want);
    }

    #[test]
    fn labeled_rows_and_conservation() {
        let imgs: Vec<(usize, u64)> = (0..30).map(|i| (i, (i % 10) as u64)).collect();
        let (dir, mut recs) = setup(&imgs);
        for (i, r) in recs.iter_mut().enumerate() {
            r.damage = Some(DamageLabel::ALL[i % 3]);
            if i % 7 == 0 {
                r.relevance = Some(Relevance::Irrelevant);
            }
        }
        let out = run_pipeline(&recs, &FileFetcher::new(dir.path()), &LabelScorer, &mut window(), &PipelineConfig::default()).unwrap();
        let names: Vec<_> = out.report.rows.keys().cloned().collect();
        assert_eq!(names, ["severe", "mild", "none", ALL_ROW]);
        let total = &out.report.rows[ALL_ROW];
        assert_eq!(total.raw, 30);
        assert_eq!(total.after_dedup, out.kept.len());
        let dropped = out.outcomes.iter().filter(|o| o.action == Action::Drop).count();
        assert_eq!(dropped + out.kept.len(), 30);
        for row in out.report.rows.values() {
            assert!(row.raw - row.fetch_errors - row.decode_errors >= row.after_relevancy);
            assert!(row.after_relevancy >= row.after_dedup);
        }
    }

    #[test]
    fn snapshot_file_round_trip() {
        let (dir, recs) = setup(&[(0, 1), (1, 2), (2, 3)]);
        let mut w = window();
        run_pipeline(&recs, &FileFetcher::new(dir.path()), &PassAll, &mut w, &PipelineConfig::default()).unwrap();
        let path = dir.path().join("w.snap");
        save_snapshot(&w, &path).unwrap();
        let back = load_snapshot(&path, Engine::BkTree).unwrap();
        assert_eq!(snapshot(&back), fs::read(&path).unwrap());
        let again = run_pipeline(&recs, &FileFetcher::new(dir.path()), &PassAll, &mut back.clone(), &PipelineConfig::default()).unwrap();
        assert!(again.kept.is_empty());
        assert!(load_snapshot(&dir.path().join("nope"), Engine::LinearScan).is_err());
    }

    #[test]
    fn model_scorer_is_checked() {
        use crate::classify::{train, Dataset, TrainParams};
        let ds = Dataset::new(
            vec!["a".into(), "b".into()],
            (0..4).map(|i| FeatureVector::new(vec![i as f64])).collect(),
            vec![0, 0, 1, 1],
        )
        .unwrap();
        let m = train(&ds, &TrainParams::default()).unwrap().model;
        let err = run_pipeline(&[], &FileFetcher::new("."), &m, &mut window(), &PipelineConfig::default());
        assert!(matches!(err, Err(PipelineError::Config(_))));
    }

    #[test]
    fn dedup_first_changes_stage_order() {
        let (dir, mut recs) = setup(&[(0, 1), (1, 1)]);
        recs[0].relevance = Some(Relevance::Irrelevant);
        let fetcher = FileFetcher::new(dir.path());
        let default = run_pipeline(&recs, &fetcher, &LabelScorer, &mut window(), &PipelineConfig::default()).unwrap();
        assert_eq!(default.kept.len(), 1);
        let cfg = PipelineConfig {
            dedup_first: true,
            ..PipelineConfig::default()
        };
        let swapped = run_pipeline(&recs, &fetcher, &LabelScorer, &mut window(), &cfg).unwrap();
        assert!(swapped.kept.is_empty());
        assert_eq!(swapped.outcomes[1].stage, Stage::Dedup);
    }
}
