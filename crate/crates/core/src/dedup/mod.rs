//! The de-duplication filter: a bounded FIFO window of recently seen distinct
//! hashes with Hamming-radius lookups.
//!
//! Two interchangeable engines back the window. The default packed linear
//! scan compares against every stored hash with hardware popcount; the
//! BK-tree prunes with the triangle inequality and handles FIFO eviction with
//! tombstones plus periodic rebuilds. Both produce identical decisions.

mod bktree;
mod linear;
pub mod snapshot;
mod tune;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phash::PerceptualHash;

pub use bktree::BkTree;
pub use snapshot::{restore, snapshot, SnapshotError};
pub use tune::{brute_force_accuracy, tune_threshold, write_curve_csv, AnnotatedPair, ThresholdCurve};

pub const DEFAULT_THRESHOLD: u32 = 10;
pub const DEFAULT_CAPACITY: usize = 100_000;
pub const MAX_DISTANCE: u32 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DedupError {
    #[error("threshold {0} exceeds 64")]
    Threshold(u32),
    #[error("window capacity must be at least 1")]
    Capacity,
    #[error("capacity {0} does not fit the snapshot format")]
    CapacityTooLarge(usize),
    #[error("threshold tuning needs at least one annotated pair")]
    NoPairs,
    #[error("invalid distance range {d_min}..={d_max}")]
    Range { d_min: u32, d_max: u32 },
    #[error("unknown engine {0:?} (expected linear-scan or bk-tree)")]
    UnknownEngine(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[default]
    LinearScan,
    BkTree,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::LinearScan => "linear-scan",
            Engine::BkTree => "bk-tree",
        })
    }
}

impl FromStr for Engine {
    type Err = DedupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear-scan" | "linear" => Ok(Engine::LinearScan),
            "bk-tree" | "bktree" => Ok(Engine::BkTree),
            other => Err(DedupError::UnknownEngine(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupConfig {
    threshold: u32,
    capacity: usize,
    engine: Engine,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            capacity: DEFAULT_CAPACITY,
            engine: Engine::LinearScan,
        }
    }
}

impl DedupConfig {
    pub fn new(threshold: u32, capacity: usize, engine: Engine) -> Result<Self, DedupError> {
        if threshold > MAX_DISTANCE {
            return Err(DedupError::Threshold(threshold));
        }
        if capacity == 0 {
            return Err(DedupError::Capacity);
        }
        if capacity > u32::MAX as usize {
            return Err(DedupError::CapacityTooLarge(capacity));
        }
        Ok(Self {
            threshold,
            capacity,
            engine,
        })
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn engine(&self) -> Engine {
        self.engine
    }

    pub fn with_engine(self, engine: Engine) -> Self {
        Self { engine, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum DedupDecision {
    Distinct,
    Duplicate { matched_id: String, distance: u32 },
}

impl DedupDecision {
    pub fn is_duplicate(&self) -> bool {
        matches!(self, DedupDecision::Duplicate { .. })
    }
}

/// FIFO window of `(hash, id)` entries. Entries are addressed by a sequence
/// number that increases by one per insertion, so the entry at deque
/// position `i` has sequence `first_seq + i`.
#[derive(Debug, Clone)]
pub struct HashWindow {
    config: DedupConfig,
    hashes: VecDeque<u64>,
    ids: VecDeque<String>,
    first_seq: u64,
    tree: Option<BkTree>,
}

impl HashWindow {
    pub fn new(config: DedupConfig) -> Self {
        let tree = match config.engine {
            Engine::LinearScan => None,
            Engine::BkTree => Some(BkTree::new()),
        };
        Self {
            config,
            hashes: VecDeque::new(),
            ids: VecDeque::new(),
            first_seq: 0,
            tree,
        }
    }

    pub fn config(&self) -> &DedupConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    /// Entries oldest first.
    pub fn entries(&self) -> impl Iterator<Item = (PerceptualHash, &str)> + '_ {
        self.hashes
            .iter()
            .zip(&self.ids)
            .map(|(&h, id)| (PerceptualHash(h), id.as_str()))
    }

    /// Closest stored entry within `radius` as `(deque position, distance)`;
    /// ties go to the oldest entry.
    fn nearest(&self, h: PerceptualHash, radius: u32) -> Option<(usize, u32)> {
        match &self.tree {
            None => linear::nearest(&self.hashes, h.0, radius),
            Some(tree) => tree
                .nearest(h.0, radius)
                .map(|(seq, d)| ((seq - self.first_seq) as usize, d)),
        }
    }

    /// Returns `Duplicate` for the closest match within the threshold without
    /// inserting; otherwise inserts `h`, evicting the oldest entry when full.
    pub fn check_and_insert(&mut self, h: PerceptualHash, id: &str) -> DedupDecision {
        if let Some((pos, distance)) = self.nearest(h, self.config.threshold) {
            return DedupDecision::Duplicate {
                matched_id: self.ids[pos].clone(),
                distance,
            };
        }
        self.push(h, id.to_owned());
        DedupDecision::Distinct
    }

    /// Appends unconditionally. Used by restore and by check_and_insert.
    fn push(&mut self, h: PerceptualHash, id: String) {
        if self.hashes.len() == self.config.capacity {
            self.hashes.pop_front();
            self.ids.pop_front();
            if let Some(tree) = &mut self.tree {
                tree.remove(self.first_seq);
            }
            self.first_seq += 1;
        }
        let seq = self.first_seq + self.hashes.len() as u64;
        self.hashes.push_back(h.0);
        self.ids.push_back(id);
        if let Some(tree) = &mut self.tree {
            tree.insert(h.0, seq);
        }
    }

    /// All entries within `radius`, ascending by distance then age. Read-only.
    pub fn query(&self, h: PerceptualHash, radius: u32) -> Vec<(String, u32)> {
        let mut hits: Vec<(usize, u32)> = match &self.tree {
            None => linear::within(&self.hashes, h.0, radius),
            Some(tree) => tree
                .within(h.0, radius)
                .into_iter()
                .map(|(seq, d)| ((seq - self.first_seq) as usize, d))
                .collect(),
        };
        hits.sort_unstable_by_key(|&(pos, d)| (d, pos));
        hits.into_iter()
            .map(|(pos, d)| (self.ids[pos].clone(), d))
            .collect()
    }

    /// Sanity check used by tests: the tree (if any) indexes exactly the
    /// hashes held in the FIFO.
    pub fn index_matches_fifo(&self) -> bool {
        match &self.tree {
            None => true,
            Some(tree) => {
                let mut live = tree.live_entries();
                live.sort_unstable_by_key(|&(seq, _)| seq);
                live.len() == self.hashes.len()
                    && live.iter().zip(self.hashes.iter()).enumerate().all(
                        |(i, (&(seq, h), &fifo))| seq == self.first_seq + i as u64 && h == fifo,
                    )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phash::hamming;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window(threshold: u32, capacity: usize, engine: Engine) -> HashWindow {
        HashWindow::new(DedupConfig::new(threshold, capacity, engine).unwrap())
    }

    const ENGINES: [Engine; 2] = [Engine::LinearScan, Engine::BkTree];

    #[test]
    fn config_validation() {
        assert_eq!(
            DedupConfig::new(65, 10, Engine::LinearScan),
            Err(DedupError::Threshold(65))
        );
        assert_eq!(
            DedupConfig::new(10, 0, Engine::LinearScan),
            Err(DedupError::Capacity)
        );
        let d = DedupConfig::default();
        assert_eq!((d.threshold(), d.capacity()), (10, 100_000));
        assert_eq!("bk-tree".parse::<Engine>(), Ok(Engine::BkTree));
        assert!("hnsw".parse::<Engine>().is_err());
    }

    #[test]
    fn first_insert_is_distinct() {
        for engine in ENGINES {
            let mut w = window(10, 5, engine);
            assert_eq!(
                w.check_and_insert(PerceptualHash(42), "a"),
                DedupDecision::Distinct
            );
            assert_eq!(w.len(), 1);
        }
    }

    #[test]
    fn repeat_is_duplicate_at_zero() {
        for engine in ENGINES {
            let mut w = window(10, 5, engine);
            w.check_and_insert(PerceptualHash(42), "a");
            assert_eq!(
                w.check_and_insert(PerceptualHash(42), "b"),
                DedupDecision::Duplicate {
                    matched_id: "a".into(),
                    distance: 0
                }
            );
            assert_eq!(w.len(), 1, "duplicates are not inserted");
        }
    }

    #[test]
    fn fifo_eviction_forgets_oldest() {
        let far = [0u64, 0xFFFF_FFFF, 0xFFFF_FFFF_0000_0000, u64::MAX];
        for engine in ENGINES {
            let mut w = window(10, 3, engine);
            for (i, &h) in far.iter().enumerate() {
                assert_eq!(
                    w.check_and_insert(PerceptualHash(h), &format!("h{i}")),
                    DedupDecision::Distinct
                );
            }
            assert_eq!(w.len(), 3);
            assert_eq!(
                w.check_and_insert(PerceptualHash(far[0]), "again"),
                DedupDecision::Distinct
            );
            assert!(w.index_matches_fifo());
        }
    }

    #[test]
    fn oldest_wins_ties() {
        for engine in ENGINES {
            let mut w = window(3, 10, engine);
            w.check_and_insert(PerceptualHash(0b0000), "old");
            // distance 4 from "old": both distinct under threshold 3
            w.check_and_insert(PerceptualHash(0b1111_0000), "new");
            // probe at distance 2 from both
            let probe = PerceptualHash(0b0011_0000);
            let d_old = hamming(probe, PerceptualHash(0));
            let d_new = hamming(probe, PerceptualHash(0b1111_0000));
            assert_eq!((d_old, d_new), (2, 2));
            assert_eq!(
                w.check_and_insert(probe, "p"),
                DedupDecision::Duplicate {
                    matched_id: "old".into(),
                    distance: 2
                }
            );
        }
    }

    #[test]
    fn closer_match_beats_older() {
        for engine in ENGINES {
            let mut w = window(10, 10, engine);
            w.check_and_insert(PerceptualHash(0), "old");
            w.check_and_insert(PerceptualHash(0xFF_FFFF), "new"); // d=24 from old
            let probe = PerceptualHash(0xFF_FFFE); // d=23 old, d=1 new
            assert_eq!(
                w.check_and_insert(probe, "p"),
                DedupDecision::Duplicate {
                    matched_id: "new".into(),
                    distance: 1
                }
            );
        }
    }

    #[test]
    fn query_examples() {
        for engine in ENGINES {
            let mut w = window(0, 10, engine);
            assert!(w.query(PerceptualHash(1), 64).is_empty());
            w.check_and_insert(PerceptualHash(1), "x");
            assert_eq!(w.query(PerceptualHash(1), 0), vec![("x".to_string(), 0)]);
            w.check_and_insert(PerceptualHash(0xF000), "y");
            w.check_and_insert(PerceptualHash(0xFFFF_0000_0000), "z");
            let hits = w.query(PerceptualHash(0), 64);
            let ids: Vec<_> = hits.iter().map(|(id, _)| id.as_str()).collect();
            assert_eq!(ids, ["x", "y", "z"]);
            assert_eq!(hits.iter().map(|h| h.1).collect::<Vec<_>>(), [1, 4, 16]);
        }
    }

    #[test]
    fn query_engines_agree_on_random_hashes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut lin = window(10, 2000, Engine::LinearScan);
        let mut bk = window(10, 2000, Engine::BkTree);
        // Bias toward a few centres so radius-10 neighbourhoods are populated.
        let centres: Vec<u64> = (0..20).map(|_| rng.gen()).collect();
        for i in 0..1000 {
            let mut h = centres[rng.gen_range(0..centres.len())];
            for _ in 0..rng.gen_range(0..20) {
                h ^= 1 << rng.gen_range(0..64);
            }
            lin.push(PerceptualHash(h), format!("i{i}"));
            bk.push(PerceptualHash(h), format!("i{i}"));
        }
        let mut nonempty = 0;
        for _ in 0..200 {
            let q = PerceptualHash(centres[rng.gen_range(0..centres.len())] ^ rng.gen::<u64>() & 0xF);
            let a = lin.query(q, 10);
            nonempty += usize::from(!a.is_empty());
            assert_eq!(a, bk.query(q, 10));
        }
        assert!(nonempty > 100);
    }

    #[test]
    fn window_holds_last_capacity_entries() {
        for engine in ENGINES {
            let mut w = window(0, 7, engine);
            for i in 0..50u64 {
                w.check_and_insert(PerceptualHash(i), &i.to_string());
                assert!(w.len() <= 7);
            }
            let held: Vec<u64> = w.entries().map(|(h, _)| h.0).collect();
            assert_eq!(held, (43..50).collect::<Vec<_>>());
            assert!(w.index_matches_fifo());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn engines_agree_on_decision_streams(
            seed in any::<u64>(), capacity in 1usize..40, threshold in 0u32..16
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut lin = window(threshold, capacity, Engine::LinearScan);
            let mut bk = window(threshold, capacity, Engine::BkTree);
            let mut base: u64 = rng.gen();
            for i in 0..300 {
                if rng.gen_bool(0.3) {
                    base = rng.gen();
                }
                let h = PerceptualHash(base ^ (rng.gen::<u64>() & rng.gen::<u64>() & rng.gen::<u64>()));
                let id = i.to_string();
                prop_assert_eq!(lin.check_and_insert(h, &id), bk.check_and_insert(h, &id));
                prop_assert!(bk.index_matches_fifo());
            }
            prop_assert!(lin.entries().eq(bk.entries()));
        }

        #[test]
        fn replay_is_all_duplicates(seed in any::<u64>(), n in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let stream: Vec<u64> = (0..n).map(|_| rng.gen()).collect();
            for engine in ENGINES {
                let mut w = window(10, n, engine);
                for (i, &h) in stream.iter().enumerate() {
                    w.check_and_insert(PerceptualHash(h), &i.to_string());
                }
                for (i, &h) in stream.iter().enumerate() {
                    let d = w.check_and_insert(PerceptualHash(h), &format!("r{i}"));
                    prop_assert!(d.is_duplicate());
                }
            }
        }
    }
}
