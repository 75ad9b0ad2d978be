//! Retention accounting per damage category.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Action, Stage, StageOutcome, REASON_DECODE};
use crate::record::{DamageLabel, ImageRecord};

pub const ALL_ROW: &str = "all";
pub const UNLABELED_ROW: &str = "unlabeled";

/// Counts at each stage boundary. `after_relevancy` and `after_dedup` count
/// records that passed that stage and every stage before it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetentionRow {
    pub raw: usize,
    pub fetch_errors: usize,
    pub decode_errors: usize,
    pub after_relevancy: usize,
    pub after_dedup: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub stage_order: Vec<Stage>,
    pub rows: IndexMap<String, RetentionRow>,
    /// `1 − kept / raw` over all records, as a fraction.
    pub overall_reduction: f64,
}

impl RetentionReport {
    /// The row covering every record.
    pub fn total(&self) -> &RetentionRow {
        self.rows
            .get(ALL_ROW)
            .or_else(|| self.rows.get(UNLABELED_ROW))
            .expect("report always has a total row")
    }

    pub fn kept(&self) -> usize {
        let t = self.total();
        match self.stage_order.last() {
            Some(Stage::Relevancy) => t.after_relevancy,
            _ => t.after_dedup,
        }
    }
}

pub(super) struct Tally {
    categories: Vec<usize>,
    rows: IndexMap<String, RetentionRow>,
    stage_order: [Stage; 2],
}

impl Tally {
    pub(super) fn new(records: &[ImageRecord], stage_order: [Stage; 2]) -> Self {
        let labeled = records.iter().any(|r| r.damage.is_some());
        let mut rows = IndexMap::new();
        if labeled {
            for d in DamageLabel::ALL {
                rows.insert(d.as_str().to_string(), RetentionRow::default());
            }
            if records.iter().any(|r| r.damage.is_none()) {
                rows.insert(UNLABELED_ROW.to_string(), RetentionRow::default());
            }
        } else {
            rows.insert(UNLABELED_ROW.to_string(), RetentionRow::default());
        }
        let categories: Vec<usize> = records
            .iter()
            .map(|r| {
                let name = r.damage.map_or(UNLABELED_ROW, DamageLabel::as_str);
                rows.get_index_of(name).expect("row exists")
            })
            .collect();
        for &c in &categories {
            rows[c].raw += 1;
        }
        if labeled {
            let total = rows.values().fold(RetentionRow::default(), |mut acc, r| {
                acc.raw += r.raw;
                acc
            });
            rows.insert(ALL_ROW.to_string(), total);
        }
        Self {
            categories,
            rows,
            stage_order,
        }
    }

    pub(super) fn record(&mut self, index: usize, o: &StageOutcome) {
        // position of the dropping stage in fetch, first filter, second filter
        let dropped_at = match (o.action, o.stage) {
            (Action::Pass, _) => 3,
            (Action::Drop, Stage::Fetch) => 0,
            (Action::Drop, s) if s == self.stage_order[0] => 1,
            (Action::Drop, _) => 2,
        };
        let mut targets = vec![self.categories[index]];
        if let Some(all) = self.rows.get_index_of(ALL_ROW) {
            targets.push(all);
        }
        for t in targets {
            let row = &mut self.rows[t];
            if dropped_at == 0 {
                if o.reason == REASON_DECODE {
                    row.decode_errors += 1;
                } else {
                    row.fetch_errors += 1;
                }
            }
            for (pos, stage) in self.stage_order.iter().enumerate() {
                if dropped_at > pos + 1 {
                    match stage {
                        Stage::Relevancy => row.after_relevancy += 1,
                        Stage::Dedup => row.after_dedup += 1,
                        Stage::Fetch => {}
                    }
                }
            }
        }
    }

    pub(super) fn finish(self) -> RetentionReport {
        let mut report = RetentionReport {
            stage_order: self.stage_order.to_vec(),
            rows: self.rows,
            overall_reduction: 0.0,
        };
        let raw = report.total().raw;
        if raw > 0 {
            report.overall_reduction = 1.0 - report.kept() as f64 / raw as f64;
        }
        report
    }
}
