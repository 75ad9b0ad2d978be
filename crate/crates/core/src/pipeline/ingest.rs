//! JSONL record ingestion.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::record::ImageRecord;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: usize,
    pub blank: usize,
    /// Lines that failed to parse, had an empty `url`, or repeated an id.
    pub malformed: usize,
    /// 1-based line numbers of the malformed lines.
    pub malformed_lines: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub records: Vec<ImageRecord>,
    pub stats: IngestStats,
}

/// Reads one record per line, in order. Bad lines are counted and skipped;
/// only an unreadable source is an error.
pub fn ingest<R: BufRead>(source: R) -> Result<Ingested, PipelineError> {
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line = line.map_err(PipelineError::Source)?;
        out.stats.lines += 1;
        if line.trim().is_empty() {
            out.stats.blank += 1;
            continue;
        }
        match serde_json::from_str::<ImageRecord>(&line) {
            Ok(r) if !r.url.is_empty() && seen.insert(r.id.clone()) => out.records.push(r),
            Ok(r) => {
                log::warn!("line {}: rejected record {:?}", i + 1, r.id);
                out.stats.malformed += 1;
                out.stats.malformed_lines.push(i + 1);
            }
            Err(e) => {
                log::warn!("line {}: {e}", i + 1);
                out.stats.malformed += 1;
                out.stats.malformed_lines.push(i + 1);
            }
        }
    }
    Ok(out)
}
