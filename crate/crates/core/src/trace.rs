//! Workload traces: JSONL files of data arrivals and drift events.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::config::SimConfig;
use crate::error::{CoreError, Result};
use crate::report::{to_jsonl, write_file};
use crate::sim::{generate_workload, WorkloadEvent};

/// Generates the workload for `seed` and writes it to `out`.
pub fn gen_trace(config: &SimConfig, seed: u64, out: &Path) -> Result<Vec<WorkloadEvent>> {
    let events = generate_workload(config, seed)?;
    write_trace(&events, out)?;
    Ok(events)
}

pub fn write_trace(events: &[WorkloadEvent], out: &Path) -> Result<()> {
    write_file(out, &to_jsonl(events)?)
}

/// Reads a trace, checking that times never decrease and batch ids are
/// unique. Blank lines are skipped.
pub fn read_trace(path: &Path) -> Result<Vec<WorkloadEvent>> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let bad = |line: usize, msg: String| CoreError::Trace { path: path.to_owned(), line, msg };
    let mut events = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    let mut ids = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let event: WorkloadEvent = serde_json::from_str(raw).map_err(|e| bad(line, e.to_string()))?;
        let t = event.t();
        if !t.is_finite() || t < last_t {
            return Err(bad(line, format!("time {t} precedes {last_t}")));
        }
        last_t = t;
        if let WorkloadEvent::Arrival { batch_id, .. } = &event {
            if !ids.insert(*batch_id) {
                return Err(bad(line, format!("duplicate batch id {batch_id}")));
            }
        }
        events.push(event);
    }
    Ok(events)
}
