//! Canonical serialization and run output files.
//!
//! Objects are written with sorted keys and floats in shortest round-trip
//! form, so equal values always produce equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CoreError, Result};
use crate::sim::{SimOutcome, TimelineRow};

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect::<Map<_, _>>())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Single-line canonical JSON.
pub fn to_canonical_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(&sort_keys(serde_json::to_value(value)?))?)
}

/// Indented canonical JSON with a trailing newline.
pub fn to_canonical_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&sort_keys(serde_json::to_value(value)?))?;
    s.push('\n');
    Ok(s)
}

/// One canonical JSON document per line.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&to_canonical_line(r)?);
        out.push('\n');
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn timeline_csv(rows: &[TimelineRow]) -> String {
    let mut out = String::from("t,task_id,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.t, csv_field(&r.task_id), r.accuracy);
    }
    out
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CoreError::io(path, e))
}

/// Writes `report.json`, `timeline.csv` and `events.jsonl` into `dir`,
/// creating it if needed.
pub fn write_report(outcome: &SimOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    write_file(&dir.join("report.json"), &to_canonical_pretty(&outcome.report)?)?;
    write_file(&dir.join("timeline.csv"), &timeline_csv(&outcome.report.timeline))?;
    write_file(&dir.join("events.jsonl"), &to_jsonl(&outcome.events)?)?;
    Ok(())
}
