//! Turning raw structured records into a finalized [`Log`].
//!
//! The pipeline is `ingest` (or `ingest_csv`) → optional `time_align` →
//! `finalize`. Raw records are JSON objects, one per line; nested objects
//! are flattened into dotted field names.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::event::{Event, EventKind, Log, Value, LOG_BEGIN, LOG_END, META_FIELD, RESERVED_FIELDS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: unknown event kind `{value}`")]
    UnknownKind { line: usize, value: String },
    #[error("line {line}: missing time field")]
    MissingTime { line: usize },
    #[error("invalid ingest configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("clock alignment needs at least 2 anchors, got {0}")]
    InsufficientAnchors(usize),
    #[error("anchor {0} breaks ordering: ground times must increase strictly and canonical times must not decrease")]
    UnorderedAnchors(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    S,
    Ms,
    #[default]
    Us,
}

impl TimeUnit {
    fn micros(self) -> i64 {
        match self {
            TimeUnit::S => 1_000_000,
            TimeUnit::Ms => 1_000,
            TimeUnit::Us => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub kind_field: String,
    pub time_field: String,
    pub kind_aliases: BTreeMap<String, EventKind>,
    pub time_unit: TimeUnit,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            kind_field: "kind".into(),
            time_field: "time".into(),
            kind_aliases: BTreeMap::new(),
            time_unit: TimeUnit::Us,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.kind_field == self.time_field {
            return Err(IngestError::InvalidConfig(
                "kind_field and time_field must differ".into(),
            ));
        }
        if let Some((alias, _)) = self.kind_aliases.iter().find(|(_, k)| **k == EventKind::Meta) {
            return Err(IngestError::InvalidConfig(format!(
                "alias `{alias}` maps to META"
            )));
        }
        Ok(())
    }

    fn resolve_kind(&self, raw: &str) -> Option<EventKind> {
        self.kind_aliases
            .get(raw)
            .copied()
            .or_else(|| raw.parse().ok())
    }
}

/// Rounds `num / den` to the nearest integer, ties to even. `den > 0`.
fn div_round_half_even(num: i128, den: i128) -> i128 {
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

fn clamp_i64(v: i128) -> i64 {
    v.clamp(i64::MIN as i128, i64::MAX as i128) as i64
}

/// Converts a raw time value into canonical microseconds.
fn to_micros(v: &serde_json::Value, unit: TimeUnit) -> Option<i64> {
    let scale = unit.micros();
    match v {
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.checked_mul(scale)
            } else {
                float_to_micros(n.as_f64()?, scale)
            }
        }
        serde_json::Value::String(s) => {
            let s = s.trim();
            if let Ok(i) = s.parse::<i64>() {
                i.checked_mul(scale)
            } else {
                float_to_micros(s.parse::<f64>().ok()?, scale)
            }
        }
        _ => None,
    }
}

fn float_to_micros(x: f64, scale: i64) -> Option<i64> {
    let us = (x * scale as f64).round_ties_even();
    (us.is_finite() && us.abs() < 9.2e18).then_some(us as i64)
}

fn flatten_into(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, Value)>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let name = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(&name, v, out);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten_into(&format!("{prefix}.{i}"), v, out);
            }
        }
        serde_json::Value::Null => {}
        scalar => {
            if let Some(value) = Value::from_json(scalar) {
                out.push((prefix.to_string(), value));
            }
        }
    }
}

/// Parses one JSON-lines record. Returns `None` for blank lines and for
/// META records, which finalize re-injects.
fn ingest_record(
    line_no: usize,
    line: &str,
    cfg: &IngestConfig,
) -> Result<Option<Event>, IngestError> {
    if line.trim().is_empty() {
        return Ok(None);
    }
    let malformed = |reason: String| IngestError::MalformedLine {
        line: line_no,
        reason,
    };
    let parsed: serde_json::Value =
        serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let serde_json::Value::Object(mut obj) = parsed else {
        return Err(malformed("record is not a JSON object".into()));
    };

    let raw_kind = match obj.remove(&cfg.kind_field) {
        Some(serde_json::Value::String(s)) => s,
        Some(other) => {
            return Err(IngestError::UnknownKind {
                line: line_no,
                value: other.to_string(),
            })
        }
        None => return Err(malformed(format!("missing kind field `{}`", cfg.kind_field))),
    };
    let kind = cfg
        .resolve_kind(&raw_kind)
        .ok_or_else(|| IngestError::UnknownKind {
            line: line_no,
            value: raw_kind.clone(),
        })?;
    if kind == EventKind::Meta {
        return Ok(None);
    }

    let time = match obj.remove(&cfg.time_field) {
        None | Some(serde_json::Value::Null) => {
            return Err(IngestError::MissingTime { line: line_no })
        }
        Some(v) => to_micros(&v, cfg.time_unit)
            .ok_or_else(|| malformed(format!("time value {v} is not a number")))?,
    };

    // a canonical log carries its own indices; they are reassigned on finalize
    obj.remove("index");

    let mut flat = Vec::new();
    flatten_into("", &serde_json::Value::Object(obj), &mut flat);
    let mut event = Event::new(kind, time);
    for (name, value) in flat {
        if name.is_empty() || name.split('.').any(str::is_empty) {
            return Err(malformed("empty field name".into()));
        }
        if RESERVED_FIELDS.contains(&name.as_str()) {
            return Err(malformed(format!("field name `{name}` is reserved")));
        }
        event.fields.insert(name, value);
    }
    Ok(Some(event))
}

/// Parses JSON-lines text into events. Line numbers in errors are 1-based.
pub fn ingest(text: &str, cfg: &IngestConfig) -> Result<Vec<Event>, IngestError> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(e) = ingest_record(i + 1, line, cfg)? {
            out.push(e);
        }
    }
    Ok(out)
}

fn parse_cell(cell: &str) -> Option<serde_json::Value> {
    if cell.is_empty() {
        return None;
    }
    if let Ok(i) = cell.parse::<i64>() {
        return Some(i.into());
    }
    if let Ok(f) = cell.parse::<f64>() {
        if f.is_finite() {
            return Some(f.into());
        }
    }
    match cell {
        "true" => Some(true.into()),
        "false" => Some(false.into()),
        _ => Some(cell.into()),
    }
}

/// Parses CSV with a header row. Cells that look like integers, floats or
/// booleans are typed; empty cells are absent; everything else is text.
pub fn ingest_csv(text: &str, cfg: &IngestConfig) -> Result<Vec<Event>, IngestError> {
    cfg.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IngestError::MalformedLine {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(i + 2, |p| p.line() as usize);
        let record = record.map_err(|e| IngestError::MalformedLine {
            line,
            reason: e.to_string(),
        })?;
        let mut obj = serde_json::Map::new();
        for (name, cell) in headers.iter().zip(record.iter()) {
            if name == cfg.kind_field {
                obj.insert(name.to_string(), cell.into());
            } else if let Some(v) = parse_cell(cell) {
                obj.insert(name.to_string(), v);
            }
        }
        let json = serde_json::Value::Object(obj).to_string();
        if let Some(e) = ingest_record(line, &json, cfg)? {
            out.push(e);
        }
    }
    Ok(out)
}

/// A correspondence between a ground-clock reading and canonical time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockAnchor {
    pub ground_time: i64,
    pub canonical_time: i64,
}

impl ClockAnchor {
    pub fn new(ground_time: i64, canonical_time: i64) -> Self {
        ClockAnchor {
            ground_time,
            canonical_time,
        }
    }
}

fn check_anchors(anchors: &[ClockAnchor]) -> Result<(), AlignError> {
    if anchors.len() < 2 {
        return Err(AlignError::InsufficientAnchors(anchors.len()));
    }
    for (i, w) in anchors.windows(2).enumerate() {
        if w[1].ground_time <= w[0].ground_time || w[1].canonical_time < w[0].canonical_time {
            return Err(AlignError::UnorderedAnchors(i + 1));
        }
    }
    Ok(())
}

/// Maps one ground time through the piecewise-linear anchor curve.
/// `anchors` must already be validated.
pub fn align_time(t: i64, anchors: &[ClockAnchor]) -> i64 {
    // first segment whose right end is at or past t; the last one otherwise
    let seg = anchors
        .windows(2)
        .position(|w| t <= w[1].ground_time)
        .unwrap_or(anchors.len() - 2);
    let (a, b) = (anchors[seg], anchors[seg + 1]);
    let num = (t as i128 - a.ground_time as i128) * (b.canonical_time as i128 - a.canonical_time as i128);
    let den = b.ground_time as i128 - a.ground_time as i128;
    clamp_i64(a.canonical_time as i128 + div_round_half_even(num, den))
}

/// Remaps every event's time by piecewise-linear interpolation over
/// `anchors`, extrapolating the outermost segments.
pub fn time_align(mut events: Vec<Event>, anchors: &[ClockAnchor]) -> Result<Vec<Event>, AlignError> {
    check_anchors(anchors)?;
    for e in &mut events {
        e.time = align_time(e.time, anchors);
    }
    Ok(events)
}

/// Like [`time_align`] but only touches events whose kind is in `kinds`.
pub fn time_align_kinds(
    mut events: Vec<Event>,
    anchors: &[ClockAnchor],
    kinds: &[EventKind],
) -> Result<Vec<Event>, AlignError> {
    check_anchors(anchors)?;
    for e in events.iter_mut().filter(|e| kinds.contains(&e.kind)) {
        e.time = align_time(e.time, anchors);
    }
    Ok(events)
}

fn meta_event(marker: &str, time: i64) -> Event {
    let mut e = Event::new(EventKind::Meta, time);
    e.fields.insert(META_FIELD.to_string(), Value::from(marker));
    e
}

/// Sorts events stably by time, brackets them with `LOG_BEGIN`/`LOG_END`
/// markers and assigns indices. Any META events in the input are dropped
/// first so finalizing a finalized log's events is a no-op.
pub fn finalize(events: Vec<Event>, source_id: &str) -> Log {
    let mut events: Vec<Event> = events
        .into_iter()
        .filter(|e| e.kind != EventKind::Meta)
        .collect();
    events.sort_by_key(|e| e.time);
    let first = events.first().map_or(0, |e| e.time);
    let last = events.last().map_or(0, |e| e.time);
    let mut all = Vec::with_capacity(events.len() + 2);
    all.push(meta_event(LOG_BEGIN, first));
    all.extend(events);
    all.push(meta_event(LOG_END, last));
    Log::from_sorted(source_id, all).expect("sorted by construction")
}

/// Writes one event as a canonical JSON line: `kind`, `time`, `index`, then
/// fields in lexicographic order. No trailing newline.
pub fn serialize_event(e: &Event) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{{\"kind\":\"{}\",\"time\":{},\"index\":{}",
        e.kind, e.time, e.index
    );
    for (name, value) in &e.fields {
        s.push(',');
        s.push_str(&serde_json::Value::String(name.clone()).to_string());
        s.push(':');
        s.push_str(&value.to_json().to_string());
    }
    s.push('}');
    s
}

/// Canonical JSON-lines rendering of a log, one event per line.
pub fn serialize_log(log: &Log) -> String {
    let mut out = String::new();
    for e in log.events() {
        out.push_str(&serialize_event(e));
        out.push('\n');
    }
    out
}

/// Convenience: ingest JSON lines with `cfg` and finalize.
pub fn load_jsonl(text: &str, source_id: &str, cfg: &IngestConfig) -> Result<Log, IngestError> {
    Ok(finalize(ingest(text, cfg)?, source_id))
}
