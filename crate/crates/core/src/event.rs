//! Events and logs: the data every other module consumes.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Field names that are carried by [`Event`] itself and never stored in `fields`.
pub const RESERVED_FIELDS: [&str; 3] = ["kind", "time", "index"];

/// A scalar field value.
///
/// Equality and ordering are exact: floats compare by bit pattern so that a
/// value can serve as a map key and round-trip unchanged. Tolerant numeric
/// comparison lives in constraint matching, not here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    fn rank(&self) -> u8 {
        match self {
            Value::Bool(_) => 0,
            Value::Int(_) => 1,
            Value::Float(_) => 2,
            Value::Text(_) => 3,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Renders the value without quoting, as used for regular-expression
    /// matching and plain-text reports.
    pub fn to_plain_string(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            other => other.to_string(),
        }
    }

    /// Converts a JSON scalar. Objects and arrays are not values; `null` is absent.
    pub fn from_json(v: &serde_json::Value) -> Option<Value> {
        match v {
            serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Some(Value::Int(i))
                } else {
                    n.as_f64().map(Value::Float)
                }
            }
            serde_json::Value::String(s) => Some(Value::Text(s.clone())),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Float(f) => serde_json::Number::from_f64(*f)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Text(s) => serde_json::Value::String(s.clone()),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Text(a), Value::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Bool(b) => b.hash(state),
            Value::Int(i) => i.hash(state),
            Value::Float(f) => f.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
        }
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Formats the value as a literal of the pattern language: text is quoted
/// and escaped, floats always carry a decimal point or exponent.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Text(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventKind {
    Command,
    Product,
    /// Periodic sampling of a state value.
    Channel,
    /// An observable change of a state value.
    Change,
    /// Event report emitted by the monitored software.
    Evr,
    /// Injected by the toolkit, never present in raw input.
    Meta,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::Command,
        EventKind::Product,
        EventKind::Channel,
        EventKind::Change,
        EventKind::Evr,
        EventKind::Meta,
    ];

    /// The kinds that may appear in raw input and in pattern constraints.
    pub const OBSERVABLE: [EventKind; 5] = [
        EventKind::Command,
        EventKind::Product,
        EventKind::Channel,
        EventKind::Change,
        EventKind::Evr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Command => "COMMAND",
            EventKind::Product => "PRODUCT",
            EventKind::Channel => "CHANNEL",
            EventKind::Change => "CHANGE",
            EventKind::Evr => "EVR",
            EventKind::Meta => "META",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown event kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for EventKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// A single log record: kind, canonical time in microseconds, position in
/// the log, and a flat map of named values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub kind: EventKind,
    pub time: i64,
    pub index: usize,
    pub fields: BTreeMap<String, Value>,
}

impl Event {
    pub fn new(kind: EventKind, time: i64) -> Self {
        Event {
            kind,
            time,
            index: 0,
            fields: BTreeMap::new(),
        }
    }

    /// Builder-style field insertion. Reserved and empty names are ignored.
    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        if !name.is_empty() && !RESERVED_FIELDS.contains(&name) {
            self.fields.insert(name.to_string(), value.into());
        }
        self
    }

    /// Looks up a field, answering the reserved names from the event header.
    pub fn get(&self, name: &str) -> Option<Value> {
        match name {
            "kind" => Some(Value::Text(self.kind.as_str().to_string())),
            "time" => Some(Value::Int(self.time)),
            "index" => Some(Value::Int(self.index as i64)),
            _ => self.fields.get(name).cloned(),
        }
    }

    /// Equality after projecting both events onto `fields`. Kinds must agree;
    /// a name absent from both sides counts as equal.
    pub fn equal_under(&self, other: &Event, fields: &[impl AsRef<str>]) -> bool {
        self.kind == other.kind
            && fields
                .iter()
                .all(|name| self.get(name.as_ref()) == other.get(name.as_ref()))
    }

    /// The marker name of a META event (`LOG_BEGIN`, `LOG_END`).
    pub fn meta_marker(&self) -> Option<&str> {
        if self.kind == EventKind::Meta {
            self.fields.get(META_FIELD).and_then(Value::as_str)
        } else {
            None
        }
    }
}

/// Field carrying the marker name of injected META events.
pub const META_FIELD: &str = "meta";
pub const LOG_BEGIN: &str = "LOG_BEGIN";
pub const LOG_END: &str = "LOG_END";

/// A finalized, time-ordered sequence of events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Log {
    pub source_id: String,
    events: Vec<Event>,
}

impl Log {
    /// Wraps events that are already in final order, renumbering indices.
    /// Fails if times decrease.
    pub fn from_sorted(source_id: impl Into<String>, mut events: Vec<Event>) -> Result<Self, usize> {
        for i in 1..events.len() {
            if events[i].time < events[i - 1].time {
                return Err(i);
            }
        }
        for (i, e) in events.iter_mut().enumerate() {
            e.index = i;
        }
        Ok(Log {
            source_id: source_id.into(),
            events,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Indices of events whose time equals their predecessor's. Their
    /// relative order came from input order, not from the clock.
    pub fn timestamp_ties(&self) -> Vec<usize> {
        (1..self.events.len())
            .filter(|&i| {
                self.events[i].time == self.events[i - 1].time
                    && self.events[i].kind != EventKind::Meta
                    && self.events[i - 1].kind != EventKind::Meta
            })
            .collect()
    }
}

/// `event_get` as a free function.
pub fn event_get(e: &Event, name: &str) -> Option<Value> {
    e.get(name)
}

/// `event_equal_under` as a free function.
pub fn event_equal_under(e1: &Event, e2: &Event, fields: &[impl AsRef<str>]) -> bool {
    e1.equal_under(e2, fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn get_field_and_reserved_names() {
        let e = Event::new(EventKind::Evr, 5).with("Stem", "PICT");
        assert_eq!(e.get("Stem"), Some(Value::from("PICT")));
        assert_eq!(e.get("kind"), Some(Value::from("EVR")));
        assert_eq!(e.get("time"), Some(Value::Int(5)));
        let e = Event::new(EventKind::Evr, 5).with("Number", 7i64);
        assert_eq!(e.get("Stem"), None);
    }

    #[test]
    fn reserved_names_never_stored() {
        let e = Event::new(EventKind::Evr, 5).with("time", 9i64).with("", 1i64);
        assert!(e.fields.is_empty());
        assert_eq!(e.get("time"), Some(Value::Int(5)));
    }

    #[test]
    fn equality_under_projection() {
        let a = Event::new(EventKind::Evr, 1).with("Dispatch", "PICT");
        let b = Event::new(EventKind::Evr, 900).with("Dispatch", "PICT");
        assert!(a.equal_under(&b, &["Dispatch"]));
        assert!(a.equal_under(&a.clone(), &[] as &[&str]));
        let c = Event::new(EventKind::Command, 1).with("Dispatch", "PICT");
        assert!(!a.equal_under(&c, &["Dispatch"]));
        assert!(!a.equal_under(&c, &[] as &[&str]));
        // absent on both sides is equal
        assert!(a.equal_under(&b, &["Missing"]));
    }

    #[test]
    fn float_equality_is_bitwise() {
        assert_ne!(Value::Float(0.0), Value::Float(-0.0));
        assert_eq!(Value::Float(f64::NAN), Value::Float(f64::NAN));
        assert_ne!(Value::Int(7), Value::Float(7.0));
    }

    #[test]
    fn display_escapes_text() {
        assert_eq!(Value::from("a\"b\\c").to_string(), r#""a\"b\\c""#);
        assert_eq!(Value::Float(1.0).to_string(), "1.0");
        assert_eq!(Value::Float(1e-7).to_string(), "1e-7");
    }

    #[test]
    fn from_sorted_rejects_decreasing_time() {
        let evs = vec![Event::new(EventKind::Evr, 2), Event::new(EventKind::Evr, 1)];
        assert_eq!(Log::from_sorted("x", evs), Err(1));
    }

    fn arb_event() -> impl Strategy<Value = Event> {
        (
            prop::sample::select(vec![EventKind::Command, EventKind::Evr]),
            0i64..3,
            prop::option::of(0i64..2),
            prop::option::of(0i64..2),
        )
            .prop_map(|(k, t, a, b)| {
                let mut e = Event::new(k, t);
                if let Some(a) = a {
                    e = e.with("A", a);
                }
                if let Some(b) = b {
                    e = e.with("B", b);
                }
                e
            })
    }

    proptest! {
        #[test]
        fn equal_under_is_an_equivalence(
            a in arb_event(), b in arb_event(), c in arb_event(),
            fields in prop::sample::subsequence(vec!["A", "B", "time"], 0..=3),
        ) {
            prop_assert!(a.equal_under(&a, &fields));
            prop_assert_eq!(a.equal_under(&b, &fields), b.equal_under(&a, &fields));
            if a.equal_under(&b, &fields) && b.equal_under(&c, &fields) {
                prop_assert!(a.equal_under(&c, &fields));
            }
        }
    }
}
