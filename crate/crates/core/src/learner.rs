//! Learning the set of abstract traces seen in good runs, and diffing new
//! runs against it.
//!
//! Events are abstracted by keeping only their kind and a configured list
//! of fields per kind, so that incidental differences such as timestamps
//! do not count. A model is simply the set of abstract traces of the logs
//! it was learned from. Models are stored as editable JSON so that a test
//! engineer can adjust them before endorsing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::event::{EventKind, Log, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LearnError {
    #[error("no logs to learn from")]
    EmptyInput,
    #[error("invalid equality configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
}

fn all_observable() -> BTreeSet<EventKind> {
    EventKind::OBSERVABLE.into_iter().collect()
}

/// Which fields decide whether two events are "the same".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqualityConfig {
    /// Fields compared per kind; kinds not listed compare on kind alone.
    #[serde(default)]
    pub fields: BTreeMap<EventKind, Vec<String>>,
    /// Events of other kinds are dropped before abstraction.
    #[serde(default = "all_observable")]
    pub include_kinds: BTreeSet<EventKind>,
}

impl Default for EqualityConfig {
    fn default() -> Self {
        EqualityConfig {
            fields: BTreeMap::new(),
            include_kinds: all_observable(),
        }
    }
}

impl EqualityConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: String| Err(LearnError::InvalidConfig(m));
        if self.include_kinds.is_empty() {
            return bad("include_kinds is empty".into());
        }
        if self.include_kinds.contains(&EventKind::Meta) || self.fields.contains_key(&EventKind::Meta) {
            return bad("META events are never compared".into());
        }
        for (kind, names) in &self.fields {
            if let Some(n) = names.iter().find(|n| n.is_empty()) {
                return bad(format!("empty field name {n:?} for {kind}"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let cfg: EqualityConfig =
            serde_json::from_str(text).map_err(|e| LearnError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// An event reduced to its kind and the configured fields, in configured
/// order. `None` marks an absent field, which differs from any value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AbstractEvent(pub EventKind, pub Vec<(String, Option<Value>)>);

impl AbstractEvent {
    pub fn kind(&self) -> EventKind {
        self.0
    }

    pub fn projection(&self) -> &[(String, Option<Value>)] {
        &self.1
    }
}

impl fmt::Display for AbstractEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.0)?;
        for (i, (name, value)) in self.1.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match value {
                Some(v) => write!(f, "{name}: {v}")?,
                None => write!(f, "{name}: ABSENT")?,
            }
        }
        f.write_str("}")
    }
}

pub type Trace = Vec<AbstractEvent>;

/// Abstract trace paired with the log index behind each element.
fn project_indexed(log: &Log, cfg: &EqualityConfig) -> Vec<(usize, AbstractEvent)> {
    log.events()
        .iter()
        .filter(|e| e.kind != EventKind::Meta && cfg.include_kinds.contains(&e.kind))
        .map(|e| {
            let names = cfg.fields.get(&e.kind).map(Vec::as_slice).unwrap_or_default();
            let projection = names.iter().map(|n| (n.clone(), e.get(n))).collect();
            (e.index, AbstractEvent(e.kind, projection))
        })
        .collect()
}

/// The abstract trace of `log` under `cfg`.
pub fn project(log: &Log, cfg: &EqualityConfig) -> Trace {
    project_indexed(log, cfg).into_iter().map(|(_, a)| a).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnedModel {
    pub config: EqualityConfig,
    pub endorsed: bool,
    pub provenance: Vec<String>,
    pub traces: BTreeSet<Trace>,
}

impl LearnedModel {
    /// Pretty-printed JSON with a stable layout, suitable for hand editing.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("models serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let model: LearnedModel =
            serde_json::from_str(text).map_err(|e| LearnError::MalformedModel(e.to_string()))?;
        model.config.validate()?;
        if model.traces.is_empty() {
            return Err(LearnError::MalformedModel("model has no traces".into()));
        }
        Ok(model)
    }
}

/// Learns the set of abstract traces of `logs`. The result is not endorsed.
pub fn learn(logs: &[Log], cfg: &EqualityConfig) -> Result<LearnedModel, LearnError> {
    cfg.validate()?;
    if logs.is_empty() {
        return Err(LearnError::EmptyInput);
    }
    Ok(LearnedModel {
        config: cfg.clone(),
        endorsed: false,
        provenance: logs.iter().map(|l| l.source_id.clone()).collect(),
        traces: logs.iter().map(|l| project(l, cfg)).collect(),
    })
}

/// Marks a model as the reference for future runs.
pub fn endorse(mut model: LearnedModel) -> LearnedModel {
    model.endorsed = true;
    model
}

/// Where a new trace first departs from the closest learned one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// Position in the abstract traces.
    pub abstract_index: usize,
    /// `None` means the learned trace had already ended.
    pub expected: Option<AbstractEvent>,
    /// `None` means the new trace had already ended.
    pub observed: Option<AbstractEvent>,
    /// Log index of the observed event.
    pub log_index: Option<usize>,
    pub closest: Trace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiffVerdict {
    Match,
    Mismatch(Divergence),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffReport {
    pub source_id: String,
    pub endorsed: bool,
    pub verdict: DiffVerdict,
}

impl DiffReport {
    pub fn is_match(&self) -> bool {
        self.verdict == DiffVerdict::Match
    }

    pub fn to_text(&self) -> String {
        let status = if self.endorsed { "endorsed" } else { "unendorsed" };
        match &self.verdict {
            DiffVerdict::Match => format!("log {}: MATCH ({status} model)\n", self.source_id),
            DiffVerdict::Mismatch(d) => {
                let show = |a: &Option<AbstractEvent>| a.as_ref().map_or("END".to_string(), |a| a.to_string());
                let at = d.log_index.map_or("end of log".to_string(), |i| format!("{}:{i}", self.source_id));
                format!(
                    "log {}: MISMATCH ({status} model)\n  first divergence at abstract event {}\n  expected: {}\n  observed: {} ({at})\n",
                    self.source_id,
                    d.abstract_index,
                    show(&d.expected),
                    show(&d.observed),
                )
            }
        }
    }
}

fn common_prefix(a: &[AbstractEvent], b: &[AbstractEvent]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Compares `log` against `model`. On a mismatch the closest learned trace
/// is the one sharing the longest prefix, then the shortest, then the
/// lexicographically smallest.
pub fn diff(model: &LearnedModel, log: &Log) -> DiffReport {
    let indexed = project_indexed(log, &model.config);
    let trace: Trace = indexed.iter().map(|(_, a)| a.clone()).collect();
    let verdict = if model.traces.contains(&trace) {
        DiffVerdict::Match
    } else {
        // BTreeSet iterates lexicographically, so the first best wins ties
        let mut best: Option<(usize, &Trace)> = None;
        for t in &model.traces {
            let k = common_prefix(t, &trace);
            let better = match best {
                None => true,
                Some((bk, bt)) => k > bk || (k == bk && t.len() < bt.len()),
            };
            if better {
                best = Some((k, t));
            }
        }
        let (k, closest) = best.expect("models are nonempty");
        DiffVerdict::Mismatch(Divergence {
            abstract_index: k,
            expected: closest.get(k).cloned(),
            observed: trace.get(k).cloned(),
            log_index: indexed.get(k).map(|(i, _)| *i),
            closest: closest.clone(),
        })
    };
    DiffReport {
        source_id: log.source_id.clone(),
        endorsed: model.endorsed,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Event;
    use crate::logmaker::finalize;

    fn evr_cfg() -> EqualityConfig {
        EqualityConfig {
            fields: BTreeMap::from([(EventKind::Evr, vec!["Dispatch".to_string()])]),
            include_kinds: BTreeSet::from([EventKind::Evr]),
        }
    }

    fn log_of(id: &str, dispatches: &[&str]) -> Log {
        let mut evs: Vec<Event> = dispatches
            .iter()
            .enumerate()
            .map(|(i, d)| Event::new(EventKind::Evr, i as i64 * 10).with("Dispatch", *d))
            .collect();
        evs.push(Event::new(EventKind::Channel, 5).with("Dispatch", "ignored"));
        finalize(evs, id)
    }

    fn ae(d: &str) -> AbstractEvent {
        AbstractEvent(EventKind::Evr, vec![("Dispatch".into(), Some(Value::from(d)))])
    }

    #[test]
    fn projection_filters_and_orders() {
        let t = project(&log_of("a", &["A", "B"]), &evr_cfg());
        assert_eq!(t, vec![ae("A"), ae("B")]);
    }

    #[test]
    fn empty_field_list_collapses_to_kind() {
        let mut cfg = evr_cfg();
        cfg.fields.clear();
        let t = project(&log_of("a", &["A", "B"]), &cfg);
        assert_eq!(t, vec![AbstractEvent(EventKind::Evr, vec![]); 2]);
        assert!(project(&finalize(vec![], "m"), &cfg).is_empty());
    }

    #[test]
    fn absent_is_not_empty_text() {
        let cfg = evr_cfg();
        let with_empty = finalize(vec![Event::new(EventKind::Evr, 0).with("Dispatch", "")], "a");
        let without = finalize(vec![Event::new(EventKind::Evr, 0)], "b");
        assert_ne!(project(&with_empty, &cfg), project(&without, &cfg));
    }

    #[test]
    fn learn_collapses_duplicates() {
        let m = learn(&[log_of("a", &["A"]), log_of("b", &["A"])], &evr_cfg()).unwrap();
        assert_eq!(m.traces.len(), 1);
        assert_eq!(m.provenance, vec!["a", "b"]);
        let m = learn(&[log_of("a", &["A"]), log_of("b", &["B"])], &evr_cfg()).unwrap();
        assert_eq!(m.traces.len(), 2);
        assert!(!m.endorsed);
        assert_eq!(learn(&[], &evr_cfg()), Err(LearnError::EmptyInput));
    }

    #[test]
    fn diff_reports_first_divergence() {
        let m = learn(&[log_of("a", &["A", "B", "C"])], &evr_cfg()).unwrap();
        assert!(diff(&m, &log_of("a2", &["A", "B", "C"])).is_match());

        let r = diff(&m, &log_of("x", &["A", "X", "C"]));
        let DiffVerdict::Mismatch(d) = r.verdict else { panic!() };
        assert_eq!(d.abstract_index, 1);
        assert_eq!(d.expected, Some(ae("B")));
        assert_eq!(d.observed, Some(ae("X")));
        // LOG_BEGIN at 0, A at 1, then the channel event sorts before X
        assert_eq!(d.log_index, Some(3));

        let r = diff(&m, &log_of("y", &["A", "B", "C", "D"]));
        let DiffVerdict::Mismatch(d) = r.verdict else { panic!() };
        assert_eq!((d.abstract_index, d.expected, d.observed), (3, None, Some(ae("D"))));

        let r = diff(&m, &log_of("z", &["A", "B"]));
        let DiffVerdict::Mismatch(d) = r.verdict else { panic!() };
        assert_eq!((d.abstract_index, d.expected.clone(), d.observed, d.log_index), (2, Some(ae("C")), None, None));
    }

    #[test]
    fn closest_prefers_longer_prefix_then_shorter_trace() {
        let m = learn(
            &[log_of("1", &["A", "B", "C", "D"]), log_of("2", &["A", "B", "Q"]), log_of("3", &["A"])],
            &evr_cfg(),
        )
        .unwrap();
        let r = diff(&m, &log_of("n", &["A", "B", "Z"]));
        let DiffVerdict::Mismatch(d) = r.verdict else { panic!() };
        assert_eq!(d.abstract_index, 2);
        assert_eq!(d.expected, Some(ae("Q")));
    }

    #[test]
    fn endorse_is_idempotent_and_keeps_traces() {
        let m = learn(&[log_of("a", &["A"])], &evr_cfg()).unwrap();
        let e = endorse(m.clone());
        assert!(e.endorsed);
        assert_eq!(e.traces, m.traces);
        assert_eq!(endorse(e.clone()), e);
    }

    #[test]
    fn model_json_layout() {
        let m = endorse(learn(&[log_of("a", &["A"])], &evr_cfg()).unwrap());
        let text = m.to_json();
        let keys: Vec<usize> = ["\"config\"", "\"endorsed\"", "\"provenance\"", "\"traces\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let back = LearnedModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);
        let compact: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(compact["traces"][0][0], serde_json::json!(["EVR", [["Dispatch", "A"]]]));
    }

    #[test]
    fn hand_edited_model_is_honored() {
        let m = learn(&[log_of("a", &["A"])], &evr_cfg()).unwrap();
        let edited = m.to_json().replace("\"A\"", "\"B\"");
        let m2 = LearnedModel::from_json(&edited).unwrap();
        assert!(diff(&m2, &log_of("b", &["B"])).is_match());
        assert!(!diff(&m2, &log_of("a", &["A"])).is_match());
    }

    #[test]
    fn malformed_models() {
        assert!(matches!(LearnedModel::from_json("{"), Err(LearnError::MalformedModel(_))));
        let m = learn(&[log_of("a", &["A"])], &evr_cfg()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["traces"] = serde_json::json!([]);
        assert!(LearnedModel::from_json(&v.to_string()).is_err());
        assert!(EqualityConfig::from_json(r#"{"include_kinds": []}"#).is_err());
        assert!(EqualityConfig::from_json(r#"{"include_kinds": ["META"]}"#).is_err());
        assert_eq!(EqualityConfig::from_json("{}").unwrap(), EqualityConfig::default());
    }
}
