use std::fmt::{self, Write as _};

use serde_json::json;

use crate::compiler::Binding;
use crate::event::Log;
use crate::spec::AstPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    /// A required event never arrived.
    MissingEvent,
    /// A forbidden event arrived while prohibited.
    ForbiddenEvent,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::MissingEvent => "MissingEvent",
            ViolationKind::ForbiddenEvent => "ForbiddenEvent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub pattern: String,
    pub kind: ViolationKind,
    pub trigger_index: usize,
    pub binding: Binding,
    pub obligation_origin: AstPath,
    /// Only for `ForbiddenEvent`.
    pub offending_index: Option<usize>,
    pub message: String,
}

impl Violation {
    /// The identity used to compare verdicts between checkers.
    pub fn key(&self) -> (String, usize, ViolationKind, AstPath, Option<usize>) {
        (
            self.pattern.clone(),
            self.trigger_index,
            self.kind,
            self.obligation_origin.clone(),
            self.offending_index,
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "pattern": self.pattern,
            "kind": self.kind.to_string(),
            "trigger_index": self.trigger_index,
            "offending_index": self.offending_index,
            "binding": self.binding.to_json(),
            "message": self.message,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatternReport {
    pub pattern: String,
    pub triggers: usize,
    pub satisfied: usize,
    pub violated: usize,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Report {
    pub source_id: String,
    pub patterns: Vec<PatternReport>,
}

impl Report {
    pub fn verdict(&self) -> Verdict {
        if self.violation_count() == 0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict() == Verdict::Pass
    }

    pub fn violation_count(&self) -> usize {
        self.patterns.iter().map(|p| p.violations.len()).sum()
    }

    pub fn violations(&self) -> impl Iterator<Item = &Violation> {
        self.patterns.iter().flat_map(|p| p.violations.iter())
    }

    pub fn pattern(&self, name: &str) -> Option<&PatternReport> {
        self.patterns.iter().find(|p| p.pattern == name)
    }

    /// Machine-readable form. `max_violations` of 0 means all.
    pub fn to_json(&self, max_violations: usize) -> serde_json::Value {
        let limit = if max_violations == 0 { usize::MAX } else { max_violations };
        let violations: Vec<serde_json::Value> = self.violations().take(limit).map(Violation::to_json).collect();
        json!({
            "source": self.source_id,
            "verdict": self.verdict().to_string(),
            "violation_count": self.violation_count(),
            "patterns": self.patterns.iter().map(|p| json!({
                "pattern": p.pattern,
                "triggers": p.triggers,
                "satisfied": p.satisfied,
                "violated": p.violated,
            })).collect::<Vec<_>>(),
            "violations": violations,
        })
    }

    /// Human-readable form with references back into `log`.
    pub fn to_text(&self, log: &Log, max_violations: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "log {}: {}", self.source_id, self.verdict());
        for p in &self.patterns {
            let _ = writeln!(
                out,
                "  pattern {}: {} triggered, {} satisfied, {} violated",
                p.pattern, p.triggers, p.satisfied, p.violated
            );
        }
        let limit = if max_violations == 0 { usize::MAX } else { max_violations };
        let time_of = |i: usize| log.events().get(i).map_or(String::from("?"), |e| e.time.to_string());
        for v in self.violations().take(limit) {
            let _ = writeln!(out);
            let _ = writeln!(out, "{} in pattern {} ({})", v.kind, v.pattern, v.obligation_origin);
            let _ = writeln!(
                out,
                "  trigger: {}:{} (time {})",
                self.source_id,
                v.trigger_index,
                time_of(v.trigger_index)
            );
            if let Some(i) = v.offending_index {
                let _ = writeln!(out, "  offending event: {}:{} (time {})", self.source_id, i, time_of(i));
            }
            let _ = writeln!(out, "  binding: {}", v.binding);
            let _ = writeln!(out, "  {}", v.message);
        }
        let hidden = self.violation_count().saturating_sub(limit);
        if hidden > 0 {
            let _ = writeln!(out, "\n... {hidden} more violation(s) not shown");
        }
        out
    }
}
