//! Reference semantics by direct enumeration over the log.
//!
//! Works on the parsed [`Spec`], not on compiled automata, and matches
//! constraints with its own evaluator. For every trigger position it
//! evaluates the consequence tree against the suffix of the log, choosing
//! the earliest match for every required constraint. Quadratic or worse;
//! only meant for short logs in tests.

use std::collections::BTreeMap;

use regex::Regex;

use super::report::{PatternReport, Report, Violation, ViolationKind};
use super::MonitorError;
use crate::compiler::{compare_holds, values_equal, Binding, GuardError, PredicateFailure, PredicateRegistry};
use crate::event::{Event, Log};
use crate::spec::{Arg, AstPath, ConsequenceNode, EventConstraint, Matcher, Spec};

/// Longest log the oracle accepts unless told otherwise.
pub const DEFAULT_ORACLE_BOUND: usize = 64;

struct Oracle<'a> {
    events: &'a [Event],
    predicates: &'a PredicateRegistry,
    regexes: BTreeMap<String, Regex>,
}

struct Sink<'a> {
    pattern: &'a str,
    trigger_index: usize,
    violations: Vec<Violation>,
}

impl Oracle<'_> {
    fn satisfies(&mut self, c: &EventConstraint, e: &Event, theta: &Binding) -> Result<Option<Binding>, MonitorError> {
        if e.kind != c.kind {
            return Ok(None);
        }
        let mut out = theta.clone();
        for fc in &c.constraints {
            let Some(v) = e.get(&fc.name) else {
                return Ok(None);
            };
            let holds = match &fc.matcher {
                Matcher::Literal(lit) => values_equal(&v, lit, 0.0),
                Matcher::Bind(var) => {
                    if let Some(bound) = out.get(var) {
                        values_equal(&v, bound, 0.0)
                    } else {
                        out = out.with(var, v.clone());
                        true
                    }
                }
                Matcher::Compare(op, lit) => compare_holds(*op, &v, lit, 0.0),
                Matcher::Regex(re) => {
                    if !self.regexes.contains_key(re) {
                        let compiled = Regex::new(&format!("^(?:{re})$"))
                            .map_err(|_| MonitorError::Guard(GuardError::BadRegex(re.clone())))?;
                        self.regexes.insert(re.clone(), compiled);
                    }
                    self.regexes[re].is_match(&v.to_plain_string())
                }
                Matcher::Predicate { name, args } => {
                    let p = self
                        .predicates
                        .get(name)
                        .ok_or_else(|| MonitorError::Guard(GuardError::UnknownPredicate(name.clone())))?;
                    if p.arity != args.len() {
                        return Err(MonitorError::Guard(GuardError::ArityMismatch {
                            name: name.clone(),
                            expected: p.arity,
                            got: args.len(),
                        }));
                    }
                    let mut call = vec![v.clone()];
                    for a in args {
                        call.push(match a {
                            Arg::Literal(l) => l.clone(),
                            Arg::Var(var) => match out.get(var) {
                                Some(b) => b.clone(),
                                None => return Ok(None),
                            },
                        });
                    }
                    (p.func)(&call).map_err(|cause| {
                        MonitorError::Predicate(PredicateFailure {
                            name: name.clone(),
                            cause,
                        })
                    })?
                }
            };
            if !holds {
                return Ok(None);
            }
        }
        Ok(Some(out))
    }

    /// First position in `(after, until)` whose event satisfies `c`.
    fn first_match(
        &mut self,
        c: &EventConstraint,
        theta: &Binding,
        after: usize,
        until: usize,
    ) -> Result<Option<(usize, Binding)>, MonitorError> {
        for j in after + 1..until.min(self.events.len()) {
            if let Some(b) = self.satisfies(c, &self.events[j], theta)? {
                return Ok(Some((j, b)));
            }
        }
        Ok(None)
    }

    fn forbid(
        &mut self,
        c: &EventConstraint,
        path: &AstPath,
        theta: &Binding,
        after: usize,
        until: usize,
        sink: &mut Sink,
    ) -> Result<(), MonitorError> {
        if let Some((j, _)) = self.first_match(c, theta, after, until)? {
            sink.violations.push(Violation {
                pattern: sink.pattern.to_string(),
                kind: ViolationKind::ForbiddenEvent,
                trigger_index: sink.trigger_index,
                binding: theta.clone(),
                obligation_origin: path.clone(),
                offending_index: Some(j),
                message: format!("forbidden {c} matched by event {j} (trigger at event {})", sink.trigger_index),
            });
        }
        Ok(())
    }

    /// Evaluates `node` entered at position `p`. Returns where and with
    /// which binding it completes, or `None` if it never does.
    fn eval(
        &mut self,
        node: &ConsequenceNode,
        path: AstPath,
        p: usize,
        theta: &Binding,
        sink: &mut Sink,
    ) -> Result<Option<(usize, Binding)>, MonitorError> {
        let end = self.events.len();
        match node {
            ConsequenceNode::Require(c) => {
                let found = self.first_match(c, theta, p, end)?;
                if found.is_none() {
                    sink.violations.push(Violation {
                        pattern: sink.pattern.to_string(),
                        kind: ViolationKind::MissingEvent,
                        trigger_index: sink.trigger_index,
                        binding: theta.clone(),
                        obligation_origin: path,
                        offending_index: None,
                        message: format!("expected {c} after event {p} but the log ended without it"),
                    });
                }
                Ok(found)
            }
            ConsequenceNode::Forbid(c) => {
                self.forbid(c, &path, theta, p, end, sink)?;
                Ok(Some((p, theta.clone())))
            }
            ConsequenceNode::Unordered(children) => {
                let mut last = Some(p);
                for (i, child) in children.iter().enumerate() {
                    let r = self.eval(child, path.child(i), p, theta, sink)?;
                    last = match (last, r) {
                        (Some(a), Some((q, _))) => Some(a.max(q)),
                        _ => None,
                    };
                }
                Ok(last.map(|q| (q, theta.clone())))
            }
            ConsequenceNode::Ordered(children) => {
                let mut pos = p;
                let mut cur = theta.clone();
                // prohibitions entered but not yet closed: (child, entry, binding)
                let mut open: Vec<(usize, usize, Binding)> = Vec::new();
                for (i, child) in children.iter().enumerate() {
                    if child.is_forbid() {
                        open.push((i, pos, cur.clone()));
                        continue;
                    }
                    let r = self.eval(child, path.child(i), pos, &cur, sink)?;
                    let until = r.as_ref().map_or(end, |(q, _)| *q);
                    for (k, from, b) in open.drain(..) {
                        let ConsequenceNode::Forbid(c) = &children[k] else { unreachable!() };
                        self.forbid(c, &path.child(k), &b, from, until, sink)?;
                    }
                    match r {
                        Some((q, b)) => {
                            pos = q;
                            cur = b;
                        }
                        None => return Ok(None),
                    }
                }
                for (k, from, b) in open {
                    let ConsequenceNode::Forbid(c) = &children[k] else { unreachable!() };
                    self.forbid(c, &path.child(k), &b, from, end, sink)?;
                }
                Ok(Some((pos, cur)))
            }
        }
    }
}

/// Reference checker with the default length bound.
pub fn oracle_check(spec: &Spec, log: &Log, predicates: &PredicateRegistry) -> Result<Report, MonitorError> {
    oracle_check_bounded(spec, log, predicates, DEFAULT_ORACLE_BOUND)
}

pub fn oracle_check_bounded(
    spec: &Spec,
    log: &Log,
    predicates: &PredicateRegistry,
    max_len: usize,
) -> Result<Report, MonitorError> {
    if log.len() > max_len {
        return Err(MonitorError::LogTooLarge { len: log.len(), max: max_len });
    }
    let mut oracle = Oracle {
        events: log.events(),
        predicates,
        regexes: BTreeMap::new(),
    };
    let mut patterns = Vec::new();
    for pattern in &spec.patterns {
        let mut pr = PatternReport {
            pattern: pattern.name.clone(),
            ..PatternReport::default()
        };
        for (i, e) in log.events().iter().enumerate() {
            let Some(theta) = oracle.satisfies(&pattern.trigger, e, &Binding::new())? else {
                continue;
            };
            pr.triggers += 1;
            let mut sink = Sink {
                pattern: &pattern.name,
                trigger_index: i,
                violations: Vec::new(),
            };
            oracle.eval(&pattern.consequence, AstPath::root(), i, &theta, &mut sink)?;
            if sink.violations.is_empty() {
                pr.satisfied += 1;
            } else {
                pr.violated += 1;
            }
            pr.violations.extend(sink.violations);
        }
        patterns.push(pr);
    }
    Ok(Report {
        source_id: log.source_id.clone(),
        patterns,
    })
}
