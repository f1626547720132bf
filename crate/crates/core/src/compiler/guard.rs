use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use regex::Regex;

use crate::event::{Event, EventKind, Value};
use crate::spec::{Arg, CompareOp, EventConstraint, Matcher};

/// Variable bindings captured while matching.
#[derive(Debug, Clone, PartialEq, Eq, Default, PartialOrd, Ord, Hash)]
pub struct Binding(BTreeMap<String, Value>);

impl Binding {
    pub fn new() -> Self {
        Binding::default()
    }

    pub fn get(&self, var: &str) -> Option<&Value> {
        self.0.get(var)
    }

    pub fn contains(&self, var: &str) -> bool {
        self.0.contains_key(var)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Returns a copy with `var` bound. Never overwrites.
    pub fn with(&self, var: &str, value: Value) -> Binding {
        let mut b = self.clone();
        b.0.entry(var.to_string()).or_insert(value);
        b
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), v.to_json()))
                .collect(),
        )
    }
}

impl FromIterator<(String, Value)> for Binding {
    fn from_iter<T: IntoIterator<Item = (String, Value)>>(iter: T) -> Self {
        Binding(iter.into_iter().collect())
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("}")
    }
}

/// Host-supplied predicate. Receives the constrained field's value followed
/// by the call's arguments; `Err` is an evaluation fault.
pub type PredicateFn = dyn Fn(&[Value]) -> Result<bool, String> + Send + Sync;

#[derive(Clone)]
pub struct Predicate {
    /// Number of arguments written in the spec, not counting the field value.
    pub arity: usize,
    pub func: Arc<PredicateFn>,
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Predicate").field("arity", &self.arity).finish()
    }
}

/// Named predicates that specs may call, e.g. `Stem: startswith("PI")`.
#[derive(Clone, Debug, Default)]
pub struct PredicateRegistry {
    preds: BTreeMap<String, Predicate>,
}

fn text_arg(args: &[Value], i: usize) -> Option<&str> {
    args.get(i).and_then(Value::as_str)
}

fn num_arg(args: &[Value], i: usize) -> Option<f64> {
    args.get(i).and_then(Value::as_f64)
}

impl PredicateRegistry {
    /// A registry with no predicates at all.
    pub fn empty() -> Self {
        PredicateRegistry::default()
    }

    /// The built-in text and range helpers: `startswith(s)`, `endswith(s)`,
    /// `contains(s)` and `between(lo, hi)` (inclusive, numeric).
    pub fn with_builtins() -> Self {
        let mut r = PredicateRegistry::empty();
        // fields or arguments of the wrong type simply fail these tests
        r.register("startswith", 1, |a| {
            Ok(match (text_arg(a, 0), text_arg(a, 1)) {
                (Some(s), Some(prefix)) => s.starts_with(prefix),
                _ => false,
            })
        });
        r.register("endswith", 1, |a| {
            Ok(match (text_arg(a, 0), text_arg(a, 1)) {
                (Some(s), Some(suffix)) => s.ends_with(suffix),
                _ => false,
            })
        });
        r.register("contains", 1, |a| {
            Ok(match (text_arg(a, 0), text_arg(a, 1)) {
                (Some(s), Some(needle)) => s.contains(needle),
                _ => false,
            })
        });
        r.register("between", 2, |a| {
            Ok(match (num_arg(a, 0), num_arg(a, 1), num_arg(a, 2)) {
                (Some(v), Some(lo), Some(hi)) => lo <= v && v <= hi,
                _ => false,
            })
        });
        r
    }

    pub fn register<F>(&mut self, name: &str, arity: usize, func: F)
    where
        F: Fn(&[Value]) -> Result<bool, String> + Send + Sync + 'static,
    {
        self.preds.insert(
            name.to_string(),
            Predicate {
                arity,
                func: Arc::new(func),
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Predicate> {
        self.preds.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("predicate `{name}` failed: {cause}")]
pub struct PredicateFailure {
    pub name: String,
    pub cause: String,
}

#[derive(Clone)]
enum CompiledMatcher {
    Literal(Value),
    Bind(String),
    Compare(CompareOp, Value),
    Regex(Regex),
    Predicate {
        name: String,
        func: Arc<PredicateFn>,
        args: Vec<Arg>,
    },
}

impl fmt::Debug for CompiledMatcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompiledMatcher::Literal(v) => write!(f, "Literal({v:?})"),
            CompiledMatcher::Bind(v) => write!(f, "Bind({v:?})"),
            CompiledMatcher::Compare(op, v) => write!(f, "Compare({op:?}, {v:?})"),
            CompiledMatcher::Regex(re) => write!(f, "Regex({:?})", re.as_str()),
            CompiledMatcher::Predicate { name, args, .. } => write!(f, "Predicate({name:?}, {args:?})"),
        }
    }
}

/// An event constraint ready for matching: regular expressions compiled
/// and predicates resolved.
#[derive(Debug, Clone)]
pub struct Guard {
    constraint: EventConstraint,
    matchers: Vec<(String, CompiledMatcher)>,
    epsilon: f64,
}

impl PartialEq for Guard {
    fn eq(&self, other: &Self) -> bool {
        self.constraint == other.constraint && self.epsilon.to_bits() == other.epsilon.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GuardError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{name}` takes {expected} argument(s), got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid regular expression `{0}`")]
    BadRegex(String),
}

/// The integer a float denotes exactly, if any.
pub(crate) fn integral(f: f64) -> Option<i64> {
    (f.fract() == 0.0 && (-9.223_372_036_854_776e18..9.223_372_036_854_776e18).contains(&f))
        .then_some(f as i64)
}

/// Numeric-aware equality: ints and floats compare by numeric value, within
/// `eps` when it is positive. Other types compare exactly.
pub(crate) fn values_equal(a: &Value, b: &Value, eps: f64) -> bool {
    if eps > 0.0 {
        if let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) {
            return (x - y).abs() <= eps;
        }
    }
    match (a, b) {
        (Value::Int(i), Value::Float(f)) | (Value::Float(f), Value::Int(i)) => integral(*f) == Some(*i),
        (Value::Float(x), Value::Float(y)) => x == y,
        _ => a == b,
    }
}

fn values_order(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Int(i), Value::Int(j)) => Some(i.cmp(j)),
        (Value::Text(s), Value::Text(t)) => Some(s.cmp(t)),
        _ => a.as_f64()?.partial_cmp(&b.as_f64()?),
    }
}

pub(crate) fn compare_holds(op: CompareOp, field: &Value, lit: &Value, eps: f64) -> bool {
    if op == CompareOp::Ne {
        return !values_equal(field, lit, eps);
    }
    let eq = values_equal(field, lit, eps);
    let Some(ord) = values_order(field, lit) else {
        return false;
    };
    match op {
        CompareOp::Lt => ord == Ordering::Less && !eq,
        CompareOp::Le => ord != Ordering::Greater || eq,
        CompareOp::Gt => ord == Ordering::Greater && !eq,
        CompareOp::Ge => ord != Ordering::Less || eq,
        CompareOp::Ne => unreachable!(),
    }
}

impl Guard {
    pub fn new(
        constraint: &EventConstraint,
        predicates: &PredicateRegistry,
        epsilon: f64,
    ) -> Result<Guard, GuardError> {
        let mut matchers = Vec::with_capacity(constraint.constraints.len());
        for fc in &constraint.constraints {
            let m = match &fc.matcher {
                Matcher::Literal(v) => CompiledMatcher::Literal(v.clone()),
                Matcher::Bind(v) => CompiledMatcher::Bind(v.clone()),
                Matcher::Compare(op, v) => CompiledMatcher::Compare(*op, v.clone()),
                Matcher::Regex(re) => CompiledMatcher::Regex(
                    Regex::new(&format!("^(?:{re})$")).map_err(|_| GuardError::BadRegex(re.clone()))?,
                ),
                Matcher::Predicate { name, args } => {
                    let p = predicates
                        .get(name)
                        .ok_or_else(|| GuardError::UnknownPredicate(name.clone()))?;
                    if p.arity != args.len() {
                        return Err(GuardError::ArityMismatch {
                            name: name.clone(),
                            expected: p.arity,
                            got: args.len(),
                        });
                    }
                    CompiledMatcher::Predicate {
                        name: name.clone(),
                        func: p.func.clone(),
                        args: args.clone(),
                    }
                }
            };
            matchers.push((fc.name.clone(), m));
        }
        Ok(Guard {
            constraint: constraint.clone(),
            matchers,
            epsilon,
        })
    }

    pub fn constraint(&self) -> &EventConstraint {
        &self.constraint
    }

    pub fn kind(&self) -> EventKind {
        self.constraint.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Matches `e` under `binding`. `Ok(None)` is a non-match; on a match the
    /// binding is returned extended with any newly bound variables.
    pub fn matches(&self, e: &Event, binding: &Binding) -> Result<Option<Binding>, PredicateFailure> {
        if e.kind != self.constraint.kind {
            return Ok(None);
        }
        let mut theta = binding.clone();
        for (field, m) in &self.matchers {
            let Some(value) = e.get(field) else {
                return Ok(None);
            };
            let ok = match m {
                CompiledMatcher::Literal(lit) => values_equal(&value, lit, self.epsilon),
                CompiledMatcher::Bind(var) => match theta.get(var) {
                    Some(bound) => values_equal(&value, bound, self.epsilon),
                    None => {
                        theta.0.insert(var.clone(), value);
                        true
                    }
                },
                CompiledMatcher::Compare(op, lit) => compare_holds(*op, &value, lit, self.epsilon),
                CompiledMatcher::Regex(re) => re.is_match(&value.to_plain_string()),
                CompiledMatcher::Predicate { name, func, args } => {
                    let mut call = Vec::with_capacity(args.len() + 1);
                    call.push(value);
                    for a in args {
                        match a {
                            Arg::Literal(v) => call.push(v.clone()),
                            Arg::Var(v) => match theta.get(v) {
                                Some(bound) => call.push(bound.clone()),
                                None => return Ok(None),
                            },
                        }
                    }
                    func(&call).map_err(|cause| PredicateFailure {
                        name: name.clone(),
                        cause,
                    })?
                }
            };
            if !ok {
                return Ok(None);
            }
        }
        Ok(Some(theta))
    }
}

/// One-shot `match(guard, e, θ, predicates)` over an uncompiled constraint.
pub fn match_constraint(
    constraint: &EventConstraint,
    e: &Event,
    binding: &Binding,
    predicates: &PredicateRegistry,
) -> Result<Option<Binding>, MatchError> {
    let guard = Guard::new(constraint, predicates, 0.0)?;
    Ok(guard.matches(e, binding)?)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error(transparent)]
    Guard(#[from] GuardError),
    #[error(transparent)]
    Predicate(#[from] PredicateFailure),
}
