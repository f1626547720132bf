//! Shared generators and helpers for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tracewatch::event::{Event, EventKind, Log, Value};
use tracewatch::logmaker::finalize;
use tracewatch::monitor::{Report, ViolationKind};
use tracewatch::spec::{
    validate_spec, Arg, CompareOp, ConsequenceNode, EventConstraint, FieldConstraint, Matcher, Pattern, Spec,
};

pub const COMMAND_SUCCESS: &str = include_str!("../data/command_success.lsc");

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// command-success fixtures

pub fn command(time: i64, stem: &str, number: i64) -> Event {
    Event::new(EventKind::Command, time)
        .with("Type", "FlightSoftwareCommand")
        .with("Stem", stem)
        .with("Number", number)
}

pub fn evr(time: i64, field: &str, stem: &str, number: i64) -> Event {
    Event::new(EventKind::Evr, time).with(field, stem).with("Number", number)
}

pub fn log_of(events: Vec<Event>) -> Log {
    finalize(events, "test")
}

// ---------------------------------------------------------------------------
// Random specs and logs over a deliberately small alphabet, so that
// triggers, bindings and obligations actually collide.

const KINDS: [EventKind; 3] = [EventKind::Command, EventKind::Evr, EventKind::Change];
const FIELDS: [&str; 3] = ["A", "B", "C"];
const VARS: [&str; 3] = ["x", "y", "z"];

fn small_value(r: &mut ChaCha8Rng) -> Value {
    match r.gen_range(0..10) {
        0..=5 => Value::Int(r.gen_range(0..3)),
        6 | 7 => Value::Text(["p", "q"].choose(r).unwrap().to_string()),
        8 => Value::Float(r.gen_range(0..3) as f64),
        _ => Value::Float(0.5),
    }
}

fn random_matcher(r: &mut ChaCha8Rng, bound: &[String]) -> Matcher {
    match r.gen_range(0..14) {
        0..=4 => Matcher::Literal(small_value(r)),
        5..=9 => Matcher::Bind(VARS.choose(r).unwrap().to_string()),
        10 => Matcher::Compare(
            *[CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge, CompareOp::Ne]
                .choose(r)
                .unwrap(),
            Value::Int(r.gen_range(0..3)),
        ),
        11 => Matcher::Regex(["p|q", "[0-9]+", "p.*"].choose(r).unwrap().to_string()),
        12 if !bound.is_empty() => Matcher::Predicate {
            name: "contains".into(),
            args: vec![Arg::Var(bound.choose(r).unwrap().clone())],
        },
        _ => Matcher::Predicate {
            name: "between".into(),
            args: vec![Arg::Literal(Value::Int(0)), Arg::Literal(Value::Int(1))],
        },
    }
}

fn random_constraint(r: &mut ChaCha8Rng, bound: &[String]) -> EventConstraint {
    let mut c = EventConstraint::new(*KINDS.choose(r).unwrap());
    let mut fields = FIELDS.to_vec();
    fields.shuffle(r);
    for f in fields.into_iter().take(r.gen_range(0..=2)) {
        c.constraints.push(FieldConstraint {
            name: f.to_string(),
            matcher: random_matcher(r, bound),
        });
    }
    c
}

fn random_node(r: &mut ChaCha8Rng, depth: usize, bound: &[String]) -> ConsequenceNode {
    if depth <= 1 || r.gen_bool(0.45) {
        let c = random_constraint(r, bound);
        return if r.gen_bool(0.35) {
            ConsequenceNode::Forbid(c)
        } else {
            ConsequenceNode::Require(c)
        };
    }
    let n = r.gen_range(1..=3);
    let children = (0..n).map(|_| random_node(r, depth - 1, bound)).collect();
    if r.gen_bool(0.5) {
        ConsequenceNode::Ordered(children)
    } else {
        ConsequenceNode::Unordered(children)
    }
}

fn random_pattern(r: &mut ChaCha8Rng, name: String, max_depth: usize) -> Pattern {
    let trigger = random_constraint(r, &[]);
    let bound: Vec<String> = trigger.variables().iter().map(|s| s.to_string()).collect();
    let depth = r.gen_range(1..=max_depth);
    Pattern {
        name,
        trigger,
        consequence: random_node(r, depth, &bound),
    }
}

/// A random valid spec of 1..=3 patterns with consequence depth at most
/// `max_depth`. Draws until the binding analysis accepts one.
pub fn random_spec(r: &mut ChaCha8Rng, max_depth: usize) -> Spec {
    loop {
        let n = r.gen_range(1..=3);
        let spec = Spec {
            patterns: (0..n).map(|i| random_pattern(r, format!("P{i}"), max_depth)).collect(),
        };
        if validate_spec(&spec).is_ok() {
            return spec;
        }
    }
}

pub fn random_event(r: &mut ChaCha8Rng, time: i64) -> Event {
    let mut e = Event::new(*KINDS.choose(r).unwrap(), time);
    for f in FIELDS {
        if r.gen_bool(0.8) {
            e = e.with(f, small_value(r));
        }
    }
    e
}

/// A finalized log with at most `max_events` events including the two
/// boundary markers.
pub fn random_log(r: &mut ChaCha8Rng, max_events: usize) -> Log {
    let n = r.gen_range(0..=max_events.saturating_sub(2));
    let mut t = 0;
    let events = (0..n)
        .map(|_| {
            t += r.gen_range(0..3);
            random_event(r, t)
        })
        .collect();
    finalize(events, "random")
}

pub fn triples(report: &Report) -> BTreeSet<(String, usize, ViolationKind)> {
    report
        .violations()
        .map(|v| (v.pattern.clone(), v.trigger_index, v.kind))
        .collect()
}

// ---------------------------------------------------------------------------
// Random ASTs for the printer/parser round trip. These use the full
// literal range (negative numbers, exponents, escapes) rather than the
// small monitoring alphabet.

fn any_value(r: &mut ChaCha8Rng) -> Value {
    match r.gen_range(0..6) {
        0 => Value::Bool(r.gen()),
        1 => Value::Int(r.gen()),
        2 => Value::Int(r.gen_range(-100..100)),
        3 => {
            let f = f64::from_bits(r.gen());
            Value::Float(if f.is_finite() { f } else { -1.25e-7 })
        }
        4 => Value::Float(r.gen_range(-1000.0..1000.0)),
        _ => {
            let pool = ['a', 'Z', ' ', '"', '\\', '\n', '\t', '\r', 'é', '#', '{', '0'];
            let len = r.gen_range(0..8);
            Value::Text((0..len).map(|_| *pool.choose(r).unwrap()).collect())
        }
    }
}

fn any_field(r: &mut ChaCha8Rng) -> String {
    ["Stem", "Number", "a_1", "hdr.seq", "_x", "Type"].choose(r).unwrap().to_string()
}

fn any_ast_matcher(r: &mut ChaCha8Rng, vars: &mut Vec<String>) -> Matcher {
    match r.gen_range(0..6) {
        0 => Matcher::Literal(any_value(r)),
        1 => {
            let v = ["v", "stem", "n_2"].choose(r).unwrap().to_string();
            vars.push(v.clone());
            Matcher::Bind(v)
        }
        2 => Matcher::Compare(
            *[CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge, CompareOp::Ne]
                .choose(r)
                .unwrap(),
            any_value(r),
        ),
        3 => Matcher::Regex(["a\"b", "[0-9]+\\.x", "", "\\\\n"].choose(r).unwrap().to_string()),
        _ => {
            let mut args = Vec::new();
            for _ in 0..r.gen_range(0..3) {
                if !vars.is_empty() && r.gen_bool(0.5) {
                    args.push(Arg::Var(vars.choose(r).unwrap().clone()));
                } else {
                    args.push(Arg::Literal(any_value(r)));
                }
            }
            Matcher::Predicate {
                name: ["p", "inRange", "check_2"].choose(r).unwrap().to_string(),
                args,
            }
        }
    }
}

fn any_constraint(r: &mut ChaCha8Rng, vars: &mut Vec<String>) -> EventConstraint {
    let kinds = EventKind::OBSERVABLE;
    let mut c = EventConstraint::new(*kinds.choose(r).unwrap());
    let mut seen = BTreeSet::new();
    for _ in 0..r.gen_range(0..4) {
        let f = any_field(r);
        if seen.insert(f.clone()) {
            let matcher = any_ast_matcher(r, vars);
            c.constraints.push(FieldConstraint { name: f, matcher });
        }
    }
    c
}

fn any_node(r: &mut ChaCha8Rng, depth: usize, vars: &mut Vec<String>) -> ConsequenceNode {
    if depth <= 1 || r.gen_bool(0.4) {
        let c = any_constraint(r, vars);
        return if r.gen_bool(0.3) {
            ConsequenceNode::Forbid(c)
        } else {
            ConsequenceNode::Require(c)
        };
    }
    let children = (0..r.gen_range(1..4)).map(|_| any_node(r, depth - 1, vars)).collect();
    if r.gen() {
        ConsequenceNode::Ordered(children)
    } else {
        ConsequenceNode::Unordered(children)
    }
}

/// A random spec that passes validation, with up to 3 patterns and depth
/// up to 5.
pub fn random_ast(r: &mut ChaCha8Rng) -> Spec {
    loop {
        let spec = Spec {
            patterns: (0..r.gen_range(0..4))
                .map(|i| {
                    let mut vars = Vec::new();
                    let trigger = any_constraint(r, &mut vars);
                    let depth = r.gen_range(1..6);
                    let consequence = any_node(r, depth, &mut vars);
                    Pattern {
                        name: format!("Pat_{i}"),
                        trigger,
                        consequence,
                    }
                })
                .collect(),
        };
        if validate_spec(&spec).is_ok() {
            return spec;
        }
    }
}

// ---------------------------------------------------------------------------
// A small, independent checker for the subset of DOT the visualizer emits:
// `digraph ID { stmt* }` where each statement is an attribute statement,
// a node statement or an edge statement terminated by `;`.

#[derive(Debug, PartialEq)]
enum DotTok {
    Id(String),
    Sym(char),
    Arrow,
}

fn dot_tokens(s: &str) -> Result<Vec<DotTok>, String> {
    let mut out = Vec::new();
    let cs: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '"' {
            let mut lit = String::new();
            i += 1;
            loop {
                match cs.get(i) {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') => {
                        lit.push('\\');
                        lit.push(*cs.get(i + 1).ok_or("dangling escape")?);
                        i += 2;
                    }
                    Some(&ch) => {
                        if ch == '\n' {
                            return Err("raw newline inside string".into());
                        }
                        lit.push(ch);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push(DotTok::Id(lit));
        } else if c == '-' && cs.get(i + 1) == Some(&'>') {
            out.push(DotTok::Arrow);
            i += 2;
        } else if "{}[];=,".contains(c) {
            out.push(DotTok::Sym(c));
            i += 1;
        } else if c.is_alphanumeric() || c == '_' || c == '.' || c == '#' {
            let start = i;
            while i < cs.len() && (cs[i].is_alphanumeric() || cs[i] == '_' || cs[i] == '.' || cs[i] == '#') {
                i += 1;
            }
            out.push(DotTok::Id(cs[start..i].iter().collect()));
        } else {
            return Err(format!("unexpected character {c:?}"));
        }
    }
    Ok(out)
}

fn dot_attr_list(t: &[DotTok], mut i: usize) -> Result<usize, String> {
    // t[i] == '['
    i += 1;
    loop {
        match t.get(i) {
            Some(DotTok::Sym(']')) => return Ok(i + 1),
            Some(DotTok::Id(_)) => {
                if t.get(i + 1) != Some(&DotTok::Sym('=')) {
                    return Err(format!("expected = at token {}", i + 1));
                }
                match t.get(i + 2) {
                    Some(DotTok::Id(_)) => {}
                    other => return Err(format!("expected attribute value, got {other:?}")),
                }
                i += 3;
                if t.get(i) == Some(&DotTok::Sym(',')) {
                    i += 1;
                }
            }
            other => return Err(format!("bad attribute list at {other:?}")),
        }
    }
}

/// Ok(number of edge statements) if `s` is a well-formed digraph.
pub fn validate_dot(s: &str) -> Result<usize, String> {
    let t = dot_tokens(s)?;
    if t.first() != Some(&DotTok::Id("digraph".into())) {
        return Err("must start with digraph".into());
    }
    let mut i = 1;
    if matches!(t.get(i), Some(DotTok::Id(_))) {
        i += 1;
    }
    if t.get(i) != Some(&DotTok::Sym('{')) {
        return Err("expected {".into());
    }
    i += 1;
    let mut edges = 0;
    loop {
        match t.get(i) {
            Some(DotTok::Sym('}')) => {
                if i + 1 != t.len() {
                    return Err("trailing tokens".into());
                }
                return Ok(edges);
            }
            Some(DotTok::Id(_)) => {
                i += 1;
                match t.get(i) {
                    Some(DotTok::Sym('=')) => {
                        if !matches!(t.get(i + 1), Some(DotTok::Id(_))) {
                            return Err("expected value".into());
                        }
                        i += 2;
                    }
                    Some(DotTok::Arrow) => {
                        if !matches!(t.get(i + 1), Some(DotTok::Id(_))) {
                            return Err("expected edge target".into());
                        }
                        edges += 1;
                        i += 2;
                        if t.get(i) == Some(&DotTok::Sym('[')) {
                            i = dot_attr_list(&t, i)?;
                        }
                    }
                    Some(DotTok::Sym('[')) => i = dot_attr_list(&t, i)?,
                    _ => {}
                }
                if t.get(i) != Some(&DotTok::Sym(';')) {
                    return Err(format!("expected ; at token {i}: {:?}", t.get(i)));
                }
                i += 1;
            }
            other => return Err(format!("unexpected {other:?}")),
        }
    }
}

// ---------------------------------------------------------------------------
// CLI golden corpus: each directory under tests/data/corpus holds a
// spec.lsc, one log.jsonl or log.csv, and expect.json with the exit code
// and violation count.

pub fn corpus_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/corpus")
}

pub fn corpus_cases() -> Vec<std::path::PathBuf> {
    let mut dirs: Vec<_> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_tracewatch"))
}

fn keys_of(v: &serde_json::Value) -> BTreeSet<&str> {
    v.as_object().map(|o| o.keys().map(String::as_str).collect()).unwrap_or_default()
}

/// Checks a machine-form report against the documented field set.
pub fn validate_report_json(v: &serde_json::Value) -> Result<usize, String> {
    let top: BTreeSet<&str> = ["source", "verdict", "violation_count", "patterns", "violations"].into();
    if keys_of(v) != top {
        return Err(format!("top-level keys {:?}", keys_of(v)));
    }
    let verdict = v["verdict"].as_str().ok_or("verdict")?;
    let count = v["violation_count"].as_u64().ok_or("violation_count")? as usize;
    if (verdict == "PASS") != (count == 0) || !["PASS", "FAIL"].contains(&verdict) {
        return Err(format!("verdict {verdict} with {count} violations"));
    }
    let pattern_keys: BTreeSet<&str> = ["pattern", "triggers", "satisfied", "violated"].into();
    for p in v["patterns"].as_array().ok_or("patterns")? {
        if keys_of(p) != pattern_keys {
            return Err(format!("pattern keys {:?}", keys_of(p)));
        }
    }
    let violation_keys: BTreeSet<&str> =
        ["pattern", "kind", "trigger_index", "offending_index", "binding", "message"].into();
    let violations = v["violations"].as_array().ok_or("violations")?;
    for x in violations {
        if keys_of(x) != violation_keys {
            return Err(format!("violation keys {:?}", keys_of(x)));
        }
        let kind = x["kind"].as_str().ok_or("kind")?;
        let offending = &x["offending_index"];
        let consistent = match kind {
            "MissingEvent" => offending.is_null(),
            "ForbiddenEvent" => offending.is_u64(),
            _ => false,
        };
        if !consistent || !x["trigger_index"].is_u64() || !x["binding"].is_object() || !x["message"].is_string() {
            return Err(format!("malformed violation {x}"));
        }
    }
    if violations.len() != count {
        return Err("violation_count disagrees with violations".into());
    }
    Ok(count)
}

/// Runs one corpus case through `tracewatch check --format json`.
pub fn run_corpus_case(dir: &std::path::Path) -> Result<(), String> {
    let expect: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("expect.json")).unwrap()).unwrap();
    let log = if dir.join("log.csv").exists() { "log.csv" } else { "log.jsonl" };
    let out = bin()
        .current_dir(dir)
        .args(["check", "spec.lsc", log, "--format", "json"])
        .output()
        .map_err(|e| e.to_string())?;
    let code = out.status.code().ok_or("killed by signal")?;
    if code as u64 != expect["exit"].as_u64().unwrap() {
        return Err(format!(
            "exit {code}, expected {}: {}",
            expect["exit"],
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    let stdout = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    match expect["violations"].as_u64() {
        None => {
            if !stdout.is_empty() || out.stderr.is_empty() {
                return Err("errors must go to stderr only".into());
            }
        }
        Some(n) => {
            let report: serde_json::Value = serde_json::from_str(stdout.trim_end()).map_err(|e| e.to_string())?;
            let count = validate_report_json(&report)?;
            if count as u64 != n {
                return Err(format!("{count} violations, expected {n}"));
            }
        }
    }
    Ok(())
}

/// Runs `viz` twice on `spec` and returns the DOT files if both runs agree
/// byte for byte.
pub fn viz_twice(spec: &std::path::Path) -> Result<Vec<(String, String)>, String> {
    let read = || -> Result<Vec<(String, String)>, String> {
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let status = bin().arg("viz").arg(spec).arg(out.path()).status().map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("viz exited with {status}"));
        }
        let mut files: Vec<(String, String)> = std::fs::read_dir(out.path())
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
            })
            .collect();
        files.sort();
        Ok(files)
    };
    let (a, b) = (read()?, read()?);
    if a != b {
        return Err("DOT output differs between runs".into());
    }
    Ok(a)
}
