//! Translation of patterns into parameterized alternating automata.
//!
//! Each pattern becomes one [`Automaton`]. Its trigger is an `ALWAYS` state
//! that stays armed for the whole log; every match spawns an instance
//! carrying the binding of that match. Required constraints become `HOT`
//! states (must be matched before the log ends), forbidden ones become
//! `WATCH` states (must not be matched while active). A single transition
//! may activate several states at once, which is where alternation comes
//! in: an unordered scope activates all its children together.
//!
//! Besides the state table an automaton keeps the scope skeleton of the
//! consequence. The monitor uses it to know when an ordered chain may
//! advance and when an unordered scope is complete.

mod dot;
mod guard;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use dot::to_dot;
pub use guard::{
    match_constraint, Binding, Guard, GuardError, MatchError, Predicate, PredicateFailure, PredicateFn,
    PredicateRegistry,
};
pub(crate) use guard::{compare_holds, integral, values_equal};

use crate::event::{Event, EventKind, Value};
use crate::spec::{AstPath, ConsequenceNode, EventConstraint, Matcher, Pattern, Spec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("pattern `{pattern}`: {source}")]
    Guard {
        pattern: String,
        #[source]
        source: GuardError,
    },
}

impl CompileError {
    pub fn guard_error(&self) -> &GuardError {
        match self {
            CompileError::Guard { source, .. } => source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateKind {
    /// Trigger state; stays armed and spawns an instance on every match.
    Always,
    /// Obligation that must be met before the log ends.
    Hot,
    /// Prohibition; a match while active is a violation.
    Watch,
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateKind::Always => "ALWAYS",
            StateKind::Hot => "HOT",
            StateKind::Watch => "WATCH",
        })
    }
}

/// Where a state came from in its pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    Trigger,
    Node(AstPath),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Trigger => f.write_str("trigger"),
            Origin::Node(p) => write!(f, "{p}"),
        }
    }
}

/// Hashable form of a value for obligation indexing. Integral floats
/// collapse onto integers so that keys agree with numeric equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) enum KeyValue {
    Bool(bool),
    Int(i64),
    Float(u64),
    Text(String),
}

impl KeyValue {
    pub(crate) fn of(v: &Value) -> KeyValue {
        match v {
            Value::Bool(b) => KeyValue::Bool(*b),
            Value::Int(i) => KeyValue::Int(*i),
            Value::Float(f) => integral(*f).map_or(KeyValue::Float(f.to_bits()), KeyValue::Int),
            Value::Text(s) => KeyValue::Text(s.clone()),
        }
    }
}

/// A field whose required value is known when the state is activated.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum KeySource {
    Literal(Value),
    Var(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoState {
    pub id: String,
    pub kind: StateKind,
    pub guard: Guard,
    /// States activated together when this one is matched. For a `HOT`
    /// state inside an unordered scope this includes what follows the
    /// scope, which only runs once every sibling is done.
    pub on_match: Vec<String>,
    /// For a `WATCH` state inside an ordered scope: the constraint whose
    /// completion closes the window, when that sibling is a single
    /// required constraint.
    pub deactivate_on: Option<EventConstraint>,
    /// The sibling scope whose completion closes a `WATCH` window.
    pub closed_by: Option<AstPath>,
    pub origin: Origin,
    pub(crate) key_fields: Vec<(String, KeySource)>,
}

impl AutoState {
    /// The index key an event presents to this state, or `None` if the
    /// event lacks one of the key fields.
    pub(crate) fn event_key(&self, e: &Event) -> Option<Vec<KeyValue>> {
        self.key_fields
            .iter()
            .map(|(f, _)| e.get(f).map(|v| KeyValue::of(&v)))
            .collect()
    }

    /// The index key of an obligation of this state under `binding`.
    pub(crate) fn binding_key(&self, binding: &Binding) -> Vec<KeyValue> {
        self.key_fields
            .iter()
            .map(|(_, src)| match src {
                KeySource::Literal(v) => KeyValue::of(v),
                KeySource::Var(var) => KeyValue::of(binding.get(var).expect("key variables are bound at activation")),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum NodeKind {
    Require(usize),
    Forbid(usize),
    Ordered(Vec<usize>),
    Unordered(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Node {
    pub kind: NodeKind,
    pub path: AstPath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Automaton {
    pub pattern_name: String,
    /// Sorted by id.
    states: Vec<AutoState>,
    pub initial: Vec<String>,
    pub(crate) trigger: usize,
    pub(crate) nodes: Vec<Node>,
    pub(crate) root: usize,
    /// Non-trigger states grouped by the event kind their guard accepts.
    pub(crate) by_kind: BTreeMap<EventKind, Vec<usize>>,
}

impl Automaton {
    pub fn states(&self) -> &[AutoState] {
        &self.states
    }

    pub fn state(&self, id: &str) -> Option<&AutoState> {
        self.states
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.states[i])
    }

    pub(crate) fn state_at(&self, i: usize) -> &AutoState {
        &self.states[i]
    }

    pub fn count(&self, kind: StateKind) -> usize {
        self.states.iter().filter(|s| s.kind == kind).count()
    }

    pub fn trigger_state(&self) -> &AutoState {
        &self.states[self.trigger]
    }
}

fn state_id(pattern: &str, origin: &Origin) -> String {
    format!("{pattern}.{origin}")
}

type KeyFields = Vec<(String, KeySource)>;

struct Builder<'a> {
    pattern: &'a Pattern,
    predicates: &'a PredicateRegistry,
    epsilon: f64,
    nodes: Vec<Node>,
    leaves: Vec<(Origin, StateKind, EventConstraint, KeyFields)>,
}

impl Builder<'_> {
    fn key_fields(&self, c: &EventConstraint, bound: &BTreeSet<String>) -> KeyFields {
        if self.epsilon > 0.0 {
            return Vec::new();
        }
        c.constraints
            .iter()
            .filter_map(|fc| match &fc.matcher {
                Matcher::Literal(v) => Some((fc.name.clone(), KeySource::Literal(v.clone()))),
                Matcher::Bind(var) if bound.contains(var) => Some((fc.name.clone(), KeySource::Var(var.clone()))),
                _ => None,
            })
            .collect()
    }

    /// Adds `node` and its subtree; returns its node index and the set of
    /// variables bound once it completes.
    fn build(&mut self, node: &ConsequenceNode, path: AstPath, bound: &BTreeSet<String>) -> (usize, BTreeSet<String>) {
        let slot = self.nodes.len();
        self.nodes.push(Node {
            kind: NodeKind::Ordered(Vec::new()),
            path: path.clone(),
        });
        let (kind, after) = match node {
            ConsequenceNode::Require(c) | ConsequenceNode::Forbid(c) => {
                let leaf = self.leaves.len();
                let keys = self.key_fields(c, bound);
                let forbid = node.is_forbid();
                let state_kind = if forbid { StateKind::Watch } else { StateKind::Hot };
                self.leaves.push((Origin::Node(path), state_kind, c.clone(), keys));
                if forbid {
                    (NodeKind::Forbid(leaf), bound.clone())
                } else {
                    let mut after = bound.clone();
                    after.extend(c.variables().into_iter().map(str::to_string));
                    (NodeKind::Require(leaf), after)
                }
            }
            ConsequenceNode::Ordered(children) => {
                let mut cur = bound.clone();
                let mut ids = Vec::with_capacity(children.len());
                for (i, child) in children.iter().enumerate() {
                    let (id, next) = self.build(child, path.child(i), &cur);
                    ids.push(id);
                    cur = next;
                }
                (NodeKind::Ordered(ids), cur)
            }
            ConsequenceNode::Unordered(children) => {
                let ids = children
                    .iter()
                    .enumerate()
                    .map(|(i, child)| self.build(child, path.child(i), bound).0)
                    .collect();
                (NodeKind::Unordered(ids), bound.clone())
            }
        };
        self.nodes[slot].kind = kind;
        (slot, after)
    }
}

/// Leaves activated when `node` is entered, and whether entering it
/// completes it immediately (true when it contains only prohibitions).
pub(crate) fn entry_leaves(nodes: &[Node], node: usize) -> (Vec<usize>, bool) {
    match &nodes[node].kind {
        NodeKind::Require(l) => (vec![*l], false),
        NodeKind::Forbid(l) => (vec![*l], true),
        NodeKind::Ordered(children) => {
            let mut out = Vec::new();
            for &c in children {
                let (leaves, immediate) = entry_leaves(nodes, c);
                out.extend(leaves);
                if !immediate {
                    return (out, false);
                }
            }
            (out, true)
        }
        NodeKind::Unordered(children) => {
            let mut out = Vec::new();
            let mut all = true;
            for &c in children {
                let (leaves, immediate) = entry_leaves(nodes, c);
                out.extend(leaves);
                all &= immediate;
            }
            (out, all)
        }
    }
}

/// The sibling that closes the window of the prohibition at position `i`
/// of an ordered scope: the next child that is not itself a prohibition.
pub(crate) fn closing_sibling(nodes: &[Node], children: &[usize], i: usize) -> Option<usize> {
    (i + 1..children.len()).find(|&j| !matches!(nodes[children[j]].kind, NodeKind::Forbid(_)))
}

fn parents(nodes: &[Node]) -> Vec<Option<(usize, usize)>> {
    let mut out = vec![None; nodes.len()];
    for (p, n) in nodes.iter().enumerate() {
        if let NodeKind::Ordered(ch) | NodeKind::Unordered(ch) = &n.kind {
            for (i, &c) in ch.iter().enumerate() {
                out[c] = Some((p, i));
            }
        }
    }
    out
}

/// Leaves that may become active once `node` completes.
fn continuation(nodes: &[Node], parents: &[Option<(usize, usize)>], node: usize) -> Vec<usize> {
    let Some((p, i)) = parents[node] else {
        return Vec::new();
    };
    match &nodes[p].kind {
        NodeKind::Ordered(children) => {
            let mut out = Vec::new();
            for &c in &children[i + 1..] {
                let (leaves, immediate) = entry_leaves(nodes, c);
                out.extend(leaves);
                if !immediate {
                    return out;
                }
            }
            out.extend(continuation(nodes, parents, p));
            out
        }
        _ => continuation(nodes, parents, p),
    }
}

fn compile_pattern(p: &Pattern, predicates: &PredicateRegistry, epsilon: f64) -> Result<Automaton, CompileError> {
    let mut b = Builder {
        pattern: p,
        predicates,
        epsilon,
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    let mut trigger_bound = BTreeSet::new();
    let trigger_keys = b.key_fields(&p.trigger, &trigger_bound);
    trigger_bound.extend(p.trigger.variables().into_iter().map(str::to_string));
    let (root, _) = b.build(&p.consequence, AstPath::root(), &trigger_bound);
    let name = &b.pattern.name;
    let err = |source| CompileError::Guard {
        pattern: name.clone(),
        source,
    };

    let leaf_ids: Vec<String> = b.leaves.iter().map(|(o, ..)| state_id(name, o)).collect();
    let parents = parents(&b.nodes);
    let mut leaf_node = vec![0; b.leaves.len()];
    for (n, node) in b.nodes.iter().enumerate() {
        if let NodeKind::Require(l) | NodeKind::Forbid(l) = node.kind {
            leaf_node[l] = n;
        }
    }

    let mut states = Vec::with_capacity(b.leaves.len() + 1);
    let (root_entry, _) = entry_leaves(&b.nodes, root);
    let ids_of = |leaves: Vec<usize>| -> Vec<String> {
        let mut ids: Vec<String> = leaves.into_iter().map(|l| leaf_ids[l].clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    };
    states.push(AutoState {
        id: state_id(name, &Origin::Trigger),
        kind: StateKind::Always,
        guard: Guard::new(&p.trigger, b.predicates, epsilon).map_err(err)?,
        on_match: ids_of(root_entry),
        deactivate_on: None,
        closed_by: None,
        origin: Origin::Trigger,
        key_fields: trigger_keys,
    });
    for (l, (origin, kind, c, keys)) in b.leaves.iter().enumerate() {
        let node = leaf_node[l];
        let (on_match, deactivate_on, closed_by) = match kind {
            StateKind::Hot => (ids_of(continuation(&b.nodes, &parents, node)), None, None),
            _ => {
                let mut closer = None;
                if let Some((pn, i)) = parents[node] {
                    if let NodeKind::Ordered(children) = &b.nodes[pn].kind {
                        closer = closing_sibling(&b.nodes, children, i).map(|j| children[j]);
                    }
                }
                let deactivate = closer.and_then(|n| match &b.nodes[n].kind {
                    NodeKind::Require(cl) => Some(b.leaves[*cl].2.clone()),
                    _ => None,
                });
                (Vec::new(), deactivate, closer.map(|n| b.nodes[n].path.clone()))
            }
        };
        states.push(AutoState {
            id: leaf_ids[l].clone(),
            kind: *kind,
            guard: Guard::new(c, b.predicates, epsilon).map_err(err)?,
            on_match,
            deactivate_on,
            closed_by,
            origin: origin.clone(),
            key_fields: keys.clone(),
        });
    }

    // sort states by id and remap the leaf references in the skeleton
    let mut order: Vec<usize> = (0..states.len()).collect();
    order.sort_by(|&a, &c| states[a].id.cmp(&states[c].id));
    let mut new_index = vec![0; states.len()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let mut slots: Vec<Option<AutoState>> = states.into_iter().map(Some).collect();
    let states: Vec<AutoState> = order.iter().map(|&o| slots[o].take().expect("each state once")).collect();
    let mut nodes = b.nodes;
    for n in &mut nodes {
        match &mut n.kind {
            NodeKind::Require(l) | NodeKind::Forbid(l) => *l = new_index[*l + 1],
            _ => {}
        }
    }
    let trigger = new_index[0];
    let mut by_kind: BTreeMap<EventKind, Vec<usize>> = BTreeMap::new();
    for (i, s) in states.iter().enumerate() {
        if s.kind != StateKind::Always {
            by_kind.entry(s.guard.kind()).or_default().push(i);
        }
    }
    Ok(Automaton {
        pattern_name: name.clone(),
        initial: vec![states[trigger].id.clone()],
        states,
        trigger,
        nodes,
        root,
        by_kind,
    })
}

/// Compiles every pattern of `spec`. Float comparisons are exact.
pub fn compile(spec: &Spec, predicates: &PredicateRegistry) -> Result<Vec<Automaton>, CompileError> {
    compile_with_epsilon(spec, predicates, 0.0)
}

/// Like [`compile`] with numeric equality tolerance `epsilon`.
pub fn compile_with_epsilon(
    spec: &Spec,
    predicates: &PredicateRegistry,
    epsilon: f64,
) -> Result<Vec<Automaton>, CompileError> {
    spec.patterns
        .iter()
        .map(|p| compile_pattern(p, predicates, epsilon))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;

    const COMMAND_SUCCESS: &str = include_str!("../../tests/data/command_success.lsc");

    fn one(text: &str) -> Automaton {
        let spec = parse_spec(text).unwrap();
        compile(&spec, &PredicateRegistry::with_builtins()).unwrap().remove(0)
    }

    #[test]
    fn single_require() {
        let a = one("pattern P: COMMAND{Stem: x} => EVR{Done: x}");
        assert_eq!(a.states().len(), 2);
        assert_eq!(a.count(StateKind::Always), 1);
        assert_eq!(a.count(StateKind::Hot), 1);
        assert_eq!(a.initial, vec!["P.trigger"]);
        assert_eq!(a.trigger_state().on_match, vec!["P.c"]);
        // the HOT state is keyed on the bound variable
        let hot = a.state("P.c").unwrap();
        assert_eq!(hot.key_fields, vec![("Done".to_string(), KeySource::Var("x".into()))]);
    }

    #[test]
    fn single_forbid() {
        let a = one("pattern P: COMMAND{Stem: x} => not EVR{Fail: x}");
        assert_eq!(a.states().len(), 2);
        assert_eq!(a.count(StateKind::Watch), 1);
        assert_eq!(a.state("P.c").unwrap().deactivate_on, None);
    }

    #[test]
    fn command_success_shape() {
        let a = one(COMMAND_SUCCESS);
        assert_eq!(a.count(StateKind::Always), 1);
        assert_eq!(a.count(StateKind::Hot), 2);
        assert_eq!(a.count(StateKind::Watch), 3);
        let trig = a.trigger_state();
        // dispatch, success, dispatch failure, failure; the post-success
        // prohibition waits for the success
        assert_eq!(
            trig.on_match,
            vec!["CommandSuccess.c.0", "CommandSuccess.c.1.0", "CommandSuccess.c.2", "CommandSuccess.c.3"]
        );
        assert_eq!(a.state("CommandSuccess.c.1.0").unwrap().on_match, vec!["CommandSuccess.c.1.1"]);
        assert_eq!(a.state("CommandSuccess.c.1.1").unwrap().kind, StateKind::Watch);
    }

    #[test]
    fn window_closers() {
        let a = one("pattern P: COMMAND{Stem: x} => [not EVR{A: x}, not EVR{B: x}, EVR{C: x}, not EVR{D: x}]");
        let c = a.state("P.c.2").unwrap().guard.constraint().clone();
        assert_eq!(a.state("P.c.0").unwrap().deactivate_on.as_ref(), Some(&c));
        assert_eq!(a.state("P.c.1").unwrap().deactivate_on.as_ref(), Some(&c));
        assert_eq!(a.state("P.c.3").unwrap().deactivate_on, None);
        assert_eq!(
            a.trigger_state().on_match,
            vec!["P.c.0", "P.c.1", "P.c.2"]
        );
        assert_eq!(a.state("P.c.2").unwrap().on_match, vec!["P.c.3"]);

        let a = one("pattern P: COMMAND{Stem: x} => [not EVR{A: x}, {EVR{B: x}, EVR{C: x}}]");
        let w = a.state("P.c.0").unwrap();
        assert_eq!(w.deactivate_on, None);
        assert_eq!(w.closed_by, Some(AstPath(vec![1])));
    }

    #[test]
    fn unknown_predicate_and_arity() {
        let spec = parse_spec("pattern P: COMMAND{Stem: nope(1)} => EVR{}").unwrap();
        let err = compile(&spec, &PredicateRegistry::with_builtins()).unwrap_err();
        assert_eq!(err.guard_error(), &GuardError::UnknownPredicate("nope".into()));
        let spec = parse_spec("pattern P: COMMAND{Stem: between(1)} => EVR{}").unwrap();
        let err = compile(&spec, &PredicateRegistry::with_builtins()).unwrap_err();
        assert!(matches!(err.guard_error(), GuardError::ArityMismatch { expected: 2, got: 1, .. }));
    }

    #[test]
    fn deterministic() {
        let s = parse_spec(COMMAND_SUCCESS).unwrap();
        let r = PredicateRegistry::empty();
        assert_eq!(compile(&s, &r).unwrap(), compile(&s, &r).unwrap());
    }

    #[test]
    fn epsilon_disables_keys() {
        let s = parse_spec("pattern P: COMMAND{Stem: x} => EVR{Done: x}").unwrap();
        let a = compile_with_epsilon(&s, &PredicateRegistry::empty(), 0.5).unwrap().remove(0);
        assert!(a.state("P.c").unwrap().key_fields.is_empty());
    }
}
