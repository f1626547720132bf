use std::collections::{BTreeSet, HashMap};

use super::report::{PatternReport, Report, Violation, ViolationKind};
use super::MonitorError;
use crate::compiler::{closing_sibling, Automaton, Binding, KeyValue, NodeKind, Origin, StateKind};
use crate::event::{Event, EventKind, Log};
use crate::spec::AstPath;

type Id = u64;
type Key = Vec<KeyValue>;

/// A live HOT or WATCH state of one instance.
#[derive(Debug, Clone)]
pub struct Obligation {
    pub state: usize,
    pub binding: Binding,
    pub activated_at: usize,
    instance: Id,
    /// Scope frame to notify on completion (HOT only).
    parent: Option<Id>,
    key: Key,
}

#[derive(Debug)]
struct Instance {
    trigger_index: usize,
    /// Obligations plus open frames.
    live: usize,
    violated: bool,
}

#[derive(Debug)]
enum FrameKind {
    Ordered {
        waiting_on: usize,
        /// (position of the closing sibling, watch obligation)
        windows: Vec<(usize, Id)>,
    },
    Unordered {
        remaining: usize,
        binding: Binding,
    },
}

/// An ordered or unordered scope that has been entered but not completed.
#[derive(Debug)]
struct Frame {
    node: usize,
    instance: Id,
    parent: Option<Id>,
    kind: FrameKind,
}

/// Monitoring state for one automaton.
struct Run<'a> {
    automaton: &'a Automaton,
    next_id: Id,
    obligations: HashMap<Id, Obligation>,
    /// Per state: obligations bucketed by the values their guard requires.
    index: Vec<HashMap<Key, BTreeSet<Id>>>,
    frames: HashMap<Id, Frame>,
    instances: HashMap<Id, Instance>,
    touched: Vec<Id>,
    report: PatternReport,
}

impl<'a> Run<'a> {
    fn new(automaton: &'a Automaton) -> Self {
        Run {
            automaton,
            next_id: 0,
            obligations: HashMap::new(),
            index: vec![HashMap::new(); automaton.states().len()],
            frames: HashMap::new(),
            instances: HashMap::new(),
            touched: Vec::new(),
            report: PatternReport {
                pattern: automaton.pattern_name.clone(),
                ..PatternReport::default()
            },
        }
    }

    fn fresh(&mut self) -> Id {
        self.next_id += 1;
        self.next_id
    }

    fn instance(&mut self, id: Id) -> &mut Instance {
        self.instances.get_mut(&id).expect("instance is live")
    }

    fn spawn(&mut self, state: usize, binding: Binding, pos: usize, instance: Id, parent: Option<Id>) -> Id {
        let id = self.fresh();
        let key = self.automaton.state_at(state).binding_key(&binding);
        self.index[state].entry(key.clone()).or_default().insert(id);
        self.obligations.insert(
            id,
            Obligation {
                state,
                binding,
                activated_at: pos,
                instance,
                parent,
                key,
            },
        );
        self.instance(instance).live += 1;
        id
    }

    fn remove(&mut self, id: Id) -> Option<Obligation> {
        let ob = self.obligations.remove(&id)?;
        let bucket = self.index[ob.state].get_mut(&ob.key).expect("indexed");
        bucket.remove(&id);
        if bucket.is_empty() {
            self.index[ob.state].remove(&ob.key);
        }
        self.instance(ob.instance).live -= 1;
        self.touched.push(ob.instance);
        Some(ob)
    }

    fn new_frame(&mut self, node: usize, instance: Id, parent: Option<Id>, kind: FrameKind) -> Id {
        let id = self.fresh();
        self.frames.insert(
            id,
            Frame {
                node,
                instance,
                parent,
                kind,
            },
        );
        self.instance(instance).live += 1;
        id
    }

    /// Enters `node` at `pos`. Returns the outgoing binding if the node
    /// completed on entry.
    fn activate(&mut self, node: usize, binding: Binding, parent: Option<Id>, pos: usize, inst: Id) -> Option<Binding> {
        let a = self.automaton;
        match &a.nodes[node].kind {
            NodeKind::Require(s) => {
                self.spawn(*s, binding, pos, inst, parent);
                None
            }
            NodeKind::Forbid(s) => {
                self.spawn(*s, binding.clone(), pos, inst, None);
                Some(binding)
            }
            NodeKind::Ordered(_) => {
                let f = self.new_frame(
                    node,
                    inst,
                    parent,
                    FrameKind::Ordered {
                        waiting_on: 0,
                        windows: Vec::new(),
                    },
                );
                let done = self.advance(f, 0, binding, pos)?;
                self.frames.remove(&f);
                self.instance(inst).live -= 1;
                Some(done)
            }
            NodeKind::Unordered(children) => {
                let f = self.new_frame(
                    node,
                    inst,
                    parent,
                    FrameKind::Unordered {
                        remaining: children.len(),
                        binding: binding.clone(),
                    },
                );
                let mut completed = 0;
                for &c in children {
                    if self.activate(c, binding.clone(), Some(f), pos, inst).is_some() {
                        completed += 1;
                    }
                }
                let Some(Frame {
                    kind: FrameKind::Unordered { remaining, .. },
                    ..
                }) = self.frames.get_mut(&f)
                else {
                    unreachable!("unordered frame")
                };
                *remaining -= completed;
                if *remaining == 0 {
                    self.frames.remove(&f);
                    self.instance(inst).live -= 1;
                    Some(binding)
                } else {
                    None
                }
            }
        }
    }

    /// Runs the ordered scope `f` from child `start` until a child blocks.
    fn advance(&mut self, f: Id, start: usize, mut binding: Binding, pos: usize) -> Option<Binding> {
        let a = self.automaton;
        let (node, inst) = {
            let fr = &self.frames[&f];
            (fr.node, fr.instance)
        };
        let NodeKind::Ordered(children) = &a.nodes[node].kind else {
            unreachable!("ordered frame")
        };
        let mut i = start;
        while i < children.len() {
            let c = children[i];
            if let NodeKind::Forbid(s) = a.nodes[c].kind {
                let id = self.spawn(s, binding.clone(), pos, inst, None);
                if let Some(m) = closing_sibling(&a.nodes, children, i) {
                    if let Some(FrameKind::Ordered { windows, .. }) = self.frames.get_mut(&f).map(|fr| &mut fr.kind) {
                        windows.push((m, id));
                    }
                }
                i += 1;
                continue;
            }
            match self.activate(c, binding.clone(), Some(f), pos, inst) {
                Some(next) => {
                    self.close_windows(f, i);
                    binding = next;
                    i += 1;
                }
                None => {
                    if let Some(FrameKind::Ordered { waiting_on, .. }) = self.frames.get_mut(&f).map(|fr| &mut fr.kind) {
                        *waiting_on = i;
                    }
                    return None;
                }
            }
        }
        Some(binding)
    }

    fn close_windows(&mut self, f: Id, position: usize) {
        let closing: Vec<Id> = match self.frames.get_mut(&f).map(|fr| &mut fr.kind) {
            Some(FrameKind::Ordered { windows, .. }) => {
                let (now, later): (Vec<_>, Vec<_>) = windows.drain(..).partition(|(m, _)| *m == position);
                *windows = later;
                now.into_iter().map(|(_, id)| id).collect()
            }
            _ => Vec::new(),
        };
        for id in closing {
            self.remove(id);
        }
    }

    /// A child of frame `f` completed at `pos` with `binding`.
    fn complete_child(&mut self, f: Id, binding: Binding, pos: usize) {
        let waiting = match &mut self.frames.get_mut(&f).expect("frame is open").kind {
            FrameKind::Ordered { waiting_on, .. } => Ok(*waiting_on),
            FrameKind::Unordered { remaining, binding: entry } => {
                *remaining -= 1;
                Err((*remaining == 0).then(|| entry.clone()))
            }
        };
        let done = match waiting {
            Ok(i) => {
                self.close_windows(f, i);
                self.advance(f, i + 1, binding, pos)
            }
            Err(done) => done,
        };
        if let Some(b) = done {
            let frame = self.frames.remove(&f).expect("frame is open");
            self.instance(frame.instance).live -= 1;
            self.touched.push(frame.instance);
            if let Some(p) = frame.parent {
                self.complete_child(p, b, pos);
            }
        }
    }

    fn violation(&self, ob: &Obligation, kind: ViolationKind, offending: Option<usize>) -> Violation {
        let state = self.automaton.state_at(ob.state);
        let trigger_index = self.instances[&ob.instance].trigger_index;
        let origin = match &state.origin {
            Origin::Node(p) => p.clone(),
            Origin::Trigger => AstPath::root(),
        };
        let c = state.guard.constraint();
        let message = match offending {
            Some(j) => format!("forbidden {c} matched by event {j} (trigger at event {trigger_index})"),
            None => format!(
                "expected {c} after event {} but the log ended without it",
                ob.activated_at
            ),
        };
        Violation {
            pattern: self.automaton.pattern_name.clone(),
            kind,
            trigger_index,
            binding: ob.binding.clone(),
            obligation_origin: origin,
            offending_index: offending,
            message,
        }
    }

    fn candidates(&self, e: &Event, kind: StateKind) -> Vec<Id> {
        let a = self.automaton;
        let mut ids = Vec::new();
        for &s in a.by_kind.get(&e.kind).into_iter().flatten() {
            let st = a.state_at(s);
            if st.kind != kind {
                continue;
            }
            let Some(key) = st.event_key(e) else { continue };
            if let Some(bucket) = self.index[s].get(&key) {
                ids.extend(
                    bucket
                        .iter()
                        .copied()
                        .filter(|id| self.obligations[id].activated_at < e.index),
                );
            }
        }
        ids.sort_unstable();
        ids
    }

    fn step(&mut self, e: &Event) -> Result<Vec<Violation>, MonitorError> {
        let a = self.automaton;
        let mut out = Vec::new();

        // obligations completed by this event
        for id in self.candidates(e, StateKind::Hot) {
            let ob = &self.obligations[&id];
            let guard = &a.state_at(ob.state).guard;
            if let Some(next) = guard.matches(e, &ob.binding)? {
                let ob = self.remove(id).expect("live");
                if let Some(f) = ob.parent {
                    self.complete_child(f, next, e.index);
                }
            }
        }

        // new instance
        let trigger = a.trigger_state();
        if let Some(binding) = trigger.guard.matches(e, &Binding::new())? {
            let inst = self.fresh();
            self.instances.insert(
                inst,
                Instance {
                    trigger_index: e.index,
                    live: 0,
                    violated: false,
                },
            );
            self.report.triggers += 1;
            self.touched.push(inst);
            self.activate(a.root, binding, None, e.index, inst);
        }

        // prohibitions still open after this event's completions
        for id in self.candidates(e, StateKind::Watch) {
            let Some(ob) = self.obligations.get(&id) else { continue };
            let guard = &a.state_at(ob.state).guard;
            if guard.matches(e, &ob.binding)?.is_some() {
                let v = self.violation(ob, ViolationKind::ForbiddenEvent, Some(e.index));
                let ob = self.remove(id).expect("live");
                self.instance(ob.instance).violated = true;
                out.push(v);
            }
        }

        self.retire_touched();
        self.report.violations.extend(out.iter().cloned());
        Ok(out)
    }

    fn retire_touched(&mut self) {
        let mut touched = std::mem::take(&mut self.touched);
        touched.sort_unstable();
        touched.dedup();
        for inst in touched {
            if self.instances.get(&inst).is_some_and(|i| i.live == 0) {
                let i = self.instances.remove(&inst).expect("present");
                if i.violated {
                    self.report.violated += 1;
                } else {
                    self.report.satisfied += 1;
                }
            }
        }
    }

    fn finish(mut self) -> PatternReport {
        let mut ids: Vec<Id> = self.obligations.keys().copied().collect();
        ids.sort_unstable();
        for id in ids {
            let ob = &self.obligations[&id];
            if self.automaton.state_at(ob.state).kind == StateKind::Hot {
                let v = self.violation(ob, ViolationKind::MissingEvent, None);
                self.report.violations.push(v);
                let inst = ob.instance;
                self.instance(inst).violated = true;
            }
        }
        let mut insts: Vec<(Id, Instance)> = self.instances.drain().collect();
        insts.sort_unstable_by_key(|(id, _)| *id);
        for (_, i) in insts {
            if i.violated {
                self.report.violated += 1;
            } else {
                self.report.satisfied += 1;
            }
        }
        self.report
    }

    fn live_obligations(&self) -> usize {
        self.obligations.len()
    }
}

/// Incremental monitoring of one log against a set of automata.
///
/// Feed events in log order with [`Session::step`], then call
/// [`Session::finish`]. A session borrows its automata, so several sessions
/// can share one compiled spec.
pub struct Session<'a> {
    runs: Vec<Run<'a>>,
    source_id: String,
    last_index: Option<usize>,
}

impl<'a> Session<'a> {
    pub fn new(automata: &'a [Automaton]) -> Self {
        Session {
            runs: automata.iter().map(Run::new).collect(),
            source_id: String::new(),
            last_index: None,
        }
    }

    pub fn with_source(mut self, source_id: &str) -> Self {
        self.source_id = source_id.to_string();
        self
    }

    /// Number of armed trigger states.
    pub fn armed(&self) -> usize {
        self.runs.len()
    }

    /// Number of live HOT and WATCH obligations across all automata.
    pub fn live_obligations(&self) -> usize {
        self.runs.iter().map(Run::live_obligations).sum()
    }

    /// Live obligations of the automaton at `automaton`, in activation order.
    pub fn obligations(&self, automaton: usize) -> Vec<&Obligation> {
        let run = &self.runs[automaton];
        let mut ids: Vec<&Id> = run.obligations.keys().collect();
        ids.sort_unstable();
        ids.into_iter().map(|id| &run.obligations[id]).collect()
    }

    /// Processes one event and returns the violations it caused.
    pub fn step(&mut self, e: &Event) -> Result<Vec<Violation>, MonitorError> {
        if let Some(last) = self.last_index {
            if e.index <= last {
                return Err(MonitorError::OutOfOrder { last, got: e.index });
            }
        }
        self.last_index = Some(e.index);
        if e.kind == EventKind::Meta {
            // no guard can constrain META
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for run in &mut self.runs {
            out.extend(run.step(e)?);
        }
        Ok(out)
    }

    /// Ends the log: open HOT obligations become violations, open WATCH
    /// obligations are satisfied.
    pub fn finish(self) -> Report {
        Report {
            source_id: self.source_id,
            patterns: self.runs.into_iter().map(Run::finish).collect(),
        }
    }
}

/// Runs every event of `log` through a fresh session.
pub fn check(automata: &[Automaton], log: &Log) -> Result<Report, MonitorError> {
    let mut s = Session::new(automata).with_source(&log.source_id);
    for e in log.events() {
        s.step(e)?;
    }
    Ok(s.finish())
}
