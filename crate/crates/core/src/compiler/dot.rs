use std::fmt::Write as _;

use super::{Automaton, StateKind};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders an automaton as a Graphviz digraph. Output depends only on the
/// automaton: states appear in id order, edges in (source, target) order.
pub fn to_dot(a: &Automaton) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(&a.pattern_name));
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [fontname=\"Helvetica\", fontsize=10];\n");
    out.push_str("  edge [fontname=\"Helvetica\", fontsize=9];\n");
    for s in a.states() {
        let mut label = format!("{} {}\n{}", s.kind, s.origin, s.guard.constraint());
        if let Some(closer) = &s.deactivate_on {
            let _ = write!(label, "\nuntil {closer}");
        } else if let Some(path) = &s.closed_by {
            let _ = write!(label, "\nuntil {path} completes");
        }
        let attrs = match s.kind {
            StateKind::Always => "shape=doublecircle",
            StateKind::Hot => "shape=circle, style=filled, fillcolor=\"#f4a582\"",
            StateKind::Watch => "shape=circle, style=dashed",
        };
        let _ = writeln!(out, "  {} [label={}, {attrs}];", quote(&s.id), quote(&label));
    }
    let mut edges: Vec<(&str, &str, String)> = Vec::new();
    for s in a.states() {
        for t in &s.on_match {
            edges.push((&s.id, t, s.guard.constraint().to_string()));
        }
    }
    edges.sort();
    for (from, to, label) in edges {
        let _ = writeln!(out, "  {} -> {} [label={}];", quote(from), quote(to), quote(&label));
    }
    out.push_str("}\n");
    out
}
