use std::fmt::{self, Write as _};

use super::ast::*;
use crate::event::Value;

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Literal(v) => write!(f, "{v}"),
            Arg::Var(v) => f.write_str(v),
        }
    }
}

impl fmt::Display for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Matcher::Literal(v) => write!(f, "{v}"),
            Matcher::Bind(v) => f.write_str(v),
            Matcher::Compare(op, v) => write!(f, "{} {v}", op.as_str()),
            Matcher::Regex(re) => write!(f, "matches {}", Value::Text(re.clone())),
            Matcher::Predicate { name, args } => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for EventConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.kind)?;
        for (i, fc) in self.constraints.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", fc.name, fc.matcher)?;
        }
        f.write_str("}")
    }
}

fn write_node(out: &mut String, node: &ConsequenceNode, indent: usize) {
    let pad = "  ".repeat(indent);
    match node {
        ConsequenceNode::Require(c) => {
            let _ = write!(out, "{pad}{c}");
        }
        ConsequenceNode::Forbid(c) => {
            let _ = write!(out, "{pad}not {c}");
        }
        ConsequenceNode::Ordered(children) | ConsequenceNode::Unordered(children) => {
            let (open, close) = if matches!(node, ConsequenceNode::Ordered(_)) {
                ('[', ']')
            } else {
                ('{', '}')
            };
            let _ = writeln!(out, "{pad}{open}");
            for (i, child) in children.iter().enumerate() {
                write_node(out, child, indent + 1);
                if i + 1 < children.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            let _ = write!(out, "{pad}{close}");
        }
    }
}

pub fn pretty_pattern(p: &Pattern) -> String {
    let mut out = format!("pattern {}:\n  {} =>\n", p.name, p.trigger);
    write_node(&mut out, &p.consequence, 2);
    out.push('\n');
    out
}

/// Canonical text of a spec. Patterns are separated by one blank line; an
/// empty spec prints as the empty string.
pub fn pretty_print(spec: &Spec) -> String {
    spec.patterns
        .iter()
        .map(pretty_pattern)
        .collect::<Vec<_>>()
        .join("\n")
}
