use std::fmt;

use crate::event::{EventKind, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Ne,
}

impl CompareOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Ne => "!=",
        }
    }
}

/// Argument of a predicate call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Literal(Value),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    Literal(Value),
    /// Binds on first occurrence, checks equality afterwards.
    Bind(String),
    Compare(CompareOp, Value),
    /// Anchored full-match regular expression.
    Regex(String),
    Predicate { name: String, args: Vec<Arg> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldConstraint {
    pub name: String,
    pub matcher: Matcher,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventConstraint {
    pub kind: EventKind,
    pub constraints: Vec<FieldConstraint>,
}

impl EventConstraint {
    pub fn new(kind: EventKind) -> Self {
        EventConstraint {
            kind,
            constraints: Vec::new(),
        }
    }

    pub fn field(mut self, name: &str, matcher: Matcher) -> Self {
        self.constraints.push(FieldConstraint {
            name: name.to_string(),
            matcher,
        });
        self
    }

    /// Variables mentioned anywhere in the constraint, in order of first appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for fc in &self.constraints {
            let vars: Vec<&str> = match &fc.matcher {
                Matcher::Bind(v) => vec![v],
                Matcher::Predicate { args, .. } => args
                    .iter()
                    .filter_map(|a| match a {
                        Arg::Var(v) => Some(v.as_str()),
                        Arg::Literal(_) => None,
                    })
                    .collect(),
                _ => vec![],
            };
            for v in vars {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsequenceNode {
    Require(EventConstraint),
    Forbid(EventConstraint),
    Ordered(Vec<ConsequenceNode>),
    Unordered(Vec<ConsequenceNode>),
}

impl ConsequenceNode {
    pub fn children(&self) -> &[ConsequenceNode] {
        match self {
            ConsequenceNode::Ordered(c) | ConsequenceNode::Unordered(c) => c,
            _ => &[],
        }
    }

    pub fn is_forbid(&self) -> bool {
        matches!(self, ConsequenceNode::Forbid(_))
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(Self::depth).max().unwrap_or(0)
    }

    /// Follows `path` (child indices) from this node.
    pub fn at(&self, path: &AstPath) -> Option<&ConsequenceNode> {
        path.0.iter().try_fold(self, |n, &i| n.children().get(i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub name: String,
    pub trigger: EventConstraint,
    pub consequence: ConsequenceNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Spec {
    pub patterns: Vec<Pattern>,
}

/// Position of a node inside a pattern's consequence tree, as child indices
/// from the root. Displays as `c`, `c.0`, `c.1.0`, ...
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AstPath(pub Vec<usize>);

impl AstPath {
    pub fn root() -> Self {
        AstPath(Vec::new())
    }

    pub fn child(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        v.push(i);
        AstPath(v)
    }
}

impl fmt::Display for AstPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("c")?;
        for i in &self.0 {
            write!(f, ".{i}")?;
        }
        Ok(())
    }
}
