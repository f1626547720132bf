//! The pattern specification language: tokenizer, parser, AST, binding
//! analysis and canonical pretty-printer.
//!
//! ```text
//! pattern CommandSuccess:
//!   COMMAND{Type: "FlightSoftwareCommand", Stem: x, Number: y} =>
//!     {
//!       EVR{Dispatch: x, Number: y},
//!       [ EVR{Success: x, Number: y}, not EVR{Success: x, Number: y} ],
//!       not EVR{Failure: x, Number: y}
//!     }
//! ```
//!
//! `{...}` groups obligations in any order, `[...]` in sequence, and `not`
//! forbids a single event constraint. A lowercase identifier in matcher
//! position binds a variable the first time it is seen and must be equal
//! on every later occurrence.

mod ast;
mod lexer;
mod parser;
mod pretty;

use std::collections::BTreeSet;

pub use ast::*;
pub use parser::parse_spec;
pub use pretty::{pretty_pattern, pretty_print};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("{line}:{col}: syntax error: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("pattern `{pattern}`: variable `{var}` is not bound before use, or is bound and never used")]
    UnboundVariable { pattern: String, var: String },
    #[error("{line}:{col}: field `{field}` constrained twice in one event constraint")]
    DuplicateField {
        field: String,
        line: usize,
        col: usize,
    },
    #[error("pattern `{0}` defined more than once")]
    DuplicatePattern(String),
    #[error("pattern `{pattern}`: {reason}")]
    Invalid { pattern: String, reason: String },
}

struct Binder {
    var: String,
    used: bool,
}

struct BindingCheck<'a> {
    pattern: &'a str,
    binders: Vec<Binder>,
}

impl BindingCheck<'_> {
    fn unbound(&self, var: &str) -> SpecError {
        SpecError::UnboundVariable {
            pattern: self.pattern.to_string(),
            var: var.to_string(),
        }
    }

    fn mark_used(&mut self, var: &str) {
        if let Some(b) = self.binders.iter_mut().rev().find(|b| b.var == var) {
            b.used = true;
        }
    }

    /// Walks one leaf's fields in order. With `may_bind`, unbound variables
    /// become binders; otherwise they are errors.
    fn leaf(
        &mut self,
        c: &EventConstraint,
        bound: &mut BTreeSet<String>,
        may_bind: bool,
    ) -> Result<(), SpecError> {
        for fc in &c.constraints {
            match &fc.matcher {
                Matcher::Bind(v) => {
                    if bound.contains(v) {
                        self.mark_used(v);
                    } else if may_bind {
                        bound.insert(v.clone());
                        self.binders.push(Binder {
                            var: v.clone(),
                            used: false,
                        });
                    } else {
                        return Err(self.unbound(v));
                    }
                }
                Matcher::Predicate { args, .. } => {
                    for a in args {
                        if let Arg::Var(v) = a {
                            if !bound.contains(v) {
                                return Err(self.unbound(v));
                            }
                            self.mark_used(v);
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn node(
        &mut self,
        node: &ConsequenceNode,
        bound: &BTreeSet<String>,
    ) -> Result<BTreeSet<String>, SpecError> {
        match node {
            ConsequenceNode::Require(c) => {
                let mut after = bound.clone();
                self.leaf(c, &mut after, true)?;
                Ok(after)
            }
            ConsequenceNode::Forbid(c) => {
                let mut same = bound.clone();
                self.leaf(c, &mut same, false)?;
                Ok(bound.clone())
            }
            ConsequenceNode::Ordered(children) => {
                let mut cur = bound.clone();
                for child in children {
                    cur = self.node(child, &cur)?;
                }
                Ok(cur)
            }
            ConsequenceNode::Unordered(children) => {
                for child in children {
                    self.node(child, bound)?;
                }
                Ok(bound.clone())
            }
        }
    }
}

fn check_names(pattern: &Pattern) -> Result<(), SpecError> {
    let invalid = |reason: String| SpecError::Invalid {
        pattern: pattern.name.clone(),
        reason,
    };
    let mut leaves = vec![&pattern.trigger];
    let mut stack = vec![&pattern.consequence];
    while let Some(n) = stack.pop() {
        match n {
            ConsequenceNode::Require(c) | ConsequenceNode::Forbid(c) => leaves.push(c),
            ConsequenceNode::Ordered(ch) | ConsequenceNode::Unordered(ch) => {
                if ch.is_empty() {
                    return Err(invalid("empty scope".into()));
                }
                stack.extend(ch);
            }
        }
    }
    for c in leaves {
        if c.kind == crate::event::EventKind::Meta {
            return Err(invalid("META cannot be constrained".into()));
        }
        let mut seen = BTreeSet::new();
        for fc in &c.constraints {
            if !parser::is_field_name(&fc.name) {
                return Err(invalid(format!("bad field name `{}`", fc.name)));
            }
            if !seen.insert(fc.name.as_str()) {
                return Err(SpecError::DuplicateField {
                    field: fc.name.clone(),
                    line: 0,
                    col: 0,
                });
            }
        }
        for v in c.variables() {
            if !parser::is_variable_name(v) {
                return Err(invalid(format!("bad variable name `{v}`")));
            }
        }
    }
    Ok(())
}

/// Checks everything the grammar alone does not: unique pattern names,
/// name syntax, nonempty scopes, and binding discipline.
///
/// A variable is bound by the trigger or by a required (non-negated) event
/// constraint; its scope is the rest of that constraint and, inside an
/// ordered scope, the later siblings. Bindings made inside an unordered
/// scope stay inside the child that made them. Negated constraints can
/// only use variables already in scope. A variable bound inside the
/// consequence that nothing ever uses again is reported as unbound: it can
/// only be a misspelling.
pub fn validate_spec(spec: &Spec) -> Result<(), SpecError> {
    let mut names = BTreeSet::new();
    for p in &spec.patterns {
        if !parser::is_plain_ident(&p.name) {
            return Err(SpecError::Invalid {
                pattern: p.name.clone(),
                reason: "bad pattern name".into(),
            });
        }
        if !names.insert(p.name.as_str()) {
            return Err(SpecError::DuplicatePattern(p.name.clone()));
        }
        check_names(p)?;
        let mut check = BindingCheck {
            pattern: &p.name,
            binders: Vec::new(),
        };
        let mut bound = BTreeSet::new();
        check.leaf(&p.trigger, &mut bound, true)?;
        check.binders.clear();
        check.node(&p.consequence, &bound)?;
        if let Some(b) = check.binders.iter().find(|b| !b.used) {
            return Err(check.unbound(&b.var));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{EventKind, Value};

    pub(crate) const COMMAND_SUCCESS: &str = r#"
pattern CommandSuccess:
  COMMAND{Type : "FlightSoftwareCommand", Stem : x, Number : y} =>
     {
        EVR{Dispatch : x, Number : y},
        [
           EVR{Success : x, Number : y},
           not EVR{Success : x, Number : y}
        ],
        not EVR{DispatchFailure : x, Number : y},
        not EVR{Failure : x, Number : y}
     }
"#;

    fn evr(field: &str) -> EventConstraint {
        EventConstraint::new(EventKind::Evr)
            .field(field, Matcher::Bind("x".into()))
            .field("Number", Matcher::Bind("y".into()))
    }

    #[test]
    fn parses_command_success() {
        let spec = parse_spec(COMMAND_SUCCESS).unwrap();
        assert_eq!(spec.patterns.len(), 1);
        let p = &spec.patterns[0];
        assert_eq!(p.name, "CommandSuccess");
        assert_eq!(p.trigger.variables(), vec!["x", "y"]);
        assert_eq!(
            p.trigger.constraints[0].matcher,
            Matcher::Literal(Value::from("FlightSoftwareCommand"))
        );
        use ConsequenceNode::*;
        let expected = Unordered(vec![
            Require(evr("Dispatch")),
            Ordered(vec![Require(evr("Success")), Forbid(evr("Success"))]),
            Forbid(evr("DispatchFailure")),
            Forbid(evr("Failure")),
        ]);
        assert_eq!(p.consequence, expected);
    }

    #[test]
    fn empty_and_comment_only() {
        assert_eq!(parse_spec("").unwrap(), Spec::default());
        assert_eq!(parse_spec("  # nothing\n").unwrap(), Spec::default());
        assert_eq!(pretty_print(&Spec::default()), "");
    }

    #[test]
    fn unbound_in_consequence() {
        let err = parse_spec("pattern P: COMMAND{Stem: x} => EVR{Done: y}").unwrap_err();
        assert_eq!(
            err,
            SpecError::UnboundVariable {
                pattern: "P".into(),
                var: "y".into()
            }
        );
    }

    #[test]
    fn binding_by_earlier_require() {
        parse_spec("pattern P: COMMAND{Stem: x} => [EVR{Dispatch: x, Id: z}, EVR{Done: z}]").unwrap();
        // forbids cannot bind
        assert!(matches!(
            parse_spec("pattern P: COMMAND{Stem: x} => [not EVR{Id: z}, EVR{Done: z}]"),
            Err(SpecError::UnboundVariable { .. })
        ));
        // a later sibling cannot bind for an earlier one
        assert!(matches!(
            parse_spec("pattern P: COMMAND{Stem: x} => [EVR{Done: z}, EVR{Id: z}]").map(|_| ()),
            Ok(())
        ));
        assert!(matches!(
            parse_spec("pattern P: COMMAND{Stem: x} => [not EVR{Done: z}, EVR{Id: z}]"),
            Err(SpecError::UnboundVariable { .. })
        ));
    }

    #[test]
    fn unordered_bindings_stay_local() {
        // z is bound in one unordered child and referenced in another
        assert!(matches!(
            parse_spec("pattern P: COMMAND{Stem: x} => {EVR{Id: z}, not EVR{Done: z}}"),
            Err(SpecError::UnboundVariable { .. })
        ));
        // but it can be used within its own subtree
        parse_spec("pattern P: COMMAND{Stem: x} => {[EVR{Id: z}, not EVR{Done: z}], EVR{A: x}}").unwrap();
        // and nothing escapes the unordered scope into later ordered siblings
        assert!(matches!(
            parse_spec("pattern P: COMMAND{Stem: x} => [{[EVR{Id: z}, EVR{B: z}]}, EVR{Done: z}]"),
            Err(SpecError::UnboundVariable { .. })
        ));
    }

    #[test]
    fn same_leaf_reuse_counts_as_use() {
        parse_spec("pattern P: COMMAND{} => EVR{A: z, B: z}").unwrap();
        parse_spec("pattern P: COMMAND{A: x} => EVR{B: z, C: between(x, z)}").unwrap();
    }

    #[test]
    fn predicate_args_must_be_bound() {
        assert!(matches!(
            parse_spec("pattern P: COMMAND{A: f(q)} => EVR{}"),
            Err(SpecError::UnboundVariable { .. })
        ));
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let err = parse_spec("pattern P: COMMAND{Stem: x} => not [EVR{}]").unwrap_err();
        assert!(matches!(err, SpecError::Syntax { line: 1, col: 36, .. }), "{err:?}");
        let err = parse_spec("pattern P:\n  META{} => EVR{}").unwrap_err();
        assert!(matches!(err, SpecError::Syntax { line: 2, col: 3, .. }), "{err:?}");
        assert!(matches!(
            parse_spec("pattern P: COMMAND{} => []"),
            Err(SpecError::Syntax { .. })
        ));
        assert!(matches!(
            parse_spec("pattern P: COMMAND{A: Upper} => EVR{}"),
            Err(SpecError::Syntax { .. })
        ));
        assert!(matches!(
            parse_spec(r#"pattern P: COMMAND{A: matches "("} => EVR{}"#),
            Err(SpecError::Syntax { .. })
        ));
    }

    #[test]
    fn duplicates() {
        assert!(matches!(
            parse_spec("pattern P: COMMAND{A: 1, A: 2} => EVR{}"),
            Err(SpecError::DuplicateField { .. })
        ));
        assert_eq!(
            parse_spec("pattern P: COMMAND{} => EVR{} pattern P: EVR{} => EVR{}"),
            Err(SpecError::DuplicatePattern("P".into()))
        );
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let text = format!("pattern P: COMMAND{{}} => {}EVR{{}}{}", "[".repeat(5000), "]".repeat(5000));
        assert!(matches!(parse_spec(&text), Err(SpecError::Syntax { .. })));
    }

    #[test]
    fn all_matcher_forms_round_trip() {
        let text = r#"
pattern Everything:
  COMMAND{A: "t\"x", B: -4, C: 2.5, D: true, E: v, F: >= 5, G: != "q", H: matches "PI.*", I: near(v, 1.0e3)} =>
    [not EVR{A: v}, {EVR{B: < 0}, CHANGE{pos.x: <= -1.5}}, PRODUCT{}]
"#;
        let spec = parse_spec(text).unwrap();
        let printed = pretty_print(&spec);
        assert_eq!(parse_spec(&printed).unwrap(), spec);
        assert_eq!(pretty_print(&parse_spec(&printed).unwrap()), printed);
    }

    #[test]
    fn command_success_pretty_print_is_stable() {
        let spec = parse_spec(COMMAND_SUCCESS).unwrap();
        let printed = pretty_print(&spec);
        assert_eq!(
            printed,
            r#"pattern CommandSuccess:
  COMMAND{Type: "FlightSoftwareCommand", Stem: x, Number: y} =>
    {
      EVR{Dispatch: x, Number: y},
      [
        EVR{Success: x, Number: y},
        not EVR{Success: x, Number: y}
      ],
      not EVR{DispatchFailure: x, Number: y},
      not EVR{Failure: x, Number: y}
    }
"#
        );
        assert_eq!(parse_spec(&printed).unwrap(), spec);
    }
}
