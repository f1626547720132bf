use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{validate_spec, SpecError};
use crate::event::{EventKind, Value};

/// Nesting beyond this is rejected instead of recursing further.
const MAX_DEPTH: usize = 128;

const KEYWORDS: [&str; 5] = ["pattern", "not", "matches", "true", "false"];

pub(crate) fn is_variable_name(s: &str) -> bool {
    let mut chars = s.chars();
    chars
        .next()
        .is_some_and(|c| c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && !KEYWORDS.contains(&s)
}

pub(crate) fn is_field_name(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

pub(crate) fn is_plain_ident(s: &str) -> bool {
    is_field_name(s) && !s.contains('.') && !KEYWORDS.contains(&s)
}

fn observable_kind(s: &str) -> Option<EventKind> {
    EventKind::OBSERVABLE.into_iter().find(|k| k.as_str() == s)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, expected: &str) -> SpecError {
        let t = self.peek();
        SpecError::Syntax {
            line: t.line,
            col: t.col,
            expected: format!("{expected}, found {}", t.tok.describe()),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, SpecError> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.error_here(&tok.describe()))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn spec(&mut self) -> Result<Spec, SpecError> {
        let mut patterns = Vec::new();
        while self.peek().tok != Tok::Eof {
            patterns.push(self.pattern()?);
        }
        Ok(Spec { patterns })
    }

    fn pattern(&mut self) -> Result<Pattern, SpecError> {
        if !self.is_keyword("pattern") {
            return Err(self.error_here("`pattern`"));
        }
        self.bump();
        let name = match &self.peek().tok {
            Tok::Ident(s) if is_plain_ident(s) => s.clone(),
            _ => return Err(self.error_here("pattern name")),
        };
        self.bump();
        self.expect(Tok::Colon)?;
        let trigger = self.event_constraint()?;
        self.expect(Tok::Arrow)?;
        let consequence = self.node(0)?;
        Ok(Pattern {
            name,
            trigger,
            consequence,
        })
    }

    fn node(&mut self, depth: usize) -> Result<ConsequenceNode, SpecError> {
        if depth >= MAX_DEPTH {
            return Err(self.error_here(&format!("nesting depth below {MAX_DEPTH}")));
        }
        match self.peek().tok {
            Tok::LBrace => {
                self.bump();
                let children = self.node_list(depth, Tok::RBrace)?;
                Ok(ConsequenceNode::Unordered(children))
            }
            Tok::LBrack => {
                self.bump();
                let children = self.node_list(depth, Tok::RBrack)?;
                Ok(ConsequenceNode::Ordered(children))
            }
            _ => {
                if self.is_keyword("not") {
                    self.bump();
                    if matches!(self.peek().tok, Tok::LBrace | Tok::LBrack) {
                        return Err(self.error_here("event constraint after `not`"));
                    }
                    Ok(ConsequenceNode::Forbid(self.event_constraint()?))
                } else {
                    Ok(ConsequenceNode::Require(self.event_constraint()?))
                }
            }
        }
    }

    fn node_list(&mut self, depth: usize, close: Tok) -> Result<Vec<ConsequenceNode>, SpecError> {
        let mut children = vec![self.node(depth + 1)?];
        while self.peek().tok == Tok::Comma {
            self.bump();
            children.push(self.node(depth + 1)?);
        }
        self.expect(close)?;
        Ok(children)
    }

    fn event_constraint(&mut self) -> Result<EventConstraint, SpecError> {
        let kind = match &self.peek().tok {
            Tok::Ident(s) => observable_kind(s),
            _ => None,
        }
        .ok_or_else(|| self.error_here("event kind (COMMAND, PRODUCT, CHANNEL, CHANGE, EVR)"))?;
        self.bump();
        self.expect(Tok::LBrace)?;
        let mut constraints: Vec<FieldConstraint> = Vec::new();
        if self.peek().tok != Tok::RBrace {
            loop {
                let at = self.peek().clone();
                let fc = self.field()?;
                if constraints.iter().any(|c| c.name == fc.name) {
                    return Err(SpecError::DuplicateField {
                        field: fc.name,
                        line: at.line,
                        col: at.col,
                    });
                }
                constraints.push(fc);
                if self.peek().tok == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(EventConstraint { kind, constraints })
    }

    fn field(&mut self) -> Result<FieldConstraint, SpecError> {
        let name = match &self.peek().tok {
            Tok::Ident(s) if is_field_name(s) => s.clone(),
            _ => return Err(self.error_here("field name")),
        };
        self.bump();
        self.expect(Tok::Colon)?;
        let matcher = self.matcher()?;
        Ok(FieldConstraint { name, matcher })
    }

    fn literal(&mut self) -> Option<Value> {
        let v = match &self.peek().tok {
            Tok::Str(s) => Value::Text(s.clone()),
            Tok::Int(i) => Value::Int(*i),
            Tok::Float(f) => Value::Float(*f),
            Tok::Ident(s) if s == "true" => Value::Bool(true),
            Tok::Ident(s) if s == "false" => Value::Bool(false),
            _ => return None,
        };
        self.bump();
        Some(v)
    }

    fn matcher(&mut self) -> Result<Matcher, SpecError> {
        if let Some(v) = self.literal() {
            return Ok(Matcher::Literal(v));
        }
        let op = match self.peek().tok {
            Tok::Lt => Some(CompareOp::Lt),
            Tok::Le => Some(CompareOp::Le),
            Tok::Gt => Some(CompareOp::Gt),
            Tok::Ge => Some(CompareOp::Ge),
            Tok::Ne => Some(CompareOp::Ne),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let v = self.literal().ok_or_else(|| self.error_here("literal"))?;
            return Ok(Matcher::Compare(op, v));
        }
        if self.is_keyword("matches") {
            self.bump();
            let at = self.peek().clone();
            let Tok::Str(re) = at.tok else {
                return Err(self.error_here("regular expression string"));
            };
            if regex::Regex::new(&format!("^(?:{re})$")).is_err() {
                return Err(SpecError::Syntax {
                    line: at.line,
                    col: at.col,
                    expected: "valid regular expression".into(),
                });
            }
            self.bump();
            return Ok(Matcher::Regex(re));
        }
        let ident = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.error_here("matcher")),
        };
        if *self.peek_at(1) == Tok::LParen {
            if !is_plain_ident(&ident) {
                return Err(self.error_here("predicate name"));
            }
            self.bump();
            self.bump();
            let mut args = Vec::new();
            if self.peek().tok != Tok::RParen {
                loop {
                    args.push(self.arg()?);
                    if self.peek().tok == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
            return Ok(Matcher::Predicate { name: ident, args });
        }
        if !is_variable_name(&ident) {
            return Err(self.error_here("lowercase variable name"));
        }
        self.bump();
        Ok(Matcher::Bind(ident))
    }

    fn arg(&mut self) -> Result<Arg, SpecError> {
        if let Some(v) = self.literal() {
            return Ok(Arg::Literal(v));
        }
        match &self.peek().tok {
            Tok::Ident(s) if is_variable_name(s) => {
                let s = s.clone();
                self.bump();
                Ok(Arg::Var(s))
            }
            _ => Err(self.error_here("literal or variable")),
        }
    }
}

/// Parses pattern-language text and checks binding discipline.
pub fn parse_spec(text: &str) -> Result<Spec, SpecError> {
    let toks = tokenize(text)?;
    let spec = Parser { toks, pos: 0 }.spec()?;
    validate_spec(&spec)?;
    Ok(spec)
}
