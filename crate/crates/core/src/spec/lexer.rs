use super::SpecError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    Colon,
    Comma,
    LBrace,
    RBrace,
    LBrack,
    RBrack,
    LParen,
    RParen,
    Arrow,
    Lt,
    Le,
    Gt,
    Ge,
    Ne,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(_) => "string".into(),
            Tok::Int(_) | Tok::Float(_) => "number".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBrack => "`[`".into(),
            Tok::RBrack => "`]`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Arrow => "`=>`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, SpecError> {
    let mut cur = Cursor {
        chars: src.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        while let Some(c) = cur.peek() {
            if c.is_whitespace() {
                cur.bump();
            } else if c == '#' {
                while cur.peek().is_some_and(|c| c != '\n') {
                    cur.bump();
                }
            } else {
                break;
            }
        }
        let (line, col) = (cur.line, cur.col);
        let err = |expected: &str| SpecError::Syntax {
            line,
            col,
            expected: expected.to_string(),
        };
        let Some(c) = cur.bump() else {
            out.push(Token {
                tok: Tok::Eof,
                line,
                col,
            });
            return Ok(out);
        };
        let tok = match c {
            ':' => Tok::Colon,
            ',' => Tok::Comma,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '[' => Tok::LBrack,
            ']' => Tok::RBrack,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '=' if cur.eat('>') => Tok::Arrow,
            '=' => return Err(err("`=>`")),
            '<' if cur.eat('=') => Tok::Le,
            '<' => Tok::Lt,
            '>' if cur.eat('=') => Tok::Ge,
            '>' => Tok::Gt,
            '!' if cur.eat('=') => Tok::Ne,
            '!' => return Err(err("`!=`")),
            '"' => {
                let mut s = String::new();
                loop {
                    match cur.bump() {
                        None => return Err(err("closing `\"`")),
                        Some('"') => break,
                        Some('\\') => match cur.bump() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some('r') => s.push('\r'),
                            _ => return Err(err("escape sequence (\\\" \\\\ \\n \\t \\r)")),
                        },
                        Some(c) => s.push(c),
                    }
                }
                Tok::Str(s)
            }
            c if c.is_ascii_digit() || (c == '-' && cur.peek().is_some_and(|d| d.is_ascii_digit())) => {
                let mut text = String::from(c);
                let mut is_float = false;
                while let Some(d) = cur.peek() {
                    if d.is_ascii_digit() {
                        text.push(d);
                        cur.bump();
                    } else if d == '.' && !is_float && !text.contains(['e', 'E']) {
                        is_float = true;
                        text.push(d);
                        cur.bump();
                        if !cur.peek().is_some_and(|d| d.is_ascii_digit()) {
                            return Err(err("digit after decimal point"));
                        }
                    } else if (d == 'e' || d == 'E') && !text.contains(['e', 'E']) {
                        is_float = true;
                        text.push(d);
                        cur.bump();
                        if let Some(sign @ ('+' | '-')) = cur.peek() {
                            text.push(sign);
                            cur.bump();
                        }
                        if !cur.peek().is_some_and(|d| d.is_ascii_digit()) {
                            return Err(err("exponent digits"));
                        }
                    } else {
                        break;
                    }
                }
                if is_float {
                    match text.parse::<f64>() {
                        Ok(f) if f.is_finite() => Tok::Float(f),
                        _ => return Err(err("finite number")),
                    }
                } else {
                    match text.parse::<i64>() {
                        Ok(i) => Tok::Int(i),
                        Err(_) => return Err(err("integer in 64-bit range")),
                    }
                }
            }
            c if is_ident_start(c) => {
                let mut s = String::from(c);
                while let Some(d) = cur.peek().filter(|&d| is_ident_continue(d)) {
                    s.push(d);
                    cur.bump();
                }
                Tok::Ident(s)
            }
            _ => return Err(err("token")),
        };
        out.push(Token { tok, line, col });
    }
}
