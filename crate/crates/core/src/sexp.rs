//! A small s-expression reader and printer.
//!
//! Every text format in the toolkit (grammar files, node text, IR dumps,
//! DSL sources) is built on this datum type. `[` and `]` are accepted as
//! synonyms for parentheses; `;` starts a line comment.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Sexp {
    Int(i128),
    Float(f64),
    Symbol(String),
    Str(String),
    Bool(bool),
    List(Vec<Sexp>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl Sexp {
    pub fn sym(s: impl Into<String>) -> Sexp {
        Sexp::Symbol(s.into())
    }

    pub fn list(items: impl IntoIterator<Item = Sexp>) -> Sexp {
        Sexp::List(items.into_iter().collect())
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            Sexp::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i128> {
        match self {
            Sexp::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Numeric value, accepting both integer and float atoms.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Sexp::Int(v) => Some(*v as f64),
            Sexp::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_symbol(&self, name: &str) -> bool {
        self.as_symbol() == Some(name)
    }

    /// Head symbol of a list form, e.g. `fn` for `(fn ...)`.
    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_symbol()
    }
}

/// Formats a float so that it reads back as a float with the same bits
/// (for every non-NaN value).
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "+nan.0".to_string()
    } else if v == f64::INFINITY {
        "+inf.0".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf.0".to_string()
    } else {
        let s = format!("{v:?}");
        if s.contains('.') || s.contains('e') || s.contains("inf") {
            s
        } else {
            format!("{s}.0")
        }
    }
}

fn write_str_lit(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Int(v) => write!(f, "{v}"),
            Sexp::Float(v) => f.write_str(&format_float(*v)),
            Sexp::Symbol(s) => f.write_str(s),
            Sexp::Str(s) => write_str_lit(f, s),
            Sexp::Bool(true) => f.write_str("#t"),
            Sexp::Bool(false) => f.write_str("#f"),
            Sexp::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl Sexp {
    /// Multi-line rendering: lists that fit in `width` columns stay on one
    /// line, longer ones put each element after the first on its own line.
    pub fn pretty(&self, width: usize) -> String {
        let mut out = String::new();
        self.pretty_into(&mut out, 0, width);
        out
    }

    fn pretty_into(&self, out: &mut String, indent: usize, width: usize) {
        let flat = self.to_string();
        let items = match self {
            Sexp::List(items) if indent + flat.len() > width && items.len() > 1 => items,
            _ => {
                out.push_str(&flat);
                return;
            }
        };
        out.push('(');
        items[0].pretty_into(out, indent + 1, width);
        for item in &items[1..] {
            out.push('\n');
            out.push_str(&" ".repeat(indent + 2));
            item.pretty_into(out, indent + 2, width);
        }
        out.push(')');
    }
}

struct Reader<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    _src: &'a str,
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader { chars: src.chars().collect(), pos: 0, line: 1, col: 1, _src: src }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col, msg: msg.into() }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn datum(&mut self) -> Result<Sexp, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(c @ ('(' | '[')) => {
                self.bump();
                let close = if c == '(' { ')' } else { ']' };
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        None => return Err(self.err(format!("unclosed list, expected `{close}`"))),
                        Some(c2) if c2 == close => {
                            self.bump();
                            return Ok(Sexp::List(items));
                        }
                        Some(')' | ']') => return Err(self.err("mismatched closing bracket")),
                        Some(_) => items.push(self.datum()?),
                    }
                }
            }
            Some(')' | ']') => Err(self.err("unexpected closing bracket")),
            Some('"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err("unterminated string")),
                        Some('"') => return Ok(Sexp::Str(s)),
                        Some('\\') => match self.bump() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(c) => s.push(c),
                            None => return Err(self.err("unterminated string escape")),
                        },
                        Some(c) => s.push(c),
                    }
                }
            }
            Some(_) => {
                let mut tok = String::new();
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']' | '"' | ';') {
                        break;
                    }
                    tok.push(c);
                    self.bump();
                }
                Ok(atom(&tok))
            }
        }
    }
}

fn atom(tok: &str) -> Sexp {
    match tok {
        "#t" | "#true" => return Sexp::Bool(true),
        "#f" | "#false" => return Sexp::Bool(false),
        "+nan.0" => return Sexp::Float(f64::NAN),
        "+inf.0" => return Sexp::Float(f64::INFINITY),
        "-inf.0" => return Sexp::Float(f64::NEG_INFINITY),
        _ => {}
    }
    let numeric_start = tok
        .strip_prefix(['-', '+'])
        .unwrap_or(tok)
        .starts_with(|c: char| c.is_ascii_digit());
    if numeric_start {
        if let Ok(v) = tok.parse::<i128>() {
            return Sexp::Int(v);
        }
        if let Ok(v) = tok.parse::<f64>() {
            return Sexp::Float(v);
        }
    }
    Sexp::Symbol(tok.to_string())
}

/// Parses exactly one datum; trailing non-whitespace is an error.
pub fn parse(src: &str) -> Result<Sexp, ParseError> {
    let mut r = Reader::new(src);
    let d = r.datum()?;
    r.skip_ws();
    if r.peek().is_some() {
        return Err(r.err("trailing input after datum"));
    }
    Ok(d)
}

/// Parses every datum in the input.
pub fn parse_all(src: &str) -> Result<Vec<Sexp>, ParseError> {
    let mut r = Reader::new(src);
    let mut out = Vec::new();
    loop {
        r.skip_ws();
        if r.peek().is_none() {
            return Ok(out);
        }
        out.push(r.datum()?);
    }
}
