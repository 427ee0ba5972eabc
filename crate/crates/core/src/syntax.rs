//! Textual syntax for polar types.
//!
//! ```text
//! ptr(S, L)            pointer with store type S and load type L
//! {0:32: T, 4:32: U}   record, `offset:bits: type`
//! (0: T) -> (0: U)     function with indexed parameters and returns
//! T | U, T & U         union, intersection (right-nested)
//! mu a. T              recursive type
//! int32, top, bot, x   atoms (when the lattice knows the name), top, bottom, variables
//! ```

use std::fmt;

use thiserror::Error;

use crate::lattice::AtomicLattice;
use crate::types::{FieldKey, PolarType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Num(u32),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(n) => write!(f, "`{n}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
        }
    }
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '#'
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '#' | '$' | '\'')
}

const SYMBOLS: &[&str] = &[
    "<=", ">=", "->", "(", ")", "{", "}", "[", "]", ",", ":", ";", ".", "|", "&", "+", "=", "@",
];

/// Drops a trailing comment. A comment starts at a `#` followed by whitespace,
/// another `#`, or the end of the line, so fresh names like `#s_3` survive.
pub(crate) fn strip_comment(line: &str) -> &str {
    let b = line.as_bytes();
    for (i, &c) in b.iter().enumerate() {
        if c == b'#' {
            match b.get(i + 1) {
                None => return &line[..i],
                Some(n) if n.is_ascii_whitespace() || *n == b'#' => return &line[..i],
                _ => {}
            }
        }
    }
    line
}

/// Splits one line into tokens with 1-based columns (in chars).
pub(crate) fn lex(text: &str, line: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let n = s
                .parse()
                .map_err(|_| ParseError::new(line, col, "number out of range"))?;
            out.push((Tok::Num(n), col));
        } else {
            let sym = match c {
                '≤' => Some("<="),
                '≥' => Some(">="),
                '⊔' => Some("|"),
                '⊓' => Some("&"),
                '→' => Some("->"),
                _ => None,
            };
            if let Some(s) = sym {
                out.push((Tok::Sym(s), col));
                i += 1;
                continue;
            }
            if c == 'μ' {
                out.push((Tok::Ident("mu".into()), col));
                i += 1;
                continue;
            }
            if c == 'σ' {
                out.push((Tok::Ident("σ".into()), col));
                i += 1;
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    out.push((Tok::Sym(s), col));
                    i += s.chars().count();
                }
                None => return Err(ParseError::new(line, col, format!("unexpected character `{c}`"))),
            }
        }
    }
    Ok(out)
}

pub(crate) struct TypeParser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end_col: usize,
    lattice: &'a AtomicLattice,
}

impl<'a> TypeParser<'a> {
    pub(crate) fn new(toks: &'a [(Tok, usize)], line: usize, end_col: usize, lattice: &'a AtomicLattice) -> Self {
        TypeParser {
            toks,
            pos: 0,
            line,
            end_col,
            lattice,
        }
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|(_, c)| *c).unwrap_or(self.end_col)
    }

    pub(crate) fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.col(), msg)
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error(format!("expected {wanted}, found {t}")),
            None => self.error(format!("expected {wanted}, found end of input")),
        }
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{sym}`")))
        }
    }

    fn num(&mut self) -> Result<u32, ParseError> {
        match self.peek() {
            Some(Tok::Num(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    /// Consumes `<=` (false) or `>=` (true).
    pub(crate) fn relation(&mut self) -> Result<bool, ParseError> {
        if self.eat("<=") {
            Ok(false)
        } else if self.eat(">=") {
            Ok(true)
        } else {
            Err(self.unexpected("`<=` or `>=`"))
        }
    }

    pub(crate) fn parse_type(&mut self) -> Result<PolarType, ParseError> {
        let lhs = self.parse_inter()?;
        if self.eat("|") {
            Ok(PolarType::union(lhs, self.parse_type()?))
        } else {
            Ok(lhs)
        }
    }

    fn parse_inter(&mut self) -> Result<PolarType, ParseError> {
        let lhs = self.parse_prefix()?;
        if self.eat("&") {
            Ok(PolarType::inter(lhs, self.parse_inter()?))
        } else {
            Ok(lhs)
        }
    }

    fn parse_prefix(&mut self) -> Result<PolarType, ParseError> {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "mu") {
            self.pos += 1;
            let binder = self.ident()?;
            self.expect(".")?;
            let body = self.parse_type()?;
            return Ok(PolarType::mu(binder, body));
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> Result<PolarType, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "ptr" if matches!(self.peek(), Some(Tok::Sym("("))) => {
                        self.expect("(")?;
                        let store = self.parse_type()?;
                        self.expect(",")?;
                        let load = self.parse_type()?;
                        self.expect(")")?;
                        Ok(PolarType::ptr(store, load))
                    }
                    "top" => Ok(PolarType::Top),
                    "bot" => Ok(PolarType::Bottom),
                    _ if self.lattice.contains(&name) => Ok(PolarType::atom(name)),
                    _ => Ok(PolarType::Var(name)),
                }
            }
            Some(Tok::Sym("{")) => {
                self.pos += 1;
                let mut fields = std::collections::BTreeMap::new();
                if !self.eat("}") {
                    loop {
                        let off = self.num()?;
                        self.expect(":")?;
                        let size_col = self.col();
                        let size = self.num()?;
                        if size == 0 {
                            return Err(ParseError::new(self.line, size_col, "field size must be positive"));
                        }
                        self.expect(":")?;
                        let t = self.parse_type()?;
                        fields.insert(FieldKey::new(off, size), t);
                        if self.eat("}") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Ok(PolarType::Record(fields))
            }
            Some(Tok::Sym("(")) => {
                let is_fn = matches!(self.peek_at(1), Some(Tok::Sym(")")))
                    || (matches!(self.peek_at(1), Some(Tok::Num(_)))
                        && matches!(self.peek_at(2), Some(Tok::Sym(":"))));
                if is_fn {
                    let params = self.indexed_list()?;
                    self.expect("->")?;
                    let returns = self.indexed_list()?;
                    Ok(PolarType::Function { params, returns })
                } else {
                    self.pos += 1;
                    let t = self.parse_type()?;
                    self.expect(")")?;
                    Ok(t)
                }
            }
            _ => Err(self.unexpected("a type")),
        }
    }

    fn indexed_list(&mut self) -> Result<std::collections::BTreeMap<u32, PolarType>, ParseError> {
        self.expect("(")?;
        let mut out = std::collections::BTreeMap::new();
        if self.eat(")") {
            return Ok(out);
        }
        loop {
            let i = self.num()?;
            self.expect(":")?;
            out.insert(i, self.parse_type()?);
            if self.eat(")") {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }
}

/// Parses a single type. Names known to `lattice` become atoms.
pub fn parse_type(text: &str, lattice: &AtomicLattice) -> Result<PolarType, ParseError> {
    let toks = lex(text, 1)?;
    let mut p = TypeParser::new(&toks, 1, text.chars().count() + 1, lattice);
    let t = p.parse_type()?;
    if !p.at_end() {
        return Err(p.error("trailing input after type"));
    }
    Ok(t)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ctx {
    Top,
    UnionLeft,
    InterLeft,
    InterRight,
}

fn write_type(t: &PolarType, ctx: Ctx, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let paren = match t {
        PolarType::Union(..) => matches!(ctx, Ctx::UnionLeft | Ctx::InterLeft | Ctx::InterRight),
        PolarType::Inter(..) => ctx == Ctx::InterLeft,
        PolarType::Mu(..) => ctx != Ctx::Top,
        _ => false,
    };
    if paren {
        f.write_str("(")?;
    }
    match t {
        PolarType::Record(fields) => {
            f.write_str("{")?;
            for (i, (k, v)) in fields.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}:{}: ", k.offset, k.size)?;
                write_type(v, Ctx::Top, f)?;
            }
            f.write_str("}")?;
        }
        PolarType::Function { params, returns } => {
            for (j, map) in [params, returns].into_iter().enumerate() {
                if j == 1 {
                    f.write_str(" -> ")?;
                }
                f.write_str("(")?;
                for (i, (k, v)) in map.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: ")?;
                    write_type(v, Ctx::Top, f)?;
                }
                f.write_str(")")?;
            }
        }
        PolarType::Ptr { store, load } => {
            f.write_str("ptr(")?;
            write_type(store, Ctx::Top, f)?;
            f.write_str(", ")?;
            write_type(load, Ctx::Top, f)?;
            f.write_str(")")?;
        }
        PolarType::Var(v) => f.write_str(v)?,
        PolarType::Top => f.write_str("top")?,
        PolarType::Bottom => f.write_str("bot")?,
        PolarType::Atom(a) => f.write_str(a.name())?,
        PolarType::Union(a, b) => {
            write_type(a, Ctx::UnionLeft, f)?;
            f.write_str(" | ")?;
            write_type(b, Ctx::Top, f)?;
        }
        PolarType::Inter(a, b) => {
            write_type(a, Ctx::InterLeft, f)?;
            f.write_str(" & ")?;
            write_type(b, Ctx::InterRight, f)?;
        }
        PolarType::Mu(b, body) => {
            write!(f, "mu {b}. ")?;
            write_type(body, Ctx::Top, f)?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for PolarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_type(self, Ctx::Top, f)
    }
}
