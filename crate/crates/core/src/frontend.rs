//! Subtyping constraints in native form and in derived-type-variable form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::lattice::AtomicLattice;
use crate::syntax::{lex, strip_comment, ParseError, Tok, TypeParser};
use crate::types::{FreshNames, Polarity, PolarType, TypeError};

/// `lhs ≤ rhs` with a positive lhs and a negative rhs.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubtypeConstraint {
    pub lhs: PolarType,
    pub rhs: PolarType,
}

impl SubtypeConstraint {
    pub fn new(lhs: PolarType, rhs: PolarType) -> Result<Self, TypeError> {
        lhs.well_formed(Polarity::Positive)?;
        rhs.well_formed(Polarity::Negative)?;
        Ok(SubtypeConstraint { lhs, rhs })
    }

    /// Builds a constraint between constructor-and-variable terms, which are
    /// well formed at either polarity.
    pub(crate) fn structural(lhs: PolarType, rhs: PolarType) -> Self {
        debug_assert!(lhs.check_polarity(Polarity::Positive), "{lhs}");
        debug_assert!(rhs.check_polarity(Polarity::Negative), "{rhs}");
        SubtypeConstraint { lhs, rhs }
    }
}

impl fmt::Display for SubtypeConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <= {}", self.lhs, self.rhs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Capability {
    Load,
    Store,
    In(u32),
    Out(u32),
    /// Offset in bytes, size in bits.
    Field { offset: u32, size: u32 },
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capability::Load => f.write_str("load"),
            Capability::Store => f.write_str("store"),
            Capability::In(l) => write!(f, "in_{l}"),
            Capability::Out(l) => write!(f, "out_{l}"),
            Capability::Field { offset, size } => write!(f, "s{}@{}", size / 8, offset),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DerivedTypeVariable {
    pub base: String,
    pub path: Vec<Capability>,
}

impl DerivedTypeVariable {
    pub fn new(base: impl Into<String>, path: impl IntoIterator<Item = Capability>) -> Self {
        DerivedTypeVariable {
            base: base.into(),
            path: path.into_iter().collect(),
        }
    }
}

impl fmt::Display for DerivedTypeVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base)?;
        for c in &self.path {
            write!(f, ".{c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintForm {
    BinSub,
    Retypd,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("line {line}: {source}")]
    Polarity {
        line: usize,
        #[source]
        source: TypeError,
    },
}

/// Translates derived type variables into constructor types. Each distinct
/// expansion is made once and shared afterwards.
pub struct DtvTranslator<'a> {
    fresh: &'a mut FreshNames,
    memo: BTreeMap<(String, Vec<Capability>, Option<Polarity>), PolarType>,
    equate: bool,
}

impl<'a> DtvTranslator<'a> {
    /// Bounds the base on one side only: above at negative occurrences,
    /// below at positive ones.
    pub fn new(fresh: &'a mut FreshNames) -> Self {
        DtvTranslator {
            fresh,
            memo: BTreeMap::new(),
            equate: false,
        }
    }

    /// Bounds the base on both sides, so the base stands for the constructed
    /// type wherever it occurs. Expansions are shared across polarities.
    pub fn equating(fresh: &'a mut FreshNames) -> Self {
        DtvTranslator {
            equate: true,
            ..DtvTranslator::new(fresh)
        }
    }

    /// Returns the type standing for `d` at polarity `p` and the constraints
    /// tying it to the base variable. Repeated requests return no constraints.
    pub fn translate(&mut self, d: &DerivedTypeVariable, p: Polarity) -> (PolarType, Vec<SubtypeConstraint>) {
        if d.path.is_empty() {
            return (PolarType::var(&d.base), Vec::new());
        }
        let key = (d.base.clone(), d.path.clone(), (!self.equate).then_some(p));
        if let Some(t) = self.memo.get(&key) {
            return (t.clone(), Vec::new());
        }
        let result = self.fresh.fresh_var();
        let mut cur = result.clone();
        let mut sides = Vec::new();
        for cap in d.path.iter().rev() {
            cur = match *cap {
                Capability::Load => {
                    let a = self.fresh.fresh_var();
                    sides.push(SubtypeConstraint::structural(a.clone(), cur.clone()));
                    PolarType::ptr(a, cur)
                }
                Capability::Store => {
                    let b = self.fresh.fresh_var();
                    sides.push(SubtypeConstraint::structural(cur.clone(), b.clone()));
                    PolarType::ptr(cur, b)
                }
                Capability::Field { offset, size } => PolarType::field(offset, size, cur),
                Capability::In(l) => PolarType::function([(l, cur)], []),
                Capability::Out(l) => PolarType::function([], [(l, cur)]),
            };
        }
        let base = PolarType::var(&d.base);
        let mut out = Vec::new();
        if self.equate || p == Polarity::Negative {
            out.push(SubtypeConstraint::structural(base.clone(), cur.clone()));
        }
        if self.equate || p == Polarity::Positive {
            out.push(SubtypeConstraint::structural(cur, base));
        }
        sides.reverse();
        out.extend(sides);
        self.memo.insert(key, result.clone());
        (result, out)
    }

    fn side(
        &mut self,
        d: &DerivedTypeVariable,
        p: Polarity,
        lattice: Option<&AtomicLattice>,
    ) -> (PolarType, Vec<SubtypeConstraint>) {
        match lattice {
            Some(l) if d.path.is_empty() && l.contains(&d.base) => (PolarType::atom(&d.base), Vec::new()),
            _ => self.translate(d, p),
        }
    }

    /// Translates `lhs ≤ rhs` pairs, emitting each constraint once.
    pub fn translate_set(
        &mut self,
        cs: &[(DerivedTypeVariable, DerivedTypeVariable)],
    ) -> Vec<SubtypeConstraint> {
        self.translate_pairs(cs, None)
    }

    /// Bare names known to `lattice` stand for atoms.
    fn translate_pairs(
        &mut self,
        cs: &[(DerivedTypeVariable, DerivedTypeVariable)],
        lattice: Option<&AtomicLattice>,
    ) -> Vec<SubtypeConstraint> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (l, r) in cs {
            let (lt, mut lcs) = self.side(l, Polarity::Positive, lattice);
            let (rt, rcs) = self.side(r, Polarity::Negative, lattice);
            lcs.extend(rcs);
            lcs.push(SubtypeConstraint::structural(lt, rt));
            for c in lcs {
                if seen.insert(c.clone()) {
                    out.push(c);
                }
            }
        }
        out
    }
}

pub fn translate_dtv(
    d: &DerivedTypeVariable,
    p: Polarity,
    fresh: &mut FreshNames,
) -> (PolarType, Vec<SubtypeConstraint>) {
    DtvTranslator::new(fresh).translate(d, p)
}

pub fn translate_retypd_set(
    cs: &[(DerivedTypeVariable, DerivedTypeVariable)],
    fresh: &mut FreshNames,
) -> Vec<SubtypeConstraint> {
    DtvTranslator::equating(fresh).translate_set(cs)
}

/// Parses one constraint per line. Derived-type-variable lines are translated
/// with fresh names from `fresh`.
pub fn parse_constraints(
    text: &str,
    form: ConstraintForm,
    lattice: &AtomicLattice,
    fresh: &mut FreshNames,
) -> Result<Vec<SubtypeConstraint>, FrontendError> {
    let mut out = Vec::new();
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw);
        if body.trim().is_empty() {
            continue;
        }
        let toks = lex(body, line)?;
        let end = body.chars().count() + 1;
        match form {
            ConstraintForm::BinSub => {
                let mut p = TypeParser::new(&toks, line, end, lattice);
                let lhs = p.parse_type()?;
                let flip = p.relation()?;
                let rhs = p.parse_type()?;
                if !p.at_end() {
                    return Err(p.error("trailing input after constraint").into());
                }
                let (lhs, rhs) = if flip { (rhs, lhs) } else { (lhs, rhs) };
                let c = SubtypeConstraint::new(lhs, rhs)
                    .map_err(|source| FrontendError::Polarity { line, source })?;
                out.push(c);
            }
            ConstraintForm::Retypd => {
                let mut p = DtvParser { toks: &toks, pos: 0, line, end };
                let lhs = p.dtv()?;
                let flip = match p.next() {
                    Some(Tok::Sym("<=")) => false,
                    Some(Tok::Sym(">=")) => true,
                    _ => return Err(p.error_prev("expected `<=` or `>=`")),
                };
                let rhs = p.dtv()?;
                if p.pos < toks.len() {
                    return Err(p.error("trailing input after constraint"));
                }
                pairs.push(if flip { (rhs, lhs) } else { (lhs, rhs) });
            }
        }
    }
    if form == ConstraintForm::Retypd {
        out = DtvTranslator::equating(fresh).translate_pairs(&pairs, Some(lattice));
    }
    Ok(out)
}

struct DtvParser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
    end: usize,
}

impl DtvParser<'_> {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.end)
    }

    fn error(&self, msg: &str) -> FrontendError {
        ParseError::new(self.line, self.col(), msg).into()
    }

    fn error_prev(&self, msg: &str) -> FrontendError {
        let col = self.toks.get(self.pos.saturating_sub(1)).map(|t| t.1).unwrap_or(self.end);
        ParseError::new(self.line, col, msg).into()
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.0);
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn num(&mut self) -> Result<u32, FrontendError> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(*n),
            _ => Err(self.error_prev("expected a number")),
        }
    }

    fn dtv(&mut self) -> Result<DerivedTypeVariable, FrontendError> {
        let base = match self.next() {
            Some(Tok::Ident(s)) => s.clone(),
            _ => return Err(self.error_prev("expected a type variable")),
        };
        let mut path = Vec::new();
        while matches!(self.peek(), Some(Tok::Sym("."))) {
            self.pos += 1;
            let col = self.col();
            let name = match self.next() {
                Some(Tok::Ident(s)) => s.clone(),
                _ => return Err(self.error_prev("expected a capability")),
            };
            let bad = || FrontendError::from(ParseError::new(self.line, col, format!("unknown capability `{name}`")));
            let cap = if name == "load" {
                Capability::Load
            } else if name == "store" {
                Capability::Store
            } else if let Some(l) = name.strip_prefix("in_") {
                Capability::In(l.parse().map_err(|_| bad())?)
            } else if let Some(l) = name.strip_prefix("out_") {
                Capability::Out(l.parse().map_err(|_| bad())?)
            } else if name == "σ" || name.starts_with('s') {
                let bytes = if name == "σ" {
                    self.num()?
                } else {
                    name[1..].parse().map_err(|_| bad())?
                };
                if bytes == 0 {
                    return Err(ParseError::new(self.line, col, "field size must be positive").into());
                }
                if !matches!(self.next(), Some(Tok::Sym("@"))) {
                    return Err(self.error_prev("expected `@`"));
                }
                let offset = self.num()?;
                Capability::Field {
                    offset,
                    size: bytes * 8,
                }
            } else {
                return Err(bad());
            };
            path.push(cap);
        }
        Ok(DerivedTypeVariable { base, path })
    }
}
