//! A small post-variable-recovery IR and its constraint generator.
//!
//! ```text
//! extern malloc: (0: int64) -> (0: ptr(a, b))
//! func list_inc(x, y) -> () {
//!   block_1:
//!     1: stack_slot_1 = x;
//!     t1 = load [stack_slot_2 + 4], 4;
//!     store [stack_slot_2], 4, t3;
//!     t3 = t2 + 1, 4;
//!     r = call f(a, 0);
//! }
//! ```
//! Widths are in bytes and default to 4 when omitted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::frontend::SubtypeConstraint;
use crate::lattice::AtomicLattice;
use crate::syntax::{lex, strip_comment, ParseError, Tok, TypeParser};
use crate::types::{FreshNames, Polarity, PolarType};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Var(String),
    Const(u32),
}

impl Operand {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Operand::Var(v) => Some(v),
            Operand::Const(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => f.write_str(v),
            Operand::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IrStatement {
    Assign {
        dst: String,
        src: Operand,
    },
    Load {
        dst: String,
        addr: String,
        offset: u32,
        width: u32,
    },
    Store {
        addr: String,
        offset: u32,
        width: u32,
        src: Operand,
    },
    BinOpInt {
        dst: String,
        a: Operand,
        b: Operand,
        width: u32,
    },
    Call {
        target: String,
        args: Vec<Operand>,
        outs: Vec<String>,
    },
}

impl IrStatement {
    /// Every variable the statement mentions, in order of appearance.
    pub fn vars(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        match self {
            IrStatement::Assign { dst, src } => {
                out.push(dst);
                out.extend(src.as_var());
            }
            IrStatement::Load { dst, addr, .. } => out.extend([dst.as_str(), addr.as_str()]),
            IrStatement::Store { addr, src, .. } => {
                out.push(addr);
                out.extend(src.as_var());
            }
            IrStatement::BinOpInt { dst, a, b, .. } => {
                out.push(dst);
                out.extend(a.as_var());
                out.extend(b.as_var());
            }
            IrStatement::Call { args, outs, .. } => {
                out.extend(args.iter().filter_map(Operand::as_var));
                out.extend(outs.iter().map(String::as_str));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Located {
    pub line: usize,
    pub stmt: IrStatement,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrBlock {
    pub name: String,
    pub stmts: Vec<Located>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IrFunction {
    pub name: String,
    pub params: Vec<String>,
    pub returns: Vec<String>,
    pub blocks: Vec<IrBlock>,
}

impl IrFunction {
    pub fn statements(&self) -> impl Iterator<Item = &Located> {
        self.blocks.iter().flat_map(|b| b.stmts.iter())
    }

    pub fn callees(&self) -> BTreeSet<&str> {
        self.statements()
            .filter_map(|s| match &s.stmt {
                IrStatement::Call { target, .. } => Some(target.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IrProgram {
    pub functions: BTreeMap<String, IrFunction>,
    /// Declared externals with an optional positive signature.
    pub externs: BTreeMap<String, Option<PolarType>>,
    pub call_graph: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("line {line}: call to undeclared function `{name}`")]
    UnresolvedCall { line: usize, name: String },
    #[error("no type available for callee `{0}`")]
    MissingCalleeType(String),
    #[error("extern `{name}`: {msg}")]
    BadExtern { name: String, msg: String },
}

struct Toks {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    last_line: usize,
}

impl Toks {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.0)
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.last_line)
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.toks.get(self.pos).map(|t| (t.1, t.2)).unwrap_or((self.last_line, 1));
        ParseError::new(line, col, msg)
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error(format!("expected {wanted}, found {t}")),
            None => self.error(format!("expected {wanted}, found end of input")),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == s)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{s}`")))
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

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.peek() {
            Some(Tok::Num(_)) => Ok(Operand::Const(self.num()?)),
            Some(Tok::Ident(_)) => Ok(Operand::Var(self.ident()?)),
            _ => Err(self.unexpected("a variable or constant")),
        }
    }

    fn width(&mut self) -> Result<u32, ParseError> {
        let w = self.num()?;
        if matches!(w, 1 | 2 | 4 | 8) {
            Ok(w)
        } else {
            self.pos -= 1;
            Err(self.error(format!("unsupported width {w}")))
        }
    }

    fn opt_width(&mut self) -> Result<u32, ParseError> {
        if self.is_sym(",") && matches!(self.peek_at(1), Some(Tok::Num(_))) {
            self.pos += 1;
            self.width()
        } else {
            Ok(4)
        }
    }

    fn address(&mut self) -> Result<(String, u32), ParseError> {
        self.expect("[")?;
        let p = self.ident()?;
        let k = if self.eat("+") { self.num()? } else { 0 };
        self.expect("]")?;
        Ok((p, k))
    }

    fn names(&mut self, close: &str) -> Result<Vec<String>, ParseError> {
        let mut out = Vec::new();
        if self.eat(close) {
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            if self.eat(close) {
                return Ok(out);
            }
            self.expect(",")?;
        }
    }
}

/// Parses a program. `lattice` decides which names in extern signatures are atoms.
pub fn parse_ir(text: &str, lattice: &AtomicLattice) -> Result<IrProgram, IrError> {
    let mut prog = IrProgram::default();
    let mut toks = Vec::new();
    let mut last_line = 1;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw);
        let lexed = lex(body, line)?;
        last_line = line;
        if matches!(lexed.first(), Some((Tok::Ident(k), _)) if k == "extern") {
            parse_extern(&lexed, line, body.chars().count() + 1, lattice, &mut prog)?;
            continue;
        }
        toks.extend(lexed.into_iter().map(|(t, c)| (t, line, c)));
    }
    let mut t = Toks {
        toks,
        pos: 0,
        last_line,
    };
    while t.peek().is_some() {
        if !t.is_kw("func") {
            return Err(t.unexpected("`func` or `extern`").into());
        }
        let line = t.line();
        t.pos += 1;
        let f = parse_function(&mut t)?;
        if prog.functions.contains_key(&f.name) || prog.externs.contains_key(&f.name) {
            return Err(ParseError::new(line, 1, format!("`{}` is declared twice", f.name)).into());
        }
        prog.functions.insert(f.name.clone(), f);
    }
    for f in prog.functions.values() {
        let mut edges = BTreeSet::new();
        for s in f.statements() {
            if let IrStatement::Call { target, .. } = &s.stmt {
                if !prog.functions.contains_key(target) && !prog.externs.contains_key(target) {
                    return Err(IrError::UnresolvedCall {
                        line: s.line,
                        name: target.clone(),
                    });
                }
                edges.insert(target.clone());
            }
        }
        prog.call_graph.insert(f.name.clone(), edges);
    }
    Ok(prog)
}

fn parse_extern(
    toks: &[(Tok, usize)],
    line: usize,
    end: usize,
    lattice: &AtomicLattice,
    prog: &mut IrProgram,
) -> Result<(), IrError> {
    let col = |i: usize| toks.get(i).map(|t| t.1).unwrap_or(end);
    let name = match toks.get(1) {
        Some((Tok::Ident(n), _)) => n.clone(),
        _ => return Err(ParseError::new(line, col(1), "expected extern name").into()),
    };
    let mut rest = &toks[2..];
    if let Some((Tok::Sym(";"), _)) = rest.last() {
        rest = &rest[..rest.len() - 1];
    }
    let ty = match rest.first() {
        None => None,
        Some((Tok::Sym(":"), _)) => {
            let mut p = TypeParser::new(&rest[1..], line, end, lattice);
            let ty = p.parse_type()?;
            if !p.at_end() {
                return Err(p.error("trailing input after extern type").into());
            }
            ty.well_formed(Polarity::Positive).map_err(|e| IrError::BadExtern {
                name: name.clone(),
                msg: e.to_string(),
            })?;
            Some(ty)
        }
        Some(_) => return Err(ParseError::new(line, col(2), "expected `:` or end of line").into()),
    };
    if prog.externs.insert(name.clone(), ty).is_some() {
        return Err(ParseError::new(line, col(1), format!("`{name}` is declared twice")).into());
    }
    Ok(())
}

fn parse_function(t: &mut Toks) -> Result<IrFunction, ParseError> {
    let name = t.ident()?;
    t.expect("(")?;
    let params = t.names(")")?;
    let returns = if t.eat("->") {
        t.expect("(")?;
        t.names(")")?
    } else {
        Vec::new()
    };
    t.expect("{")?;
    let mut blocks: Vec<IrBlock> = Vec::new();
    loop {
        if t.eat("}") {
            break;
        }
        if t.peek().is_none() {
            return Err(t.unexpected("`}`"));
        }
        if t.eat(";") {
            continue;
        }
        // `block NAME:` or `NAME:` opens a block; `N:` numbers a statement.
        if t.is_kw("block") && matches!(t.peek_at(1), Some(Tok::Ident(_))) && matches!(t.peek_at(2), Some(Tok::Sym(":"))) {
            t.pos += 1;
        }
        if matches!(t.peek(), Some(Tok::Ident(_))) && matches!(t.peek_at(1), Some(Tok::Sym(":"))) {
            let name = t.ident()?;
            t.pos += 1;
            blocks.push(IrBlock {
                name,
                stmts: Vec::new(),
            });
            continue;
        }
        if matches!(t.peek(), Some(Tok::Num(_))) && matches!(t.peek_at(1), Some(Tok::Sym(":"))) {
            t.pos += 2;
        }
        let line = t.line();
        let stmt = parse_statement(t)?;
        if blocks.is_empty() {
            blocks.push(IrBlock {
                name: "entry".into(),
                stmts: Vec::new(),
            });
        }
        blocks.last_mut().expect("block").stmts.push(Located { line, stmt });
    }
    Ok(IrFunction {
        name,
        params,
        returns,
        blocks,
    })
}

fn parse_call(t: &mut Toks, outs: Vec<String>) -> Result<IrStatement, ParseError> {
    t.pos += 1;
    let target = t.ident()?;
    t.expect("(")?;
    let mut args = Vec::new();
    if !t.eat(")") {
        loop {
            args.push(t.operand()?);
            if t.eat(")") {
                break;
            }
            t.expect(",")?;
        }
    }
    Ok(IrStatement::Call { target, args, outs })
}

fn parse_statement(t: &mut Toks) -> Result<IrStatement, ParseError> {
    if t.is_kw("store") && t.peek_at(1) == Some(&Tok::Sym("[")) {
        t.pos += 1;
        let (addr, offset) = t.address()?;
        t.expect(",")?;
        let (width, src) = match (t.peek(), t.peek_at(1)) {
            (Some(Tok::Num(_)), Some(Tok::Sym(","))) => {
                let w = t.width()?;
                t.pos += 1;
                (w, t.operand()?)
            }
            _ => (4, t.operand()?),
        };
        return Ok(IrStatement::Store {
            addr,
            offset,
            width,
            src,
        });
    }
    if t.is_kw("call") && matches!(t.peek_at(1), Some(Tok::Ident(_))) {
        return parse_call(t, Vec::new());
    }
    let mut dsts = vec![t.ident()?];
    while t.eat(",") {
        dsts.push(t.ident()?);
    }
    t.expect("=")?;
    if t.is_kw("call") && matches!(t.peek_at(1), Some(Tok::Ident(_))) {
        return parse_call(t, dsts);
    }
    if dsts.len() > 1 {
        return Err(t.unexpected("`call`"));
    }
    let dst = dsts.pop().expect("one destination");
    if t.is_kw("load") && t.peek_at(1) == Some(&Tok::Sym("[")) {
        t.pos += 1;
        let (addr, offset) = t.address()?;
        let width = t.opt_width()?;
        return Ok(IrStatement::Load {
            dst,
            addr,
            offset,
            width,
        });
    }
    let a = t.operand()?;
    if t.eat("+") {
        let b = t.operand()?;
        let width = t.opt_width()?;
        return Ok(IrStatement::BinOpInt { dst, a, b, width });
    }
    Ok(IrStatement::Assign { dst, src: a })
}

/// Supplies positive types for called functions.
pub trait CalleeTypes {
    /// Polymorphic callees should come back instantiated with fresh variables.
    fn callee_type(&mut self, name: &str, fresh: &mut FreshNames) -> Option<PolarType>;
}

impl CalleeTypes for BTreeMap<String, PolarType> {
    fn callee_type(&mut self, name: &str, _fresh: &mut FreshNames) -> Option<PolarType> {
        self.get(name).cloned()
    }
}

/// How call arguments and results are routed to the callee type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SlotPolicy {
    /// Fresh slot variables at every call site.
    #[default]
    PerCallsite,
    /// One set of slot variables per callee, shared by all call sites.
    SharedPerCallee,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GenOptions {
    pub slots: SlotPolicy,
    /// Prefix every local variable with `<function>$`.
    pub qualify: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallSite {
    pub callee: String,
    pub line: usize,
    pub ins: Vec<String>,
    pub outs: Vec<String>,
}

impl CallSite {
    /// The type the call site expects of its callee: inputs flow in, outputs flow out.
    pub fn expected_type(&self) -> PolarType {
        PolarType::function(
            self.ins.iter().enumerate().map(|(i, v)| (i as u32, PolarType::var(v))),
            self.outs.iter().enumerate().map(|(i, v)| (i as u32, PolarType::var(v))),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Generated {
    pub constraints: Vec<SubtypeConstraint>,
    pub callsites: Vec<CallSite>,
}

pub fn local_name(f: &IrFunction, v: &str, qualify: bool) -> String {
    if qualify {
        format!("{}${}", f.name, v)
    } else {
        v.to_string()
    }
}

pub fn int_atom(width_bytes: u32) -> PolarType {
    PolarType::atom(format!("int{}", width_bytes * 8))
}

/// Constraints for `f`, with the call sites used to reach callee types.
pub fn generate(
    f: &IrFunction,
    callees: &mut dyn CalleeTypes,
    fresh: &mut FreshNames,
    opts: GenOptions,
) -> Result<Generated, IrError> {
    let var = |v: &str| PolarType::var(local_name(f, v, opts.qualify));
    let mut out = Generated::default();
    let push = |cs: &mut Vec<SubtypeConstraint>, l: PolarType, r: PolarType| {
        cs.push(SubtypeConstraint::structural(l, r));
    };
    for s in f.statements() {
        let cs = &mut out.constraints;
        match &s.stmt {
            IrStatement::Assign { dst, src } => {
                if let Some(src) = src.as_var() {
                    push(cs, var(src), var(dst));
                }
            }
            IrStatement::Load {
                dst,
                addr,
                offset,
                width,
            } => {
                let (a, b) = (fresh.fresh_var(), fresh.fresh_var());
                let rec = PolarType::field(*offset, width * 8, b.clone());
                push(cs, var(addr), PolarType::ptr(a.clone(), rec.clone()));
                push(cs, a, rec);
                push(cs, b, var(dst));
            }
            IrStatement::Store {
                addr,
                offset,
                width,
                src,
            } => {
                let (e, fv) = (fresh.fresh_var(), fresh.fresh_var());
                let rec = PolarType::field(*offset, width * 8, e.clone());
                push(cs, var(addr), PolarType::ptr(rec.clone(), fv.clone()));
                push(cs, rec, fv);
                if let Some(src) = src.as_var() {
                    push(cs, var(src), e);
                }
            }
            IrStatement::BinOpInt { dst, a, b, width } => {
                for x in [a, b].into_iter().filter_map(Operand::as_var) {
                    push(cs, var(x), int_atom(*width));
                }
                push(cs, int_atom(*width), var(dst));
            }
            IrStatement::Call { target, args, outs } => {
                let callee = callees
                    .callee_type(target, fresh)
                    .ok_or_else(|| IrError::MissingCalleeType(target.clone()))?;
                let mut slot = |kind: &str, i: usize| match opts.slots {
                    SlotPolicy::PerCallsite => fresh.fresh(),
                    SlotPolicy::SharedPerCallee => format!("{target}${kind}{i}"),
                };
                let site = CallSite {
                    callee: target.clone(),
                    line: s.line,
                    ins: (0..args.len()).map(|i| slot("in", i)).collect(),
                    outs: (0..outs.len()).map(|i| slot("out", i)).collect(),
                };
                push(cs, callee, site.expected_type());
                for (arg, slot) in args.iter().zip(&site.ins) {
                    if let Some(arg) = arg.as_var() {
                        push(cs, var(arg), PolarType::var(slot));
                    }
                }
                for (o, slot) in outs.iter().zip(&site.outs) {
                    push(cs, PolarType::var(slot), var(o));
                }
                out.callsites.push(site);
            }
        }
    }
    Ok(out)
}

pub fn gen_constraints(
    f: &IrFunction,
    callees: &mut dyn CalleeTypes,
    fresh: &mut FreshNames,
) -> Result<Vec<SubtypeConstraint>, IrError> {
    Ok(generate(f, callees, fresh, GenOptions::default())?.constraints)
}
