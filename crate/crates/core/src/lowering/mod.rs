//! Lowering type automata to C-like types.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::automata::{EdgeLabel, NodeLabel, StateId, TypeAutomaton};
use crate::lattice::AtomicLattice;
use crate::types::{FieldKey, Polarity};

mod loops;
pub mod render;
pub mod shape;

pub use loops::{break_loops, LoopFree};
pub use shape::{merge, merge_functions, merge_pointers, merge_records, Constructor, MergeMode, Shape};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CField {
    /// Byte offset.
    pub offset: u32,
    /// Access size in bits.
    pub size: u32,
    #[serde(rename = "type")]
    pub ty: CType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CType {
    Struct {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        fields: Vec<CField>,
    },
    Func {
        params: Vec<CType>,
        returns: Vec<CType>,
    },
    Ptr {
        pointee: Box<CType>,
    },
    Prim {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<u32>,
    },
    Named {
        name: String,
    },
    Unknown {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        width: Option<u32>,
    },
}

impl CType {
    pub fn ptr(pointee: CType) -> Self {
        CType::Ptr { pointee: Box::new(pointee) }
    }

    pub fn prim(name: impl Into<String>, width: Option<u32>) -> Self {
        CType::Prim { name: name.into(), width }
    }

    pub fn named(name: impl Into<String>) -> Self {
        CType::Named { name: name.into() }
    }

    pub fn unknown() -> Self {
        CType::Unknown { width: None }
    }

    fn children(&self) -> Vec<&CType> {
        match self {
            CType::Struct { fields, .. } => fields.iter().map(|f| &f.ty).collect(),
            CType::Func { params, returns } => params.iter().chain(returns).collect(),
            CType::Ptr { pointee } => vec![pointee],
            _ => Vec::new(),
        }
    }

    /// Names referenced anywhere inside.
    pub fn references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            if let CType::Named { name } = t {
                out.insert(name.clone());
            }
            stack.extend(t.children());
        }
        out
    }

    fn map_children(&self, f: &mut impl FnMut(&CType) -> CType) -> CType {
        match self {
            CType::Struct { name, fields } => CType::Struct {
                name: name.clone(),
                fields: fields.iter().map(|x| CField { ty: f(&x.ty), ..x.clone() }).collect(),
            },
            CType::Func { params, returns } => CType::Func {
                params: params.iter().map(&mut *f).collect(),
                returns: returns.iter().map(f).collect(),
            },
            CType::Ptr { pointee } => CType::ptr(f(pointee)),
            t => t.clone(),
        }
    }
}

/// Named declarations produced while lowering. Recursion goes only through
/// `Named` references.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeEnvironment {
    pub decls: BTreeMap<String, CType>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(skip)]
    next: usize,
}

impl TypeEnvironment {
    pub fn new() -> Self {
        Self::default()
    }

    fn fresh_name(&mut self) -> String {
        loop {
            let n = format!("t{}", self.next);
            self.next += 1;
            if !self.decls.contains_key(&n) {
                return n;
            }
        }
    }

    /// Names referenced from `extra` or any declaration but never declared.
    pub fn dangling<'a>(&'a self, extra: impl IntoIterator<Item = &'a CType>) -> BTreeSet<String> {
        self.decls
            .values()
            .chain(extra)
            .flat_map(CType::references)
            .filter(|n| !self.decls.contains_key(n))
            .collect()
    }

    pub fn is_struct(&self, name: &str) -> bool {
        matches!(self.decls.get(name), Some(CType::Struct { .. }))
    }

    /// Replaces anonymous structs equal to a declared struct by a reference.
    fn intern(&self, t: &CType, skip: Option<&str>) -> CType {
        if let CType::Struct { name: None, fields } = t {
            for (n, d) in &self.decls {
                if Some(n.as_str()) == skip {
                    continue;
                }
                if let CType::Struct { fields: df, .. } = d {
                    if df == fields {
                        return CType::named(n.clone());
                    }
                }
            }
        }
        t.map_children(&mut |c| self.intern(c, skip))
    }
}

/// Highest-priority constructor the label signals: record, then pointer,
/// then function, otherwise atom.
pub fn select_constructor(l: &NodeLabel) -> Constructor {
    if l.has_record() {
        Constructor::Record
    } else if l.ptr {
        Constructor::Pointer
    } else if l.has_function() {
        Constructor::Function
    } else {
        Constructor::Atom
    }
}

struct Shaper<'a> {
    a: &'a TypeAutomaton,
    placeholders: &'a BTreeMap<StateId, String>,
    memo: HashMap<StateId, Shape>,
}

impl Shaper<'_> {
    fn fold(&mut self, s: StateId, l: EdgeLabel) -> Shape {
        let targets: Vec<StateId> = self.a.edges(s).iter().filter(|(x, _)| *x == l).map(|&(_, t)| t).collect();
        let mut acc: Option<Shape> = None;
        for t in targets {
            let mode = match self.a.label(t).polarity {
                Polarity::Negative => MergeMode::Meet,
                Polarity::Positive => MergeMode::Join,
            };
            let sh = self.shape(t);
            acc = Some(match acc {
                Some(prev) => merge(&prev, &sh, mode, self.a.lattice()),
                None => sh,
            });
        }
        acc.unwrap_or(Shape::Unknown)
    }

    fn shape(&mut self, s: StateId) -> Shape {
        if let Some(n) = self.placeholders.get(&s) {
            return Shape::Named(n.clone());
        }
        if let Some(sh) = self.memo.get(&s) {
            return sh.clone();
        }
        let label = self.a.label(s).clone();
        let sh = match select_constructor(&label) {
            Constructor::Record => {
                Shape::Record(label.rec_fields.iter().map(|k| (*k, self.fold(s, EdgeLabel::Rec(*k)))).collect())
            }
            Constructor::Pointer => Shape::ptr(self.fold(s, EdgeLabel::Store), self.fold(s, EdgeLabel::Load)),
            Constructor::Function => Shape::Func {
                params: label.fn_ins.iter().map(|n| (*n, self.fold(s, EdgeLabel::FnIn(*n)))).collect(),
                returns: label.fn_outs.iter().map(|n| (*n, self.fold(s, EdgeLabel::FnOut(*n)))).collect(),
            },
            Constructor::Atom if label.has_atom(self.a.lattice()) => Shape::Atom(label.atom),
            Constructor::Atom => Shape::Unknown,
        };
        self.memo.insert(s, sh.clone());
        sh
    }
}

struct Converter<'a> {
    lattice: &'a AtomicLattice,
    /// Local loop name to its declared name and whether references to it
    /// denote a pointer to the declared struct.
    names: BTreeMap<String, (String, bool)>,
    diagnostics: Vec<String>,
}

impl Converter<'_> {
    fn fields(&mut self, fs: &BTreeMap<FieldKey, Shape>) -> Vec<CField> {
        let mut keys: Vec<&FieldKey> = fs.keys().collect();
        keys.sort_by_key(|k| (k.offset, std::cmp::Reverse(k.size)));
        let mut kept: Vec<FieldKey> = Vec::new();
        for k in keys {
            let (lo, hi) = k.byte_range();
            let mut absorbed = false;
            let mut clash = None;
            for q in &kept {
                let (qlo, qhi) = q.byte_range();
                if qlo <= lo && hi <= qhi {
                    absorbed = true;
                    break;
                }
                if lo < qhi && qlo < hi {
                    clash = Some(*q);
                }
            }
            if absorbed {
                continue;
            }
            if let Some(q) = clash {
                self.diagnostics.push(format!("field {k} overlaps field {q} and was dropped"));
                continue;
            }
            kept.push(*k);
        }
        kept.iter()
            .map(|k| CField { offset: k.offset, size: k.size, ty: self.convert(&fs[k], Some(k.size)) })
            .collect()
    }

    fn slots(&mut self, m: &BTreeMap<u32, Shape>) -> Vec<CType> {
        let n = m.keys().next_back().map_or(0, |k| *k as usize + 1);
        (0..n as u32)
            .map(|i| m.get(&i).map_or_else(CType::unknown, |s| self.convert(s, None)))
            .collect()
    }

    fn convert(&mut self, s: &Shape, width: Option<u32>) -> CType {
        match s {
            Shape::Unknown => CType::Unknown { width },
            Shape::Atom(a) if self.lattice.is_top(a) || self.lattice.is_bottom(a) => CType::Unknown { width },
            Shape::Atom(a) => CType::prim(a.name(), self.lattice.width(a).or(width)),
            Shape::Record(fs) => CType::Struct { name: None, fields: self.fields(fs) },
            Shape::Ptr { store, load } => {
                let p = Shape::pointee(store, load, self.lattice);
                CType::ptr(self.convert(&p, None))
            }
            Shape::Func { params, returns } => CType::Func { params: self.slots(params), returns: self.slots(returns) },
            Shape::Named(n) => {
                let (g, via_ptr) = self.names[n].clone();
                if via_ptr {
                    CType::ptr(CType::named(g))
                } else {
                    CType::named(g)
                }
            }
        }
    }
}

fn struct_pointee(s: &Shape, lattice: &AtomicLattice) -> Option<BTreeMap<FieldKey, Shape>> {
    match s {
        Shape::Ptr { store, load } => match Shape::pointee(store, load, lattice) {
            Shape::Record(fs) => Some(fs),
            _ => None,
        },
        _ => None,
    }
}

/// Lowers an automaton to a C type, declaring one named type per loop in
/// `env`. A loop through a pointer to a struct names the struct itself.
pub fn lower(a: &TypeAutomaton, env: &mut TypeEnvironment) -> CType {
    let simple = a.simplify().unwrap_or_else(|_| a.clone());
    let lf = break_loops(&simple);
    let lattice = lf.automaton.lattice().clone();
    let mut shaper = Shaper { a: &lf.automaton, placeholders: &lf.placeholders, memo: HashMap::new() };
    let root = shaper.shape(lf.automaton.start());
    let bodies: BTreeMap<String, Shape> = lf.names.iter().map(|(n, t)| (n.clone(), shaper.shape(*t))).collect();

    let mut conv = Converter { lattice: &lattice, names: BTreeMap::new(), diagnostics: Vec::new() };
    let mut structs = BTreeMap::new();
    for (n, body) in &bodies {
        let pointee = struct_pointee(body, &lattice);
        conv.names.insert(n.clone(), (env.fresh_name(), pointee.is_some()));
        if let Some(fs) = pointee {
            structs.insert(n.clone(), fs);
        }
    }
    let mut decls = Vec::new();
    for (n, body) in &bodies {
        let g = conv.names[n].0.clone();
        let decl = match structs.get(n) {
            Some(fs) => CType::Struct { name: Some(g.clone()), fields: conv.fields(fs) },
            None => conv.convert(body, None),
        };
        decls.push((g, decl));
    }
    let root = conv.convert(&root, None);
    env.diagnostics.append(&mut conv.diagnostics);
    let fresh: Vec<String> = decls.iter().map(|(g, _)| g.clone()).collect();
    for (g, d) in decls {
        env.decls.insert(g, d);
    }
    for g in &fresh {
        let d = env.intern(&env.decls[g], Some(g));
        env.decls.insert(g.clone(), d);
    }
    env.intern(&root, None)
}
