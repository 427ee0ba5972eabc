//! Type automata: one state per type node, labelled with the constructors,
//! variables and atom found there; edges follow constructor parameters.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::biunify::ConstraintStore;
use crate::lattice::{Atom, AtomicLattice};
use crate::types::{FieldKey, Polarity, PolarType, TypeError};

mod decompile;
mod determinize;
pub mod dot;
pub mod language;
mod minimize;

pub use decompile::{decompile_automaton, instantiate};
pub use determinize::determinize;
pub use minimize::minimize;

pub type StateId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeLabel {
    Epsilon,
    FnIn(u32),
    FnOut(u32),
    Rec(FieldKey),
    Store,
    Load,
}

impl EdgeLabel {
    /// Whether the target has the opposite polarity of the source.
    pub fn flips(self) -> bool {
        matches!(self, EdgeLabel::FnIn(_) | EdgeLabel::Store)
    }
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeLabel::Epsilon => f.write_str("ε"),
            EdgeLabel::FnIn(n) => write!(f, "FnIn({n})"),
            EdgeLabel::FnOut(n) => write!(f, "FnOut({n})"),
            EdgeLabel::Rec(k) => write!(f, "RecLabel({},{})", k.offset, k.size),
            EdgeLabel::Store => f.write_str("StoreLabel"),
            EdgeLabel::Load => f.write_str("LoadLabel"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AutomatonError {
    #[error("cannot merge a {0} state with a {1} state")]
    PolarityMerge(Polarity, Polarity),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// What a state knows about its type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeLabel {
    pub polarity: Polarity,
    pub vars: BTreeSet<String>,
    pub fn_ins: BTreeSet<u32>,
    pub fn_outs: BTreeSet<u32>,
    pub rec_fields: BTreeSet<FieldKey>,
    pub ptr: bool,
    pub atom: Atom,
}

impl NodeLabel {
    /// The label that merging leaves unchanged: no variables, no
    /// constructors, and the atom that is neutral for the polarity.
    pub fn identity(p: Polarity, lattice: &AtomicLattice) -> Self {
        NodeLabel {
            polarity: p,
            vars: BTreeSet::new(),
            fn_ins: BTreeSet::new(),
            fn_outs: BTreeSet::new(),
            rec_fields: BTreeSet::new(),
            ptr: false,
            atom: identity_atom(p, lattice),
        }
    }

    pub fn merge(&self, other: &NodeLabel, lattice: &AtomicLattice) -> Result<NodeLabel, AutomatonError> {
        if self.polarity != other.polarity {
            return Err(AutomatonError::PolarityMerge(self.polarity, other.polarity));
        }
        let atom = match self.polarity {
            Polarity::Positive => lattice.join_atoms(&self.atom, &other.atom),
            Polarity::Negative => lattice.meet_atoms(&self.atom, &other.atom),
        }
        .unwrap_or_else(|_| identity_atom(self.polarity, lattice));
        Ok(NodeLabel {
            polarity: self.polarity,
            vars: self.vars.union(&other.vars).cloned().collect(),
            fn_ins: self.fn_ins.union(&other.fn_ins).copied().collect(),
            fn_outs: self.fn_outs.union(&other.fn_outs).copied().collect(),
            rec_fields: self.rec_fields.union(&other.rec_fields).copied().collect(),
            ptr: self.ptr || other.ptr,
            atom,
        })
    }

    pub fn has_function(&self) -> bool {
        !self.fn_ins.is_empty() || !self.fn_outs.is_empty()
    }

    pub fn has_record(&self) -> bool {
        !self.rec_fields.is_empty()
    }

    pub fn has_atom(&self, lattice: &AtomicLattice) -> bool {
        self.atom != identity_atom(self.polarity, lattice)
    }

    pub fn has_constructor(&self, lattice: &AtomicLattice) -> bool {
        self.ptr || self.has_function() || self.has_record() || self.has_atom(lattice)
    }
}

pub(crate) fn identity_atom(p: Polarity, lattice: &AtomicLattice) -> Atom {
    match p {
        Polarity::Positive => lattice.bottom(),
        Polarity::Negative => lattice.top(),
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}; {{", self.polarity)?;
        for (i, v) in self.vars.iter().enumerate() {
            write!(f, "{}{v}", if i > 0 { ", " } else { "" })?;
        }
        f.write_str("}; {")?;
        let mut caps = Vec::new();
        if self.ptr {
            caps.push("p".to_string());
        }
        caps.extend(self.rec_fields.iter().map(|k| format!("({},{})", k.offset, k.size)));
        caps.extend(self.fn_ins.iter().map(|n| format!("in{n}")));
        caps.extend(self.fn_outs.iter().map(|n| format!("out{n}")));
        write!(f, "{}}}; {}", caps.join(", "), self.atom)
    }
}

#[derive(Clone, Debug)]
pub struct TypeAutomaton {
    pub(crate) lattice: Arc<AtomicLattice>,
    pub(crate) start: StateId,
    pub(crate) labels: Vec<NodeLabel>,
    /// Outgoing edges per state, sorted.
    pub(crate) edges: Vec<Vec<(EdgeLabel, StateId)>>,
}

impl PartialEq for TypeAutomaton {
    fn eq(&self, other: &Self) -> bool {
        self.start == other.start && self.labels == other.labels && self.edges == other.edges
    }
}

impl TypeAutomaton {
    /// A single state carrying the identity label: the neutral element of joins.
    pub fn empty(p: Polarity, lattice: Arc<AtomicLattice>) -> Self {
        TypeAutomaton {
            labels: vec![NodeLabel::identity(p, &lattice)],
            edges: vec![Vec::new()],
            start: 0,
            lattice,
        }
    }

    /// Assembles an automaton from explicit states, keeping the numbering.
    pub fn from_parts(
        labels: Vec<NodeLabel>,
        mut edges: Vec<Vec<(EdgeLabel, StateId)>>,
        start: StateId,
        lattice: Arc<AtomicLattice>,
    ) -> Self {
        assert_eq!(labels.len(), edges.len(), "one edge list per state");
        assert!(start < labels.len(), "start state out of range");
        for es in &mut edges {
            es.sort();
            es.dedup();
        }
        TypeAutomaton { lattice, start, labels, edges }
    }

    pub fn lattice(&self) -> &Arc<AtomicLattice> {
        &self.lattice
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn polarity(&self) -> Polarity {
        self.labels[self.start].polarity
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, s: StateId) -> &NodeLabel {
        &self.labels[s]
    }

    pub fn edges(&self, s: StateId) -> &[(EdgeLabel, StateId)] {
        &self.edges[s]
    }

    pub fn transitions(&self) -> impl Iterator<Item = (StateId, EdgeLabel, StateId)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .flat_map(|(s, es)| es.iter().map(move |&(l, t)| (s, l, t)))
    }

    /// The unique `l`-successor of `s`, for deterministic automata.
    pub fn successor(&self, s: StateId, l: EdgeLabel) -> Option<StateId> {
        self.edges[s].iter().find(|(x, _)| *x == l).map(|&(_, t)| t)
    }

    pub fn is_deterministic(&self) -> bool {
        self.edges.iter().all(|es| {
            es.iter().all(|(l, _)| *l != EdgeLabel::Epsilon) && es.windows(2).all(|w| w[0].0 != w[1].0)
        })
    }

    fn add_state(&mut self, label: NodeLabel) -> StateId {
        self.labels.push(label);
        self.edges.push(Vec::new());
        self.labels.len() - 1
    }

    fn add_edge(&mut self, from: StateId, l: EdgeLabel, to: StateId) {
        let es = &mut self.edges[from];
        if let Err(i) = es.binary_search(&(l, to)) {
            es.insert(i, (l, to));
        }
    }

    /// Combines two automata of the same polarity: a fresh start state with
    /// ε edges into both, then determinized and minimized.
    pub fn join(&self, other: &TypeAutomaton) -> Result<TypeAutomaton, AutomatonError> {
        let p = self.polarity();
        if other.polarity() != p {
            return Err(AutomatonError::PolarityMerge(p, other.polarity()));
        }
        let mut u = self.clone();
        let off = u.len();
        u.labels.extend(other.labels.iter().cloned());
        u.edges
            .extend(other.edges.iter().map(|es| es.iter().map(|&(l, t)| (l, t + off)).collect()));
        let s = u.add_state(NodeLabel::identity(p, &self.lattice));
        u.add_edge(s, EdgeLabel::Epsilon, self.start);
        u.add_edge(s, EdgeLabel::Epsilon, other.start + off);
        u.start = s;
        Ok(minimize(&determinize(&u)?))
    }

    /// Determinized and minimized.
    pub fn simplify(&self) -> Result<TypeAutomaton, AutomatonError> {
        Ok(minimize(&determinize(self)?))
    }
}

pub fn join_automata(a: &TypeAutomaton, b: &TypeAutomaton) -> Result<TypeAutomaton, AutomatonError> {
    a.join(b)
}

/// Builds the automaton of `t` read at polarity `p`.
pub fn build_automaton(
    t: &PolarType,
    p: Polarity,
    lattice: Arc<AtomicLattice>,
) -> Result<TypeAutomaton, AutomatonError> {
    if !t.check_polarity(p) {
        return Err(TypeError::Polarity(t.to_string(), p).into());
    }
    let mut b = Builder::new(lattice, None);
    b.a.start = b.build(t, p);
    Ok(b.a)
}

/// Builds the automaton of `t` read at polarity `p`, resolving its free
/// variables straight from the solved bounds in `store`. Each variable gets
/// one state per polarity, labelled with its name and linked by ε to its
/// bounds, so shared bounds are built once.
pub fn build_from_store(store: &ConstraintStore, t: &PolarType, p: Polarity) -> Result<TypeAutomaton, AutomatonError> {
    if !t.check_polarity(p) {
        return Err(TypeError::Polarity(t.to_string(), p).into());
    }
    let mut b = Builder::new(store.lattice().clone(), Some(store));
    b.a.start = b.build(t, p);
    while let Some((w, q, s)) = b.pending.pop() {
        for t in store.bounds(&w).map(|x| x.of(q)).unwrap_or(&[]) {
            let c = b.build(t, q);
            b.a.add_edge(s, EdgeLabel::Epsilon, c);
        }
    }
    Ok(b.a)
}

struct Builder<'s> {
    a: TypeAutomaton,
    binders: Vec<(String, StateId)>,
    store: Option<&'s ConstraintStore>,
    vars: HashMap<(String, Polarity), StateId>,
    pending: Vec<(String, Polarity, StateId)>,
}

impl<'s> Builder<'s> {
    fn new(lattice: Arc<AtomicLattice>, store: Option<&'s ConstraintStore>) -> Self {
        Builder {
            a: TypeAutomaton { lattice, start: 0, labels: Vec::new(), edges: Vec::new() },
            binders: Vec::new(),
            store,
            vars: HashMap::new(),
            pending: Vec::new(),
        }
    }

    fn var_state(&mut self, v: &str, p: Polarity) -> StateId {
        if let Some(&s) = self.vars.get(&(v.to_string(), p)) {
            return s;
        }
        let mut label = NodeLabel::identity(p, &self.a.lattice);
        label.vars.insert(v.to_string());
        let s = self.a.add_state(label);
        self.vars.insert((v.to_string(), p), s);
        self.pending.push((v.to_string(), p, s));
        s
    }

    fn build(&mut self, t: &PolarType, p: Polarity) -> StateId {
        let mut label = NodeLabel::identity(p, &self.a.lattice);
        match t {
            PolarType::Var(v) => {
                if let Some(&(_, target)) = self.binders.iter().rev().find(|(b, _)| b == v) {
                    let s = self.a.add_state(label);
                    self.a.add_edge(s, EdgeLabel::Epsilon, target);
                    return s;
                }
                if self.store.is_some() {
                    return self.var_state(v, p);
                }
                label.vars.insert(v.clone());
                self.a.add_state(label)
            }
            PolarType::Atom(at) => {
                label.atom = at.clone();
                self.a.add_state(label)
            }
            PolarType::Top => {
                if p == Polarity::Positive {
                    label.atom = self.a.lattice.top();
                }
                self.a.add_state(label)
            }
            PolarType::Bottom => {
                if p == Polarity::Negative {
                    label.atom = self.a.lattice.bottom();
                }
                self.a.add_state(label)
            }
            PolarType::Ptr { store, load } => {
                label.ptr = true;
                let s = self.a.add_state(label);
                let st = self.build(store, !p);
                let ld = self.build(load, p);
                self.a.add_edge(s, EdgeLabel::Store, st);
                self.a.add_edge(s, EdgeLabel::Load, ld);
                s
            }
            PolarType::Record(fields) => {
                label.rec_fields = fields.keys().copied().collect();
                let s = self.a.add_state(label);
                for (k, ft) in fields {
                    let c = self.build(ft, p);
                    self.a.add_edge(s, EdgeLabel::Rec(*k), c);
                }
                s
            }
            PolarType::Function { params, returns } => {
                label.fn_ins = params.keys().copied().collect();
                label.fn_outs = returns.keys().copied().collect();
                let s = self.a.add_state(label);
                for (n, pt) in params {
                    let c = self.build(pt, !p);
                    self.a.add_edge(s, EdgeLabel::FnIn(*n), c);
                }
                for (n, rt) in returns {
                    let c = self.build(rt, p);
                    self.a.add_edge(s, EdgeLabel::FnOut(*n), c);
                }
                s
            }
            PolarType::Union(l, r) | PolarType::Inter(l, r) => {
                let s = self.a.add_state(label);
                let x = self.build(l, p);
                let y = self.build(r, p);
                self.a.add_edge(s, EdgeLabel::Epsilon, x);
                self.a.add_edge(s, EdgeLabel::Epsilon, y);
                s
            }
            PolarType::Mu(b, body) => {
                let s = self.a.add_state(label);
                self.binders.push((b.clone(), s));
                let c = self.build(body, p);
                self.binders.pop();
                self.a.add_edge(s, EdgeLabel::Epsilon, c);
                s
            }
        }
    }
}

/// Maps each state to a dense id in depth-first order from the start,
/// following edges in sorted order. Unreachable states are dropped.
pub(crate) fn renumber(labels: Vec<NodeLabel>, edges: Vec<Vec<(EdgeLabel, StateId)>>, start: StateId, lattice: Arc<AtomicLattice>) -> TypeAutomaton {
    let mut order = Vec::new();
    let mut ids: BTreeMap<StateId, StateId> = BTreeMap::new();
    let mut stack = vec![start];
    while let Some(s) = stack.pop() {
        if ids.contains_key(&s) {
            continue;
        }
        ids.insert(s, order.len());
        order.push(s);
        for &(_, t) in edges[s].iter().rev() {
            if !ids.contains_key(&t) {
                stack.push(t);
            }
        }
    }
    let mut out_labels = Vec::with_capacity(order.len());
    let mut out_edges = Vec::with_capacity(order.len());
    for &s in &order {
        out_labels.push(labels[s].clone());
        let mut es: Vec<_> = edges[s].iter().map(|&(l, t)| (l, ids[&t])).collect();
        es.sort();
        es.dedup();
        out_edges.push(es);
    }
    TypeAutomaton {
        lattice,
        start: 0,
        labels: out_labels,
        edges: out_edges,
    }
}

#[cfg(test)]
pub(crate) mod tests;
