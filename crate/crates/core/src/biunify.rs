//! Constraint decomposition into per-variable bounds, and coalescing of those
//! bounds back into unconstrained polar types.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use crate::frontend::SubtypeConstraint;
use crate::lattice::{Atom, AtomicLattice};
use crate::types::{FieldKey, Polarity, PolarType};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bounds {
    pub lower: Vec<PolarType>,
    pub upper: Vec<PolarType>,
    seen_lower: HashSet<PolarType>,
    seen_upper: HashSet<PolarType>,
}

impl Bounds {
    pub fn of(&self, p: Polarity) -> &[PolarType] {
        match p {
            Polarity::Positive => &self.lower,
            Polarity::Negative => &self.upper,
        }
    }
}

/// Something the solver noticed but did not treat as fatal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Diagnostic {
    /// An atom flowed into an atom it is not below.
    AtomMismatch { lower: Atom, upper: Atom },
    UnknownAtom(String),
    /// The upper bound demands a field the lower bound does not provide.
    MissingField(FieldKey),
    MissingReturn(u32),
    ConstructorMismatch { lower: String, upper: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::AtomMismatch { lower, upper } => write!(f, "{lower} is not a subtype of {upper}"),
            Diagnostic::UnknownAtom(a) => write!(f, "unknown atom `{a}`"),
            Diagnostic::MissingField(k) => write!(f, "missing capability: field {k}"),
            Diagnostic::MissingReturn(i) => write!(f, "missing capability: return {i}"),
            Diagnostic::ConstructorMismatch { lower, upper } => {
                write!(f, "{lower} cannot flow into {upper}")
            }
        }
    }
}

fn head(t: &PolarType) -> &'static str {
    match t {
        PolarType::Record(_) => "record",
        PolarType::Function { .. } => "function",
        PolarType::Ptr { .. } => "pointer",
        PolarType::Var(_) => "variable",
        PolarType::Top => "top",
        PolarType::Bottom => "bottom",
        PolarType::Union(..) => "union",
        PolarType::Inter(..) => "intersection",
        PolarType::Mu(..) => "recursive type",
        PolarType::Atom(_) => "atom",
    }
}

/// Per-variable bounds accumulated by [`ConstraintStore::constrain`].
#[derive(Clone, Debug)]
pub struct ConstraintStore {
    lattice: Arc<AtomicLattice>,
    bounds: BTreeMap<String, Bounds>,
    cache: HashSet<(PolarType, PolarType)>,
    diagnostics: BTreeSet<Diagnostic>,
    names: HashSet<String>,
}

impl ConstraintStore {
    pub fn new(lattice: Arc<AtomicLattice>) -> Self {
        ConstraintStore {
            lattice,
            bounds: BTreeMap::new(),
            cache: HashSet::new(),
            diagnostics: BTreeSet::new(),
            names: HashSet::new(),
        }
    }

    pub fn lattice(&self) -> &Arc<AtomicLattice> {
        &self.lattice
    }

    pub fn bounds(&self, v: &str) -> Option<&Bounds> {
        self.bounds.get(v)
    }

    pub fn lower(&self, v: &str) -> &[PolarType] {
        self.bounds.get(v).map(|b| b.lower.as_slice()).unwrap_or(&[])
    }

    pub fn upper(&self, v: &str) -> &[PolarType] {
        self.bounds.get(v).map(|b| b.upper.as_slice()).unwrap_or(&[])
    }

    /// Variables with at least one bound.
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.bounds.keys().map(String::as_str)
    }

    pub fn diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter()
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    fn note_names(&mut self, t: &PolarType) {
        match t {
            PolarType::Var(v) => {
                if !self.names.contains(v) {
                    self.names.insert(v.clone());
                }
            }
            _ => {
                for (_, c) in t.children() {
                    self.note_names(c);
                }
            }
        }
    }

    pub fn add_all<'a>(&mut self, cs: impl IntoIterator<Item = &'a SubtypeConstraint>) {
        for c in cs {
            self.add(c);
        }
    }

    pub fn add(&mut self, c: &SubtypeConstraint) {
        self.constrain(&c.lhs, &c.rhs);
    }

    /// Decomposes `lhs ≤ rhs` until only variable bounds remain.
    pub fn constrain(&mut self, lhs: &PolarType, rhs: &PolarType) {
        self.note_names(lhs);
        self.note_names(rhs);
        let mut work = vec![(lhs.clone(), rhs.clone())];
        while let Some((l, r)) = work.pop() {
            if self.cache.contains(&(l.clone(), r.clone())) {
                continue;
            }
            self.cache.insert((l.clone(), r.clone()));
            let mut next = Vec::new();
            self.step(l, r, &mut next);
            work.extend(next.into_iter().rev());
        }
    }

    fn step(&mut self, l: PolarType, r: PolarType, next: &mut Vec<(PolarType, PolarType)>) {
        use PolarType::*;
        match (l, r) {
            (_, Top) | (Bottom, _) => {}
            (Var(v), r) => {
                let b = self.bounds.entry(v).or_default();
                if b.seen_upper.insert(r.clone()) {
                    b.upper.push(r.clone());
                    next.extend(b.lower.iter().map(|lb| (lb.clone(), r.clone())));
                }
            }
            (l, Var(v)) => {
                let b = self.bounds.entry(v).or_default();
                if b.seen_lower.insert(l.clone()) {
                    b.lower.push(l.clone());
                    next.extend(b.upper.iter().map(|ub| (l.clone(), ub.clone())));
                }
            }
            (Union(a, b), r) => {
                next.push((*a, r.clone()));
                next.push((*b, r));
            }
            (l, Inter(a, b)) => {
                next.push((l.clone(), *a));
                next.push((l, *b));
            }
            (l @ Mu(..), r) => match l.unroll() {
                Ok(u) => next.push((u, r)),
                Err(_) => self.mismatch(&l, &r),
            },
            (l, r @ Mu(..)) => match r.unroll() {
                Ok(u) => next.push((l, u)),
                Err(_) => self.mismatch(&l, &r),
            },
            (Ptr { store: a, load: b }, Ptr { store: c, load: d }) => {
                next.push((*c, *a));
                next.push((*b, *d));
            }
            (Record(lf), Record(rf)) => {
                for (k, rt) in rf {
                    match lf.get(&k) {
                        Some(lt) => next.push((lt.clone(), rt)),
                        None => {
                            self.diagnostics.insert(Diagnostic::MissingField(k));
                        }
                    }
                }
            }
            (
                Function {
                    params: lp,
                    returns: lr,
                },
                Function {
                    params: rp,
                    returns: rr,
                },
            ) => {
                for (i, rt) in rp {
                    if let Some(lt) = lp.get(&i) {
                        next.push((rt, lt.clone()));
                    }
                }
                for (j, rt) in rr {
                    match lr.get(&j) {
                        Some(lt) => next.push((lt.clone(), rt)),
                        None => {
                            self.diagnostics.insert(Diagnostic::MissingReturn(j));
                        }
                    }
                }
            }
            (Atom(a), Atom(b)) => self.atom_leq(a, b),
            (Top, Atom(b)) => {
                let top = self.lattice.top();
                self.atom_leq(top, b)
            }
            (Atom(a), Bottom) => {
                let bot = self.lattice.bottom();
                self.atom_leq(a, bot)
            }
            (l, r) => self.mismatch(&l, &r),
        }
    }

    fn atom_leq(&mut self, a: Atom, b: Atom) {
        match self.lattice.leq(&a, &b) {
            Ok(true) => {}
            Ok(false) => {
                self.diagnostics.insert(Diagnostic::AtomMismatch { lower: a, upper: b });
            }
            Err(_) => {
                let unknown = if self.lattice.contains(a.name()) { b } else { a };
                self.diagnostics.insert(Diagnostic::UnknownAtom(unknown.0));
            }
        }
    }

    fn mismatch(&mut self, l: &PolarType, r: &PolarType) {
        let (lower, upper) = match (l, r) {
            (PolarType::Atom(a), _) => (a.to_string(), head(r).to_string()),
            (_, PolarType::Atom(b)) => (head(l).to_string(), b.to_string()),
            _ => (head(l).to_string(), head(r).to_string()),
        };
        self.diagnostics.insert(Diagnostic::ConstructorMismatch { lower, upper });
    }

    /// Replaces variables in `t` by their bounds at polarity `p`.
    pub fn coalesce(&self, t: &PolarType, p: Polarity) -> PolarType {
        self.coalesce_with(t, p, &PolarVarSet::new())
    }

    /// As [`coalesce`](Self::coalesce), leaving the variables in `keep` untouched.
    pub fn coalesce_with(&self, t: &PolarType, p: Polarity, keep: &PolarVarSet) -> PolarType {
        Coalescer {
            store: self,
            keep,
            active: HashMap::new(),
            forced: HashMap::new(),
            memo: HashMap::new(),
            locals: Vec::new(),
            low: usize::MAX,
        }
        .go(t, p)
    }

    /// Coalesces a single variable.
    pub fn coalesce_var(&self, v: &str, p: Polarity) -> PolarType {
        self.coalesce(&PolarType::var(v), p)
    }
}

pub type PolarVarSet = BTreeSet<(String, Polarity)>;

struct Active {
    depth: usize,
    binder: String,
    used: bool,
    clash: bool,
}

struct Coalescer<'a> {
    store: &'a ConstraintStore,
    keep: &'a PolarVarSet,
    active: HashMap<(String, Polarity), Active>,
    forced: HashMap<(String, Polarity), String>,
    memo: HashMap<(String, Polarity), PolarType>,
    locals: Vec<String>,
    low: usize,
}

impl Coalescer<'_> {
    /// A free occurrence of `name` is about to be emitted inside any active
    /// binder of the same name.
    fn emit_name(&mut self, name: &str) {
        for p in [Polarity::Positive, Polarity::Negative] {
            if let Some(a) = self.active.get_mut(&(name.to_string(), p)) {
                if a.binder == name {
                    a.clash = true;
                }
            }
        }
    }

    fn alt_binder(&self, v: &str) -> String {
        let mut b = format!("{v}'");
        while self.store.names.contains(&b) || self.active.values().any(|a| a.binder == b) {
            b.push('\'');
        }
        b
    }

    fn go(&mut self, t: &PolarType, p: Polarity) -> PolarType {
        match t {
            PolarType::Var(v) => {
                if self.locals.iter().any(|l| l == v) {
                    return t.clone();
                }
                self.var(v, p)
            }
            PolarType::Ptr { store, load } => {
                let s = self.go(store, !p);
                PolarType::ptr(s, self.go(load, p))
            }
            PolarType::Record(fields) => {
                PolarType::Record(fields.iter().map(|(k, v)| (*k, self.go(v, p))).collect())
            }
            PolarType::Function { params, returns } => PolarType::Function {
                params: params.iter().map(|(k, v)| (*k, self.go(v, !p))).collect(),
                returns: returns.iter().map(|(k, v)| (*k, self.go(v, p))).collect(),
            },
            PolarType::Union(a, b) => {
                let a = self.go(a, p);
                PolarType::union(a, self.go(b, p))
            }
            PolarType::Inter(a, b) => {
                let a = self.go(a, p);
                PolarType::inter(a, self.go(b, p))
            }
            PolarType::Mu(b, body) => {
                self.locals.push(b.clone());
                let body = self.go(body, p);
                self.locals.pop();
                PolarType::Mu(b.clone(), Box::new(body))
            }
            PolarType::Top | PolarType::Bottom | PolarType::Atom(_) => t.clone(),
        }
    }

    fn var(&mut self, v: &str, p: Polarity) -> PolarType {
        let key = (v.to_string(), p);
        if self.keep.contains(&key) {
            self.emit_name(v);
            return PolarType::var(v);
        }
        if let Some(a) = self.active.get_mut(&key) {
            a.used = true;
            self.low = self.low.min(a.depth);
            return PolarType::var(a.binder.clone());
        }
        if let Some(m) = self.memo.get(&key) {
            let m = m.clone();
            for n in m.free_vars() {
                self.emit_name(&n);
            }
            return m;
        }
        let bounds = match self.store.bounds.get(v) {
            Some(b) if !b.of(p).is_empty() => b.of(p),
            _ => {
                self.emit_name(v);
                return PolarType::var(v);
            }
        };
        loop {
            let binder = self.forced.get(&key).cloned().unwrap_or_else(|| v.to_string());
            let depth = self.active.len();
            self.active.insert(
                key.clone(),
                Active {
                    depth,
                    binder: binder.clone(),
                    used: false,
                    clash: false,
                },
            );
            let saved_low = std::mem::replace(&mut self.low, usize::MAX);
            let mut parts = vec![PolarType::var(binder.clone())];
            for b in bounds {
                parts.push(self.go(b, p));
            }
            let a = self.active.remove(&key).expect("active entry");
            let inner_low = self.low;
            self.low = saved_low.min(if inner_low < depth { inner_low } else { usize::MAX });
            if a.used && a.clash && binder == v {
                self.forced.insert(key.clone(), self.alt_binder(v));
                continue;
            }
            let body = PolarType::combine(parts, p);
            let result = match PolarType::mu(binder.clone(), body.clone()) {
                m if a.used && m.check_guarded().is_ok() => m,
                _ => {
                    self.emit_name(&binder);
                    body
                }
            };
            if inner_low >= depth {
                self.memo.insert(key, result.clone());
            }
            return result;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_constraints, ConstraintForm};
    use crate::types::{FreshNames, PolarType as T};

    fn lattice() -> Arc<AtomicLattice> {
        Arc::new(AtomicLattice::flat_default())
    }

    fn store(text: &str) -> ConstraintStore {
        let l = lattice();
        let cs = parse_constraints(text, ConstraintForm::BinSub, &l, &mut FreshNames::new("t")).unwrap();
        let mut s = ConstraintStore::new(l);
        s.add_all(&cs);
        s
    }

    fn v(n: &str) -> T {
        T::var(n)
    }

    const LIST_INC: &str = "x <= stack_slot_1
y <= stack_slot_2
stack_slot_1 <= stack_slot_2
stack_slot_2 <= ptr(a, {4:32: b})
a <= {4:32: b}
b <= t1
t1 <= stack_slot_1
stack_slot_2 <= ptr(c, {0:32: d})
c <= {0:32: d}
d <= t2
t2 <= int32
int32 <= t3
stack_slot_2 <= ptr({0:32: e}, f)
{0:32: e} <= f
t3 <= e";

    #[test]
    fn list_increment_bounds() {
        let s = store(LIST_INC);
        let i32 = T::atom("int32");
        assert_eq!(s.upper("stack_slot_1"), [v("stack_slot_2")]);
        assert!(s.lower("stack_slot_1").is_empty());
        assert_eq!(s.upper("x"), [v("stack_slot_1")]);
        assert_eq!(
            s.upper("stack_slot_2"),
            [
                T::ptr(v("a"), T::field(4, 32, v("b"))),
                T::ptr(v("c"), T::field(0, 32, v("d"))),
                T::ptr(T::field(0, 32, v("e")), v("f")),
            ]
        );
        assert!(s.lower("stack_slot_2").iter().all(|t| t.as_var().is_some()));
        assert_eq!(s.upper("t2"), std::slice::from_ref(&i32));
        assert_eq!(s.lower("e"), std::slice::from_ref(&i32));
        assert_eq!(s.upper("t1"), [v("stack_slot_1")]);
        assert_eq!(s.diagnostics().count(), 0);
    }

    #[test]
    fn propagation_through_existing_bounds() {
        let mut s = store("int32 <= t3\ne <= d\nd <= t2\nt2 <= int32");
        s.constrain(&v("t3"), &v("e"));
        let i32 = T::atom("int32");
        assert_eq!(s.upper("t3"), [v("e")]);
        assert_eq!(s.lower("e"), std::slice::from_ref(&i32));
        assert_eq!(s.lower("d"), std::slice::from_ref(&i32));
        assert_eq!(s.lower("t2"), std::slice::from_ref(&i32));
        assert_eq!(s.upper("t2"), [i32]);
        assert_eq!(s.diagnostics().count(), 0);
    }

    #[test]
    fn coalesced_slot_is_recursive() {
        let s = store(LIST_INC);
        let got = s.coalesce_var("stack_slot_1", Polarity::Negative);
        let i32 = T::atom("int32");
        let alpha = v("stack_slot_1");
        let expected = T::mu(
            "stack_slot_1",
            T::combine(
                vec![
                    alpha.clone(),
                    v("stack_slot_2"),
                    T::ptr(v("a"), T::field(4, 32, T::inter(v("b"), T::inter(v("t1"), alpha)))),
                    T::ptr(v("c"), T::field(0, 32, T::inter(v("d"), T::inter(v("t2"), i32.clone())))),
                    T::ptr(T::field(0, 32, T::union(v("e"), i32)), v("f")),
                ],
                Polarity::Negative,
            ),
        );
        assert_eq!(got, expected, "{got}");
        assert!(got.well_formed(Polarity::Negative).is_ok());
    }

    #[test]
    fn trivial_cases() {
        let mut s = ConstraintStore::new(lattice());
        s.constrain(&v("a"), &T::Top);
        assert_eq!(s.variables().count(), 0);
        assert_eq!(s.cache_len(), 1);
        assert_eq!(s.coalesce_var("z", Polarity::Positive), v("z"));
        s.constrain(&T::atom("int32"), &T::atom("float64"));
        s.constrain(&T::atom("int32"), &T::ptr(v("a"), v("b")));
        s.constrain(&T::field(0, 32, v("a")), &T::field(4, 32, v("b")));
        let d: Vec<_> = s.diagnostics().cloned().collect();
        assert_eq!(d.len(), 3, "{d:?}");
    }

    #[test]
    fn variable_cycles_terminate() {
        let s = store("a <= b\nb <= a\nb <= ptr(a, a)");
        let t = s.coalesce_var("a", Polarity::Negative);
        assert!(t.well_formed(Polarity::Negative).is_ok(), "{t}");
        let t = s.coalesce_var("b", Polarity::Positive);
        assert!(t.well_formed(Polarity::Positive).is_ok(), "{t}");
    }

    #[test]
    fn binders_do_not_capture_opposite_polarity() {
        // `a` negatively reaches its own store side, where `a` positively appears.
        let s = store("a <= ptr(a, a)\nx <= a");
        let t = s.coalesce_var("a", Polarity::Negative);
        assert!(t.well_formed(Polarity::Negative).is_ok(), "{t}");
        assert!(t.free_vars().contains("a"), "{t}");
    }

    #[test]
    fn functions_and_records() {
        let s = store("(0: p) -> (0: r) <= (0: x) -> (0: y)\n{0:32: u, 4:32: w} <= {4:32: z}");
        assert_eq!(s.upper("x"), [v("p")]);
        assert_eq!(s.upper("r"), [v("y")]);
        assert_eq!(s.upper("w"), [v("z")]);
        assert!(s.bounds("u").is_none());
    }
}
