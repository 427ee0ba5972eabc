//! Polar type terms: records, functions, two-parameter pointers, variables,
//! lattice atoms, unions/intersections and guarded recursive types.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Not;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Atom;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Not for Polarity {
    type Output = Polarity;

    fn not(self) -> Polarity {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Positive => "+",
            Polarity::Negative => "-",
        })
    }
}

/// A record capability: byte offset and access size in bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FieldKey {
    pub offset: u32,
    pub size: u32,
}

impl FieldKey {
    pub fn new(offset: u32, size: u32) -> Self {
        debug_assert!(size > 0, "field size must be positive");
        FieldKey { offset, size }
    }

    /// Byte range `[offset, offset + ceil(size / 8))`.
    pub fn byte_range(&self) -> (u32, u32) {
        (self.offset, self.offset + self.size.div_ceil(8).max(1))
    }
}

impl fmt::Display for FieldKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.offset, self.size)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolarType {
    Record(BTreeMap<FieldKey, PolarType>),
    Function {
        params: BTreeMap<u32, PolarType>,
        returns: BTreeMap<u32, PolarType>,
    },
    Ptr {
        store: Box<PolarType>,
        load: Box<PolarType>,
    },
    Var(String),
    Top,
    Bottom,
    Union(Box<PolarType>, Box<PolarType>),
    Inter(Box<PolarType>, Box<PolarType>),
    Mu(String, Box<PolarType>),
    Atom(Atom),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("type is not recursive")]
    NotRecursive,
    #[error("`{0}` is not a well-formed {1} type")]
    Polarity(String, Polarity),
    #[error("recursive binder `{0}` is not guarded by a constructor")]
    Unguarded(String),
}

impl PolarType {
    pub fn var(name: impl Into<String>) -> Self {
        PolarType::Var(name.into())
    }

    pub fn atom(name: impl Into<String>) -> Self {
        PolarType::Atom(Atom::new(name))
    }

    pub fn ptr(store: PolarType, load: PolarType) -> Self {
        PolarType::Ptr {
            store: Box::new(store),
            load: Box::new(load),
        }
    }

    pub fn record(fields: impl IntoIterator<Item = (FieldKey, PolarType)>) -> Self {
        PolarType::Record(fields.into_iter().collect())
    }

    pub fn field(offset: u32, size: u32, ty: PolarType) -> Self {
        PolarType::record([(FieldKey::new(offset, size), ty)])
    }

    pub fn function(
        params: impl IntoIterator<Item = (u32, PolarType)>,
        returns: impl IntoIterator<Item = (u32, PolarType)>,
    ) -> Self {
        PolarType::Function {
            params: params.into_iter().collect(),
            returns: returns.into_iter().collect(),
        }
    }

    pub fn union(a: PolarType, b: PolarType) -> Self {
        PolarType::Union(Box::new(a), Box::new(b))
    }

    pub fn inter(a: PolarType, b: PolarType) -> Self {
        PolarType::Inter(Box::new(a), Box::new(b))
    }

    pub fn mu(binder: impl Into<String>, body: PolarType) -> Self {
        PolarType::Mu(binder.into(), Box::new(body))
    }

    /// Right-nested union (positive) or intersection (negative) of `parts`;
    /// the identity element when empty.
    pub fn combine(parts: Vec<PolarType>, p: Polarity) -> Self {
        let mut iter = parts.into_iter().rev();
        let Some(mut acc) = iter.next() else {
            return match p {
                Polarity::Positive => PolarType::Bottom,
                Polarity::Negative => PolarType::Top,
            };
        };
        for t in iter {
            acc = match p {
                Polarity::Positive => PolarType::union(t, acc),
                Polarity::Negative => PolarType::inter(t, acc),
            };
        }
        acc
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            PolarType::Var(v) => Some(v),
            _ => None,
        }
    }

    /// Number of syntax nodes.
    pub fn size(&self) -> usize {
        1 + self.children().map(|(_, c)| c.size()).sum::<usize>()
    }

    /// Immediate subterms with a flag telling whether the child's polarity is flipped.
    pub fn children(&self) -> Box<dyn Iterator<Item = (bool, &PolarType)> + '_> {
        match self {
            PolarType::Record(fields) => Box::new(fields.values().map(|t| (false, t))),
            PolarType::Function { params, returns } => Box::new(
                params
                    .values()
                    .map(|t| (true, t))
                    .chain(returns.values().map(|t| (false, t))),
            ),
            PolarType::Ptr { store, load } => {
                Box::new([(true, &**store), (false, &**load)].into_iter())
            }
            PolarType::Union(a, b) | PolarType::Inter(a, b) => {
                Box::new([(false, &**a), (false, &**b)].into_iter())
            }
            PolarType::Mu(_, body) => Box::new(std::iter::once((false, &**body))),
            PolarType::Var(_) | PolarType::Top | PolarType::Bottom | PolarType::Atom(_) => {
                Box::new(std::iter::empty())
            }
        }
    }

    /// Polarity discipline: unions only at positive positions, intersections
    /// only at negative ones, store and parameter positions flip.
    pub fn check_polarity(&self, p: Polarity) -> bool {
        match self {
            PolarType::Union(..) if p == Polarity::Negative => false,
            PolarType::Inter(..) if p == Polarity::Positive => false,
            _ => self
                .children()
                .all(|(flip, c)| c.check_polarity(if flip { !p } else { p })),
        }
    }

    /// Polarity discipline plus guardedness of every recursive binder.
    pub fn well_formed(&self, p: Polarity) -> Result<(), TypeError> {
        if !self.check_polarity(p) {
            return Err(TypeError::Polarity(self.to_string(), p));
        }
        self.check_guarded()
    }

    /// Every `mu a. T` must mention `a` at least once beneath a pointer,
    /// record or function constructor. Unguarded occurrences as a direct
    /// operand of `&`/`|` are tolerated; they denote the fixpoint itself.
    pub fn check_guarded(&self) -> Result<(), TypeError> {
        if let PolarType::Mu(binder, body) = self {
            if !occurs_guarded(body, binder, false) {
                return Err(TypeError::Unguarded(binder.clone()));
            }
        }
        self.children().try_for_each(|(_, c)| c.check_guarded())
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        collect_free(self, &mut Vec::new(), &mut out);
        out
    }

    /// One-step unfolding `mu a. T  ->  T[mu a. T / a]`.
    pub fn unroll(&self) -> Result<PolarType, TypeError> {
        match self {
            PolarType::Mu(binder, body) => Ok(body.substitute(binder, self)),
            _ => Err(TypeError::NotRecursive),
        }
    }

    /// Capture-avoiding substitution of free occurrences of `name`.
    pub fn substitute(&self, name: &str, replacement: &PolarType) -> PolarType {
        let repl_free = replacement.free_vars();
        self.subst_inner(name, replacement, &repl_free)
    }

    fn subst_inner(&self, name: &str, repl: &PolarType, repl_free: &BTreeSet<String>) -> PolarType {
        match self {
            PolarType::Var(v) if v == name => repl.clone(),
            PolarType::Mu(b, _) if b == name => self.clone(),
            PolarType::Mu(b, body) if repl_free.contains(b) => {
                let mut fresh = format!("{b}'");
                let avoid = body.free_vars();
                while repl_free.contains(&fresh) || avoid.contains(&fresh) || fresh == name {
                    fresh.push('\'');
                }
                let renamed = body.substitute(b, &PolarType::Var(fresh.clone()));
                PolarType::mu(fresh, renamed.subst_inner(name, repl, repl_free))
            }
            _ => self.map_children(|c| c.subst_inner(name, repl, repl_free)),
        }
    }

    /// Rebuilds the node with `f` applied to each immediate child.
    pub fn map_children(&self, mut f: impl FnMut(&PolarType) -> PolarType) -> PolarType {
        match self {
            PolarType::Record(fields) => {
                PolarType::Record(fields.iter().map(|(k, t)| (*k, f(t))).collect())
            }
            PolarType::Function { params, returns } => PolarType::Function {
                params: params.iter().map(|(k, t)| (*k, f(t))).collect(),
                returns: returns.iter().map(|(k, t)| (*k, f(t))).collect(),
            },
            PolarType::Ptr { store, load } => PolarType::ptr(f(store), f(load)),
            PolarType::Union(a, b) => PolarType::union(f(a), f(b)),
            PolarType::Inter(a, b) => PolarType::inter(f(a), f(b)),
            PolarType::Mu(b, body) => PolarType::mu(b.clone(), f(body)),
            PolarType::Var(_) | PolarType::Top | PolarType::Bottom | PolarType::Atom(_) => {
                self.clone()
            }
        }
    }

    /// Renames free variables through `rename`; bound names are untouched.
    pub fn rename_free(&self, rename: &mut impl FnMut(&str) -> String) -> PolarType {
        fn go(t: &PolarType, bound: &mut Vec<String>, rename: &mut impl FnMut(&str) -> String) -> PolarType {
            match t {
                PolarType::Var(v) if !bound.contains(v) => PolarType::Var(rename(v)),
                PolarType::Mu(b, body) => {
                    bound.push(b.clone());
                    let body = go(body, bound, rename);
                    bound.pop();
                    PolarType::mu(b.clone(), body)
                }
                _ => t.map_children(|c| go(c, bound, rename)),
            }
        }
        go(self, &mut Vec::new(), rename)
    }

    /// Syntactic equality up to consistent renaming of recursive binders.
    pub fn alpha_eq(&self, other: &PolarType) -> bool {
        fn go(a: &PolarType, b: &PolarType, env: &mut Vec<(String, String)>) -> bool {
            use PolarType::*;
            match (a, b) {
                (Var(x), Var(y)) => match env.iter().rev().find(|(l, r)| l == x || r == y) {
                    Some((l, r)) => l == x && r == y,
                    None => x == y,
                },
                (Mu(x, bx), Mu(y, by)) => {
                    env.push((x.clone(), y.clone()));
                    let r = go(bx, by, env);
                    env.pop();
                    r
                }
                (Record(fa), Record(fb)) => {
                    fa.len() == fb.len()
                        && fa.iter().zip(fb).all(|((ka, ta), (kb, tb))| ka == kb && go(ta, tb, env))
                }
                (Function { params: pa, returns: ra }, Function { params: pb, returns: rb }) => {
                    let eq = |x: &BTreeMap<u32, PolarType>, y: &BTreeMap<u32, PolarType>, env: &mut Vec<_>| {
                        x.len() == y.len()
                            && x.iter().zip(y).all(|((ka, ta), (kb, tb))| ka == kb && go(ta, tb, env))
                    };
                    eq(pa, pb, env) && eq(ra, rb, env)
                }
                (Ptr { store: sa, load: la }, Ptr { store: sb, load: lb }) => {
                    go(sa, sb, env) && go(la, lb, env)
                }
                (Union(a1, a2), Union(b1, b2)) | (Inter(a1, a2), Inter(b1, b2)) => {
                    go(a1, b1, env) && go(a2, b2, env)
                }
                (Top, Top) | (Bottom, Bottom) => true,
                (Atom(x), Atom(y)) => x == y,
                _ => false,
            }
        }
        go(self, other, &mut Vec::new())
    }
}

fn occurs_guarded(t: &PolarType, binder: &str, guarded: bool) -> bool {
    match t {
        PolarType::Var(v) => guarded && v == binder,
        PolarType::Mu(b, _) if b == binder => false,
        PolarType::Mu(_, body) => occurs_guarded(body, binder, guarded),
        PolarType::Union(a, b) | PolarType::Inter(a, b) => {
            occurs_guarded(a, binder, guarded) || occurs_guarded(b, binder, guarded)
        }
        _ => t.children().any(|(_, c)| occurs_guarded(c, binder, true)),
    }
}

fn collect_free(t: &PolarType, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match t {
        PolarType::Var(v) => {
            if !bound.contains(v) {
                out.insert(v.clone());
            }
        }
        PolarType::Mu(b, body) => {
            bound.push(b.clone());
            collect_free(body, bound, out);
            bound.pop();
        }
        _ => t.children().for_each(|(_, c)| collect_free(c, bound, out)),
    }
}

/// Deterministic source of fresh variable names, namespaced per solve.
#[derive(Clone, Debug)]
pub struct FreshNames {
    prefix: String,
    next: usize,
}

impl FreshNames {
    /// Names look like `#<namespace>_<n>`.
    pub fn new(namespace: impl fmt::Display) -> Self {
        FreshNames {
            prefix: format!("#{namespace}_"),
            next: 0,
        }
    }

    pub fn fresh(&mut self) -> String {
        let n = self.next;
        self.next += 1;
        format!("{}{}", self.prefix, n)
    }

    pub fn fresh_var(&mut self) -> PolarType {
        PolarType::Var(self.fresh())
    }
}

impl Default for FreshNames {
    fn default() -> Self {
        FreshNames::new("v")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PolarType as T;

    fn v(s: &str) -> PolarType {
        T::var(s)
    }

    fn list_mu() -> PolarType {
        T::mu("a", T::ptr(v("b"), T::field(4, 32, v("a"))))
    }

    #[test]
    fn polarity_examples() {
        let t = T::ptr(T::inter(v("a"), v("b")), T::union(v("c"), v("d")));
        assert!(t.check_polarity(Polarity::Positive));
        assert!(!t.check_polarity(Polarity::Negative));
        assert!(!T::union(v("a"), v("b")).check_polarity(Polarity::Negative));
        assert!(list_mu().check_polarity(Polarity::Negative));
        let f = T::function([(0, T::inter(v("a"), v("b")))], [(0, T::union(v("a"), v("c")))]);
        assert!(f.check_polarity(Polarity::Positive));
        assert!(!f.check_polarity(Polarity::Negative));
    }

    #[test]
    fn free_vars_examples() {
        assert_eq!(v("x").free_vars(), BTreeSet::from(["x".to_string()]));
        assert!(T::mu("a", T::ptr(v("a"), v("a"))).free_vars().is_empty());
        assert_eq!(list_mu().free_vars(), BTreeSet::from(["b".to_string()]));
    }

    #[test]
    fn unroll_examples() {
        let m = list_mu();
        let once = m.unroll().unwrap();
        assert_eq!(once, T::ptr(v("b"), T::field(4, 32, m.clone())));
        assert_eq!(v("a").unroll(), Err(TypeError::NotRecursive));
        // Unrolling the nested occurrence of the once-unrolled type equals
        // substituting the once-unrolled type into the body.
        let twice = T::ptr(v("b"), T::field(4, 32, m.unroll().unwrap()));
        assert_eq!(twice, T::ptr(v("b"), T::field(4, 32, once.clone())));
        assert_eq!(m.body_subst_check(), twice);
        assert!(once.check_polarity(Polarity::Negative));
        assert_eq!(once.free_vars(), m.free_vars());
    }

    impl PolarType {
        fn body_subst_check(&self) -> PolarType {
            let PolarType::Mu(b, body) = self else { unreachable!() };
            body.substitute(b, &self.unroll().unwrap())
        }
    }

    #[test]
    fn guardedness() {
        assert_eq!(
            T::mu("a", T::atom("int32")).check_guarded(),
            Err(TypeError::Unguarded("a".into()))
        );
        assert!(T::mu("a", v("a")).check_guarded().is_err());
        assert!(list_mu().check_guarded().is_ok());
        // Leading self-occurrence under an intersection is fine as long as
        // some occurrence is guarded.
        let t = T::mu("a", T::inter(v("a"), T::ptr(v("c"), v("a"))));
        assert!(t.check_guarded().is_ok());
    }

    #[test]
    fn substitution_avoids_capture() {
        let t = T::mu("b", T::ptr(v("a"), v("b")));
        let r = t.substitute("a", &v("b"));
        let PolarType::Mu(binder, body) = &r else { panic!() };
        assert_ne!(binder, "b");
        assert_eq!(**body, T::ptr(v("b"), v(binder)));
    }

    #[test]
    fn alpha_equivalence() {
        let a = T::mu("x", T::ptr(v("x"), v("y")));
        let b = T::mu("z", T::ptr(v("z"), v("y")));
        let c = T::mu("z", T::ptr(v("y"), v("z")));
        assert!(a.alpha_eq(&b));
        assert!(!a.alpha_eq(&c));
    }

    #[test]
    fn fresh_names_are_deterministic() {
        let mut f = FreshNames::new("s3");
        assert_eq!(f.fresh(), "#s3_0");
        assert_eq!(f.fresh(), "#s3_1");
    }

    #[test]
    fn combine_nests_right() {
        let t = T::combine(vec![v("a"), v("b"), v("c")], Polarity::Negative);
        assert_eq!(t, T::inter(v("a"), T::inter(v("b"), v("c"))));
        assert_eq!(T::combine(vec![], Polarity::Positive), T::Bottom);
    }
}
