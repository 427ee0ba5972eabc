//! Helpers and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use binsub::automata::{EdgeLabel, NodeLabel};
use binsub::frontend::SubtypeConstraint;
use binsub::lattice::{Atom, AtomicLattice};
use binsub::types::{FieldKey, PolarType, Polarity};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn lattice() -> Arc<AtomicLattice> {
    Arc::new(AtomicLattice::flat_default())
}

pub fn testdata(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata").join(name)
}

pub fn read_testdata(name: &str) -> String {
    std::fs::read_to_string(testdata(name)).unwrap()
}

fn flip(p: Polarity) -> Polarity {
    match p {
        Polarity::Positive => Polarity::Negative,
        Polarity::Negative => Polarity::Positive,
    }
}

/// Whether `got` equals `want` after a consistent, injective renaming of
/// the variables of `got`. Variables in `keep` must match by name.
pub fn equal_up_to_renaming(
    got: &[SubtypeConstraint],
    want: &[SubtypeConstraint],
    keep: &BTreeSet<&str>,
) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} constraints, expected {}", got.len(), want.len()));
    }
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        let ok = same_shape(&g.lhs, &w.lhs, &mut fwd, &mut back, keep)
            && same_shape(&g.rhs, &w.rhs, &mut fwd, &mut back, keep);
        if !ok {
            return Err(format!("line {}: `{g}` does not match `{w}`", i + 1));
        }
    }
    Ok(())
}

fn same_shape(
    a: &PolarType,
    b: &PolarType,
    fwd: &mut BTreeMap<String, String>,
    back: &mut BTreeMap<String, String>,
    keep: &BTreeSet<&str>,
) -> bool {
    use PolarType as T;
    match (a, b) {
        (T::Var(x), T::Var(y)) => {
            if keep.contains(x.as_str()) || keep.contains(y.as_str()) {
                return x == y;
            }
            let f = fwd.entry(x.clone()).or_insert_with(|| y.clone()).clone();
            let g = back.entry(y.clone()).or_insert_with(|| x.clone()).clone();
            &f == y && &g == x
        }
        (T::Atom(x), T::Atom(y)) => x == y,
        (T::Top, T::Top) | (T::Bottom, T::Bottom) => true,
        (T::Ptr { store: s1, load: l1 }, T::Ptr { store: s2, load: l2 }) => {
            same_shape(s1, s2, fwd, back, keep) && same_shape(l1, l2, fwd, back, keep)
        }
        (T::Record(x), T::Record(y)) => {
            x.len() == y.len()
                && x.iter().zip(y).all(|((k1, t1), (k2, t2))| k1 == k2 && same_shape(t1, t2, fwd, back, keep))
        }
        (T::Function { params: p1, returns: r1 }, T::Function { params: p2, returns: r2 }) => {
            let slots = |x: &BTreeMap<u32, PolarType>, y: &BTreeMap<u32, PolarType>, fwd: &mut _, back: &mut _| {
                x.len() == y.len() && x.iter().zip(y).all(|((k1, t1), (k2, t2))| k1 == k2 && same_shape(t1, t2, fwd, back, keep))
            };
            slots(p1, p2, fwd, back) && slots(r1, r2, fwd, back)
        }
        (T::Union(a1, b1), T::Union(a2, b2)) | (T::Inter(a1, b1), T::Inter(a2, b2)) => {
            same_shape(a1, a2, fwd, back, keep) && same_shape(b1, b2, fwd, back, keep)
        }
        _ => false,
    }
}

/// A canonical rendering that ignores how unions and intersections are
/// associated or ordered and what recursive binders are called.
pub fn canonical(t: &PolarType) -> String {
    fn go(t: &PolarType, binders: &mut Vec<String>) -> String {
        use PolarType as T;
        match t {
            T::Var(v) => match binders.iter().rposition(|b| b == v) {
                Some(i) => format!("#{i}"),
                None => v.clone(),
            },
            T::Atom(a) => a.name().to_string(),
            T::Top => "top".into(),
            T::Bottom => "bot".into(),
            T::Ptr { store, load } => format!("ptr({},{})", go(store, binders), go(load, binders)),
            T::Record(fs) => {
                let parts: Vec<String> = fs.iter().map(|(k, t)| format!("{k}:{}", go(t, binders))).collect();
                format!("{{{}}}", parts.join(","))
            }
            T::Function { params, returns } => {
                let ps: Vec<String> = params.iter().map(|(k, t)| format!("{k}:{}", go(t, binders))).collect();
                let rs: Vec<String> = returns.iter().map(|(k, t)| format!("{k}:{}", go(t, binders))).collect();
                format!("({})->({})", ps.join(","), rs.join(","))
            }
            T::Union(..) | T::Inter(..) => {
                let union = matches!(t, T::Union(..));
                let mut parts = BTreeSet::new();
                let mut stack = vec![t];
                while let Some(x) = stack.pop() {
                    match (x, union) {
                        (T::Union(a, b), true) | (T::Inter(a, b), false) => {
                            stack.push(a);
                            stack.push(b);
                        }
                        _ => {
                            parts.insert(go(x, binders));
                        }
                    }
                }
                let parts: Vec<String> = parts.into_iter().collect();
                format!("{}[{}]", if union { "U" } else { "I" }, parts.join(","))
            }
            T::Mu(b, body) => {
                binders.push(b.clone());
                let inner = go(body, binders);
                let i = binders.len() - 1;
                binders.pop();
                format!("mu#{i}.{inner}")
            }
        }
    }
    go(t, &mut Vec::new())
}

fn subst(t: &PolarType, name: &str, with: &PolarType) -> PolarType {
    use PolarType as T;
    let s = |x: &PolarType| subst(x, name, with);
    match t {
        T::Var(v) if v == name => with.clone(),
        T::Mu(b, _) if b == name => t.clone(),
        T::Mu(b, body) => T::Mu(b.clone(), Box::new(s(body))),
        T::Ptr { store, load } => T::ptr(s(store), s(load)),
        T::Record(fs) => T::Record(fs.iter().map(|(k, x)| (*k, s(x))).collect()),
        T::Function { params, returns } => T::Function {
            params: params.iter().map(|(k, x)| (*k, s(x))).collect(),
            returns: returns.iter().map(|(k, x)| (*k, s(x))).collect(),
        },
        T::Union(a, b) => T::union(s(a), s(b)),
        T::Inter(a, b) => T::inter(s(a), s(b)),
        _ => t.clone(),
    }
}

fn identity_label(p: Polarity, l: &AtomicLattice) -> NodeLabel {
    NodeLabel {
        polarity: p,
        vars: BTreeSet::new(),
        fn_ins: BTreeSet::new(),
        fn_outs: BTreeSet::new(),
        rec_fields: BTreeSet::new(),
        ptr: false,
        atom: if p == Polarity::Positive { l.bottom() } else { l.top() },
    }
}

fn merge_atom(p: Polarity, a: &Atom, b: &Atom, l: &AtomicLattice) -> Atom {
    let r = if p == Polarity::Positive { l.join_atoms(a, b) } else { l.meet_atoms(a, b) };
    r.unwrap()
}

/// Unfolds connectives and recursive binders until every element has a
/// constructor, variable or atom at its head.
fn heads(start: BTreeSet<PolarType>) -> BTreeSet<PolarType> {
    let mut out = BTreeSet::new();
    let mut todo: Vec<PolarType> = start.into_iter().collect();
    while let Some(t) = todo.pop() {
        match &t {
            PolarType::Union(a, b) | PolarType::Inter(a, b) => {
                todo.push((**a).clone());
                todo.push((**b).clone());
            }
            PolarType::Mu(b, body) => todo.push(subst(body, b, &t)),
            _ => {
                out.insert(t);
            }
        }
    }
    out
}

fn fold(ts: &BTreeSet<PolarType>, p: Polarity, l: &AtomicLattice) -> NodeLabel {
    let mut acc = identity_label(p, l);
    for t in ts {
        match t {
            PolarType::Var(v) => {
                acc.vars.insert(v.clone());
            }
            PolarType::Atom(a) => acc.atom = merge_atom(p, &acc.atom, a, l),
            PolarType::Top if p == Polarity::Positive => acc.atom = l.top(),
            PolarType::Bottom if p == Polarity::Negative => acc.atom = l.bottom(),
            PolarType::Ptr { .. } => acc.ptr = true,
            PolarType::Record(fs) => acc.rec_fields.extend(fs.keys().copied()),
            PolarType::Function { params, returns } => {
                acc.fn_ins.extend(params.keys().copied());
                acc.fn_outs.extend(returns.keys().copied());
            }
            _ => {}
        }
    }
    acc
}

fn moves(ts: &BTreeSet<PolarType>) -> BTreeMap<EdgeLabel, BTreeSet<PolarType>> {
    let mut out: BTreeMap<EdgeLabel, BTreeSet<PolarType>> = BTreeMap::new();
    let mut add = |l: EdgeLabel, t: &PolarType| {
        out.entry(l).or_default().insert(t.clone());
    };
    for t in ts {
        match t {
            PolarType::Ptr { store, load } => {
                add(EdgeLabel::Store, store);
                add(EdgeLabel::Load, load);
            }
            PolarType::Record(fs) => fs.iter().for_each(|(k, x)| add(EdgeLabel::Rec(*k), x)),
            PolarType::Function { params, returns } => {
                params.iter().for_each(|(k, x)| add(EdgeLabel::FnIn(*k), x));
                returns.iter().for_each(|(k, x)| add(EdgeLabel::FnOut(*k), x));
            }
            _ => {}
        }
    }
    out
}

/// Every path of length at most `depth` into `t` read at polarity `p`, with
/// the merge of the labels of all subterms the path reaches. Computed on
/// the term itself, with no automaton involved.
pub fn term_language(t: &PolarType, p: Polarity, depth: usize, l: &AtomicLattice) -> BTreeMap<Vec<EdgeLabel>, NodeLabel> {
    let mut out = BTreeMap::new();
    let mut frontier = vec![(Vec::new(), p, heads(BTreeSet::from([t.clone()])))];
    for d in 0..=depth {
        let mut next = Vec::new();
        for (path, q, set) in frontier {
            out.insert(path.clone(), fold(&set, q, l));
            if d == depth {
                continue;
            }
            for (label, ts) in moves(&set) {
                let mut np = path.clone();
                np.push(label);
                let nq = if label.flips() { flip(q) } else { q };
                next.push((np, nq, heads(ts)));
            }
        }
        frontier = next;
    }
    out
}

const ATOMS: [&str; 4] = ["int32", "int64", "float32", "uint8"];

/// A random well-formed, guarded polar type of depth at most `depth`.
pub fn random_type(seed: u64, p: Polarity, depth: usize) -> PolarType {
    fn go(rng: &mut StdRng, p: Polarity, depth: usize, binders: &mut Vec<(String, Polarity)>, guard: bool) -> PolarType {
        use PolarType as T;
        if !guard && (depth <= 1 || rng.random_bool(0.3)) {
            let own: Vec<String> = binders.iter().filter(|(_, q)| *q == p).map(|(b, _)| b.clone()).collect();
            return match rng.random_range(0..10) {
                0..3 => T::var(["a", "b", "c"][rng.random_range(0..3)]),
                3..5 if !own.is_empty() => T::var(own[rng.random_range(0..own.len())].clone()),
                3..8 => T::atom(ATOMS[rng.random_range(0..ATOMS.len())]),
                8 => T::Top,
                _ => T::Bottom,
            };
        }
        let d = depth.saturating_sub(1);
        let choice = if guard { rng.random_range(0..3) } else { rng.random_range(0..5) };
        match choice {
            0 => T::ptr(go(rng, flip(p), d, binders, false), go(rng, p, d, binders, false)),
            1 => {
                let n = rng.random_range(1..3);
                T::record((0..n).map(|_| (FieldKey::new(4 * rng.random_range(0..3), 32), go(rng, p, d, binders, false))))
            }
            2 => {
                let np = rng.random_range(0..3);
                let nr = rng.random_range(0..2);
                let params: Vec<(u32, PolarType)> = (0..np).map(|i| (i, go(rng, flip(p), d, binders, false))).collect();
                let returns: Vec<(u32, PolarType)> = (0..nr).map(|i| (i, go(rng, p, d, binders, false))).collect();
                T::function(params, returns)
            }
            3 => {
                let (a, b) = (go(rng, p, d, binders, false), go(rng, p, d, binders, false));
                if p == Polarity::Positive {
                    T::union(a, b)
                } else {
                    T::inter(a, b)
                }
            }
            _ => {
                let name = format!("r{}", binders.len());
                binders.push((name.clone(), p));
                let body = go(rng, p, d, binders, true);
                binders.pop();
                T::mu(name, body)
            }
        }
    }
    go(&mut StdRng::seed_from_u64(seed), p, depth, &mut Vec::new(), false)
}
