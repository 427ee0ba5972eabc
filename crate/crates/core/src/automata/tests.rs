use std::sync::Arc;

use proptest::prelude::*;

use super::language::{language_difference, path_language};
use super::*;
use crate::biunify::ConstraintStore;
use crate::frontend::{parse_constraints, ConstraintForm};
use crate::syntax::tests::arb_type;
use crate::types::{FreshNames, PolarType as T};

fn lattice() -> Arc<AtomicLattice> {
    Arc::new(AtomicLattice::flat_default())
}

fn auto(t: &T, p: Polarity) -> TypeAutomaton {
    build_automaton(t, p, lattice()).unwrap()
}

/// Rewrites unions and intersections to the connective allowed at each position.
fn polarize(t: &T, p: Polarity) -> T {
    match t {
        T::Union(a, b) | T::Inter(a, b) => {
            let (a, b) = (polarize(a, p), polarize(b, p));
            match p {
                Polarity::Positive => T::union(a, b),
                Polarity::Negative => T::inter(a, b),
            }
        }
        T::Ptr { store, load } => T::ptr(polarize(store, !p), polarize(load, p)),
        T::Function { params, returns } => T::Function {
            params: params.iter().map(|(k, v)| (*k, polarize(v, !p))).collect(),
            returns: returns.iter().map(|(k, v)| (*k, polarize(v, p))).collect(),
        },
        T::Record(fs) => T::record(fs.iter().map(|(k, v)| (*k, polarize(v, p)))),
        T::Mu(b, body) => T::mu(b.clone(), polarize(body, p)),
        _ => t.clone(),
    }
}

fn arb_polar() -> impl Strategy<Value = (T, Polarity)> {
    (arb_type(), any::<bool>()).prop_map(|(t, pos)| {
        let p = if pos { Polarity::Positive } else { Polarity::Negative };
        (polarize(&t, p), p)
    })
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

fn label(p: Polarity, vars: &[&str], atom: &str) -> NodeLabel {
    let mut l = NodeLabel::identity(p, &lattice());
    l.vars = vars.iter().map(|v| v.to_string()).collect();
    if !atom.is_empty() {
        l.atom = Atom::new(atom);
    }
    l
}

#[test]
fn single_atom() {
    let a = auto(&T::atom("int32"), Polarity::Positive);
    assert_eq!(a.len(), 1);
    assert_eq!(a.label(0).atom, Atom::new("int32"));
    assert!(a.label(0).has_atom(a.lattice()));
}

#[test]
fn pointer_has_three_states() {
    let a = auto(&T::ptr(T::var("a"), T::var("b")), Polarity::Positive);
    assert_eq!(a.len(), 3);
    let st = a.successor(0, EdgeLabel::Store).unwrap();
    let ld = a.successor(0, EdgeLabel::Load).unwrap();
    assert_eq!(a.label(st).polarity, Polarity::Negative);
    assert_eq!(a.label(ld).polarity, Polarity::Positive);
    assert!(a.label(0).ptr);
}

#[test]
fn top_and_bottom_use_lattice_extremes() {
    let l = lattice();
    assert!(l.is_top(&auto(&T::Top, Polarity::Positive).label(0).atom));
    assert!(!auto(&T::Top, Polarity::Negative).label(0).has_atom(&l));
    assert!(l.is_bottom(&auto(&T::Bottom, Polarity::Negative).label(0).atom));
    assert!(!auto(&T::Bottom, Polarity::Positive).label(0).has_atom(&l));
}

#[test]
fn rejects_wrong_connective() {
    let t = T::inter(T::var("a"), T::var("b"));
    assert!(build_automaton(&t, Polarity::Positive, lattice()).is_err());
}

#[test]
fn joined_atoms_collapse() {
    let a = auto(&T::atom("int32"), Polarity::Positive);
    let b = auto(&T::atom("int64"), Polarity::Positive);
    let j = a.join(&b).unwrap();
    assert_eq!(j.len(), 1);
    assert!(j.lattice().is_top(&j.label(0).atom));
    let n = auto(&T::atom("int32"), Polarity::Negative)
        .join(&auto(&T::atom("int64"), Polarity::Negative))
        .unwrap();
    assert!(n.lattice().is_bottom(&n.label(0).atom));
    assert!(a.join(&auto(&T::atom("int32"), Polarity::Negative)).is_err());
}

/// The minimized automaton of the first stack slot of the list increment example.
pub(crate) fn list_inc_slot() -> TypeAutomaton {
    let l = lattice();
    let cs = parse_constraints(LIST_INC, ConstraintForm::BinSub, &l, &mut FreshNames::new("t")).unwrap();
    let mut s = ConstraintStore::new(l.clone());
    s.add_all(&cs);
    let t = s.coalesce_var("stack_slot_1", Polarity::Negative);
    build_automaton(&t, Polarity::Negative, l).unwrap().simplify().unwrap()
}

#[test]
fn list_increment_slot_minimizes_to_six_states() {
    let m = list_inc_slot();
    assert!(m.is_deterministic());
    assert_eq!(m.len(), 6, "{}", dot::to_dot(&m, "slot"));

    let neg = Polarity::Negative;
    let pos = Polarity::Positive;
    let root = m.start();
    let mut expect_root = label(neg, &["stack_slot_2"], "");
    expect_root.ptr = true;
    assert_eq!(m.label(root), &expect_root);

    // Loading offset 4 leads to a record whose field returns to the slot.
    let l0 = m.successor(root, EdgeLabel::Load).unwrap();
    let mut expect_l0 = label(neg, &["f"], "");
    expect_l0.rec_fields = [FieldKey::new(0, 32), FieldKey::new(4, 32)].into();
    assert_eq!(m.label(l0), &expect_l0);
    let lf = m.successor(l0, EdgeLabel::Rec(FieldKey::new(0, 32))).unwrap();
    assert_eq!(m.label(lf), &label(neg, &["d", "t2"], "int32"));
    let r1 = m.successor(l0, EdgeLabel::Rec(FieldKey::new(4, 32))).unwrap();
    let mut expect_r1 = label(neg, &["b", "stack_slot_2", "t1"], "");
    expect_r1.ptr = true;
    assert_eq!(m.label(r1), &expect_r1);
    assert_eq!(m.successor(r1, EdgeLabel::Load), Some(l0));

    let st = m.successor(root, EdgeLabel::Store).unwrap();
    let mut expect_st = label(pos, &["a", "c"], "");
    expect_st.rec_fields = [FieldKey::new(0, 32)].into();
    assert_eq!(m.label(st), &expect_st);
    assert_eq!(m.successor(r1, EdgeLabel::Store), Some(st));
    let sf = m.successor(st, EdgeLabel::Rec(FieldKey::new(0, 32))).unwrap();
    assert_eq!(m.label(sf), &label(pos, &["e"], "int32"));
}

#[test]
fn dot_output_lists_states_and_edges() {
    let a = auto(&T::ptr(T::var("a"), T::atom("int32")), Polarity::Positive);
    let d = dot::to_dot(&a, "p");
    assert!(d.starts_with("digraph \"p\""));
    assert!(d.contains("StoreLabel") && d.contains("LoadLabel"));
    assert_eq!(d.matches(" -> ").count(), 2);
}

#[test]
fn instantiate_renames_free_variables() {
    let a = auto(&T::ptr(T::var("a"), T::var("a")), Polarity::Positive);
    let t = instantiate(&a, &mut FreshNames::new("i"));
    let fv = t.free_vars();
    assert_eq!(fv.len(), 1);
    assert!(fv.iter().all(|v| v.starts_with("#i_")));
}

proptest! {
    #[test]
    fn determinize_preserves_language((t, p) in arb_polar()) {
        let a = auto(&t, p);
        let d = determinize(&a).unwrap();
        prop_assert!(d.is_deterministic());
        prop_assert_eq!(language_difference(&a, &d, 5).unwrap(), None);
    }

    #[test]
    fn minimize_is_idempotent_and_preserves_language((t, p) in arb_polar()) {
        let d = determinize(&auto(&t, p)).unwrap();
        let m = minimize(&d);
        prop_assert!(m.len() <= d.len());
        prop_assert_eq!(language_difference(&d, &m, 5).unwrap(), None);
        prop_assert_eq!(minimize(&m), m);
    }

    #[test]
    fn decompiled_type_has_same_language((t, p) in arb_polar()) {
        let m = auto(&t, p).simplify().unwrap();
        let back = decompile_automaton(&m, &mut FreshNames::new("d"));
        prop_assert!(back.well_formed(p).is_ok(), "{}", back);
        let again = auto(&back, p);
        prop_assert_eq!(language_difference(&m, &again, 5).unwrap(), None, "{}", back);
        prop_assert_eq!(again.simplify().unwrap(), m);
    }

    #[test]
    fn join_covers_both_sides((t, p) in arb_polar(), (u, q) in arb_polar()) {
        prop_assume!(p == q);
        let a = auto(&t, p);
        let b = auto(&u, p);
        let j = a.join(&b).unwrap();
        let lj = path_language(&j, 3).unwrap();
        let la = path_language(&a, 3).unwrap();
        let lat = lattice();
        for (path, l) in la {
            let merged = lj.get(&path).expect("path kept by join");
            prop_assert_eq!(&l.merge(merged, &lat).unwrap(), merged);
        }
    }
}
