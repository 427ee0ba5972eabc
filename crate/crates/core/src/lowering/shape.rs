//! Intermediate lowered types and the identities used to merge them.

use std::collections::BTreeMap;

use crate::lattice::{Atom, AtomicLattice};
use crate::types::FieldKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergeMode {
    Meet,
    Join,
}

/// The constructor a lowered node is built from, in priority order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Constructor {
    Record,
    Pointer,
    Function,
    Atom,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    /// No constructor known. Neutral for both merges.
    Unknown,
    Atom(Atom),
    Ptr { store: Box<Shape>, load: Box<Shape> },
    Record(BTreeMap<FieldKey, Shape>),
    Func { params: BTreeMap<u32, Shape>, returns: BTreeMap<u32, Shape> },
    /// Reference to a loop-breaking name.
    Named(String),
}

impl Shape {
    pub fn ptr(store: Shape, load: Shape) -> Self {
        Shape::Ptr { store: Box::new(store), load: Box::new(load) }
    }

    fn rank(&self) -> Option<Constructor> {
        match self {
            Shape::Record(_) => Some(Constructor::Record),
            Shape::Ptr { .. } => Some(Constructor::Pointer),
            Shape::Func { .. } => Some(Constructor::Function),
            Shape::Atom(_) => Some(Constructor::Atom),
            Shape::Unknown | Shape::Named(_) => None,
        }
    }

    /// The pointee a C pointer gets: the store side met with the load side.
    pub fn pointee(store: &Shape, load: &Shape, lattice: &AtomicLattice) -> Shape {
        merge(store, load, MergeMode::Meet, lattice)
    }
}

/// Merges two shapes. Differing constructors resolve by priority, and a
/// named reference absorbs anything but `Unknown`.
pub fn merge(a: &Shape, b: &Shape, mode: MergeMode, lattice: &AtomicLattice) -> Shape {
    match (a, b) {
        (Shape::Unknown, x) | (x, Shape::Unknown) => x.clone(),
        (Shape::Named(x), Shape::Named(y)) => Shape::Named(x.min(y).clone()),
        (Shape::Named(_), _) => a.clone(),
        (_, Shape::Named(_)) => b.clone(),
        (Shape::Atom(x), Shape::Atom(y)) => {
            let r = match mode {
                MergeMode::Meet => lattice.meet_atoms(x, y),
                MergeMode::Join => lattice.join_atoms(x, y),
            };
            r.map(Shape::Atom).unwrap_or(Shape::Unknown)
        }
        (Shape::Record(x), Shape::Record(y)) => Shape::Record(merge_records(x, y, mode, lattice)),
        (Shape::Ptr { store: a1, load: b1 }, Shape::Ptr { store: c1, load: d1 }) => {
            let (s, l) = merge_pointers((a1, b1), (c1, d1), mode, lattice);
            Shape::ptr(s, l)
        }
        (Shape::Func { params: p1, returns: r1 }, Shape::Func { params: p2, returns: r2 }) => {
            let (params, returns) = merge_functions((p1, r1), (p2, r2), mode, lattice);
            Shape::Func { params, returns }
        }
        _ => {
            if a.rank() <= b.rank() {
                a.clone()
            } else {
                b.clone()
            }
        }
    }
}

/// Meet keeps every field and merges shared keys; join keeps only shared keys.
pub fn merge_records(
    a: &BTreeMap<FieldKey, Shape>,
    b: &BTreeMap<FieldKey, Shape>,
    mode: MergeMode,
    lattice: &AtomicLattice,
) -> BTreeMap<FieldKey, Shape> {
    let mut out = BTreeMap::new();
    for (k, x) in a {
        match b.get(k) {
            Some(y) => {
                out.insert(*k, merge(x, y, mode, lattice));
            }
            None if mode == MergeMode::Meet => {
                out.insert(*k, x.clone());
            }
            None => {}
        }
    }
    if mode == MergeMode::Meet {
        for (k, y) in b {
            out.entry(*k).or_insert_with(|| y.clone());
        }
    }
    out
}

/// `ptr(a,b) ⊓ ptr(c,d) = ptr((a ⊔ c) ⊓ (b ⊓ d), b ⊓ d)`; the join is
/// `ptr(a ⊓ c, b ⊔ d)`.
pub fn merge_pointers(
    (a, b): (&Shape, &Shape),
    (c, d): (&Shape, &Shape),
    mode: MergeMode,
    lattice: &AtomicLattice,
) -> (Shape, Shape) {
    match mode {
        MergeMode::Meet => {
            let load = merge(b, d, MergeMode::Meet, lattice);
            let store = merge(&merge(a, c, MergeMode::Join, lattice), &load, MergeMode::Meet, lattice);
            (store, load)
        }
        MergeMode::Join => (merge(a, c, MergeMode::Meet, lattice), merge(b, d, MergeMode::Join, lattice)),
    }
}

type Slots = BTreeMap<u32, Shape>;

/// Meet joins parameters and returns at shared indices and keeps the rest.
/// Join meets shared parameters, keeps all parameters, and keeps only shared
/// returns.
pub fn merge_functions(
    (p1, r1): (&Slots, &Slots),
    (p2, r2): (&Slots, &Slots),
    mode: MergeMode,
    lattice: &AtomicLattice,
) -> (Slots, Slots) {
    let slots = |x: &Slots, y: &Slots, m: MergeMode, keep_all: bool| {
        let mut out = Slots::new();
        for (k, s) in x {
            match y.get(k) {
                Some(t) => {
                    out.insert(*k, merge(s, t, m, lattice));
                }
                None if keep_all => {
                    out.insert(*k, s.clone());
                }
                None => {}
            }
        }
        if keep_all {
            for (k, t) in y {
                out.entry(*k).or_insert_with(|| t.clone());
            }
        }
        out
    };
    match mode {
        MergeMode::Meet => (slots(p1, p2, MergeMode::Join, true), slots(r1, r2, MergeMode::Join, true)),
        MergeMode::Join => (slots(p1, p2, MergeMode::Meet, true), slots(r1, r2, MergeMode::Join, false)),
    }
}
