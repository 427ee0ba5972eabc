use std::collections::{BTreeMap, HashMap};

use super::{EdgeLabel, StateId, TypeAutomaton};
use crate::types::{FreshNames, Polarity, PolarType};

struct Decompiler<'a> {
    a: &'a TypeAutomaton,
    fresh: &'a mut FreshNames,
    on_stack: HashMap<StateId, (usize, Option<String>)>,
    memo: HashMap<StateId, PolarType>,
    low: usize,
}

fn identity_type(p: Polarity) -> PolarType {
    match p {
        Polarity::Positive => PolarType::Bottom,
        Polarity::Negative => PolarType::Top,
    }
}

impl Decompiler<'_> {
    fn child(&mut self, s: StateId, l: EdgeLabel, p: Polarity) -> PolarType {
        match self.a.successor(s, l) {
            Some(t) => self.go(t),
            None => identity_type(if l.flips() { !p } else { p }),
        }
    }

    fn go(&mut self, s: StateId) -> PolarType {
        if let Some((depth, binder)) = self.on_stack.get_mut(&s) {
            let name = binder.get_or_insert_with(|| self.fresh.fresh()).clone();
            self.low = self.low.min(*depth);
            return PolarType::Var(name);
        }
        if let Some(t) = self.memo.get(&s) {
            return t.clone();
        }
        let depth = self.on_stack.len();
        self.on_stack.insert(s, (depth, None));
        let saved_low = std::mem::replace(&mut self.low, usize::MAX);

        let label = self.a.labels[s].clone();
        let p = label.polarity;
        let lattice = self.a.lattice.clone();
        let mut parts = Vec::new();
        if label.has_record() {
            let fields = label
                .rec_fields
                .iter()
                .map(|k| (*k, self.child(s, EdgeLabel::Rec(*k), p)))
                .collect();
            parts.push(PolarType::Record(fields));
        }
        if label.ptr {
            let store = self.child(s, EdgeLabel::Store, p);
            let load = self.child(s, EdgeLabel::Load, p);
            parts.push(PolarType::ptr(store, load));
        }
        if label.has_function() {
            let params: BTreeMap<_, _> = label
                .fn_ins
                .iter()
                .map(|n| (*n, self.child(s, EdgeLabel::FnIn(*n), p)))
                .collect();
            let returns: BTreeMap<_, _> = label
                .fn_outs
                .iter()
                .map(|n| (*n, self.child(s, EdgeLabel::FnOut(*n), p)))
                .collect();
            parts.push(PolarType::Function { params, returns });
        }
        if label.has_atom(&lattice) {
            parts.push(if lattice.is_top(&label.atom) {
                PolarType::Top
            } else if lattice.is_bottom(&label.atom) {
                PolarType::Bottom
            } else {
                PolarType::Atom(label.atom.clone())
            });
        }
        parts.extend(label.vars.iter().map(PolarType::var));
        let body = PolarType::combine(parts, p);

        let (_, binder) = self.on_stack.remove(&s).expect("state on stack");
        let inner_low = self.low;
        self.low = saved_low.min(if inner_low < depth { inner_low } else { usize::MAX });
        let result = match binder {
            Some(b) => PolarType::mu(b, body),
            None => body,
        };
        if inner_low >= depth {
            self.memo.insert(s, result.clone());
        }
        result
    }
}

/// Reads a deterministic automaton back as a polar type. Cycles become μ
/// binders named from `fresh`.
pub fn decompile_automaton(a: &TypeAutomaton, fresh: &mut FreshNames) -> PolarType {
    Decompiler {
        a,
        fresh,
        on_stack: HashMap::new(),
        memo: HashMap::new(),
        low: usize::MAX,
    }
    .go(a.start)
}

/// Decompiles with every variable, free or bound, renamed apart.
pub fn instantiate(a: &TypeAutomaton, fresh: &mut FreshNames) -> PolarType {
    let t = decompile_automaton(a, fresh);
    let mut map: HashMap<String, String> = HashMap::new();
    t.rename_free(&mut |v: &str| map.entry(v.to_string()).or_insert_with(|| fresh.fresh()).clone())
}
