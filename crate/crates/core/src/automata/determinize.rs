use std::collections::{BTreeMap, BTreeSet};

use super::{renumber, AutomatonError, EdgeLabel, NodeLabel, StateId, TypeAutomaton};

pub(crate) fn closure(a: &TypeAutomaton, seed: impl IntoIterator<Item = StateId>) -> BTreeSet<StateId> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<StateId> = seed.into_iter().collect();
    while let Some(s) = stack.pop() {
        if out.insert(s) {
            stack.extend(
                a.edges[s]
                    .iter()
                    .filter(|(l, _)| *l == EdgeLabel::Epsilon)
                    .map(|&(_, t)| t),
            );
        }
    }
    out
}

pub(crate) fn fold_labels(a: &TypeAutomaton, set: &BTreeSet<StateId>) -> Result<NodeLabel, AutomatonError> {
    let mut it = set.iter();
    let first = it.next().expect("nonempty state set");
    let mut label = a.labels[*first].clone();
    for s in it {
        label = label.merge(&a.labels[*s], &a.lattice)?;
    }
    Ok(label)
}

/// Subset construction over ε-closures. Each subset's label is the merge of
/// its members' labels.
pub fn determinize(a: &TypeAutomaton) -> Result<TypeAutomaton, AutomatonError> {
    let mut ids: BTreeMap<BTreeSet<StateId>, StateId> = BTreeMap::new();
    let mut sets = Vec::new();
    let mut labels = Vec::new();
    let mut edges: Vec<Vec<(EdgeLabel, StateId)>> = Vec::new();
    let start = closure(a, [a.start]);
    ids.insert(start.clone(), 0);
    sets.push(start);
    let mut i = 0;
    while i < sets.len() {
        let set = sets[i].clone();
        labels.push(fold_labels(a, &set)?);
        let mut moves: BTreeMap<EdgeLabel, BTreeSet<StateId>> = BTreeMap::new();
        for &s in &set {
            for &(l, t) in &a.edges[s] {
                if l != EdgeLabel::Epsilon {
                    moves.entry(l).or_default().insert(t);
                }
            }
        }
        let mut out = Vec::new();
        for (l, targets) in moves {
            let c = closure(a, targets);
            let id = match ids.get(&c) {
                Some(&id) => id,
                None => {
                    let id = sets.len();
                    ids.insert(c.clone(), id);
                    sets.push(c);
                    id
                }
            };
            out.push((l, id));
        }
        edges.push(out);
        i += 1;
    }
    Ok(renumber(labels, edges, 0, a.lattice.clone()))
}
