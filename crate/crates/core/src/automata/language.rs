//! Depth-bounded path languages, computed by direct simulation of possibly
//! nondeterministic automata. Used to compare automata observationally.

use std::collections::{BTreeMap, BTreeSet};

use super::determinize::{closure, fold_labels};
use super::{AutomatonError, EdgeLabel, NodeLabel, StateId, TypeAutomaton};

/// Every label path of length at most `depth` from the start, with the merge
/// of the labels of all states the path can reach.
pub fn path_language(
    a: &TypeAutomaton,
    depth: usize,
) -> Result<BTreeMap<Vec<EdgeLabel>, NodeLabel>, AutomatonError> {
    let mut out = BTreeMap::new();
    let mut frontier = vec![(Vec::new(), closure(a, [a.start]))];
    for d in 0..=depth {
        let mut next = Vec::new();
        for (path, set) in frontier {
            out.insert(path.clone(), fold_labels(a, &set)?);
            if d == depth {
                continue;
            }
            let mut moves: BTreeMap<EdgeLabel, BTreeSet<StateId>> = BTreeMap::new();
            for &s in &set {
                for &(l, t) in &a.edges[s] {
                    if l != EdgeLabel::Epsilon {
                        moves.entry(l).or_default().insert(t);
                    }
                }
            }
            for (l, ts) in moves {
                let mut p = path.clone();
                p.push(l);
                next.push((p, closure(a, ts)));
            }
        }
        frontier = next;
    }
    Ok(out)
}

/// The first path on which the two automata disagree, if any.
pub fn language_difference(
    a: &TypeAutomaton,
    b: &TypeAutomaton,
    depth: usize,
) -> Result<Option<Vec<EdgeLabel>>, AutomatonError> {
    let la = path_language(a, depth)?;
    let lb = path_language(b, depth)?;
    let keys: BTreeSet<_> = la.keys().chain(lb.keys()).collect();
    let diff = keys.into_iter().find(|k| la.get(*k) != lb.get(*k)).cloned();
    Ok(diff)
}

pub fn language_equivalent(a: &TypeAutomaton, b: &TypeAutomaton, depth: usize) -> Result<bool, AutomatonError> {
    Ok(language_difference(a, b, depth)?.is_none())
}
