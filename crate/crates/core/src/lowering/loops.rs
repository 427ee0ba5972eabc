use std::collections::BTreeMap;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::automata::{EdgeLabel, NodeLabel, StateId, TypeAutomaton};

/// An acyclic automaton whose back edges point at placeholder states.
#[derive(Clone, Debug)]
pub struct LoopFree {
    pub automaton: TypeAutomaton,
    /// Loop name to the state it stands for.
    pub names: BTreeMap<String, StateId>,
    /// Placeholder state to its loop name.
    pub placeholders: BTreeMap<StateId, String>,
}

fn cyclic_edges(labels_len: usize, edges: &[Vec<(EdgeLabel, StateId)>]) -> Vec<(StateId, EdgeLabel, StateId)> {
    let mut g = DiGraph::<(), ()>::with_capacity(labels_len, 0);
    for _ in 0..labels_len {
        g.add_node(());
    }
    for (s, es) in edges.iter().enumerate() {
        for &(_, t) in es {
            g.add_edge(NodeIndex::new(s), NodeIndex::new(t), ());
        }
    }
    let mut comp = vec![usize::MAX; labels_len];
    let mut sizes = Vec::new();
    for (i, scc) in tarjan_scc(&g).into_iter().enumerate() {
        sizes.push(scc.len());
        for n in scc {
            comp[n.index()] = i;
        }
    }
    let mut out = Vec::new();
    for (s, es) in edges.iter().enumerate() {
        for &(l, t) in es {
            if comp[s] == comp[t] && (s == t || sizes[comp[s]] > 1) {
                out.push((s, l, t));
            }
        }
    }
    out
}

/// Redirects edges inside strongly connected components to named placeholder
/// states until no cycle is left. Edges from a record field into a pointer
/// state go first; ties break on source state, then label spelling.
pub fn break_loops(a: &TypeAutomaton) -> LoopFree {
    let mut labels: Vec<NodeLabel> = (0..a.len()).map(|s| a.label(s).clone()).collect();
    let mut edges: Vec<Vec<(EdgeLabel, StateId)>> = (0..a.len()).map(|s| a.edges(s).to_vec()).collect();
    let mut names = BTreeMap::new();
    let mut placeholder_of: BTreeMap<StateId, StateId> = BTreeMap::new();
    let mut placeholders = BTreeMap::new();
    loop {
        let cyc = cyclic_edges(labels.len(), &edges);
        let Some(&(s, l, t)) = cyc
            .iter()
            .min_by_key(|(s, l, t)| (!(matches!(l, EdgeLabel::Rec(_)) && labels[*t].ptr), *s, l.to_string(), *t))
        else {
            break;
        };
        let ph = *placeholder_of.entry(t).or_insert_with(|| {
            let name = format!("t{}", names.len());
            names.insert(name.clone(), t);
            labels.push(NodeLabel::identity(labels[t].polarity, a.lattice()));
            edges.push(Vec::new());
            placeholders.insert(labels.len() - 1, name);
            labels.len() - 1
        });
        for e in edges[s].iter_mut() {
            if *e == (l, t) {
                e.1 = ph;
            }
        }
        edges[s].sort();
    }
    LoopFree {
        automaton: TypeAutomaton::from_parts(labels, edges, a.start(), a.lattice().clone()),
        names,
        placeholders,
    }
}
