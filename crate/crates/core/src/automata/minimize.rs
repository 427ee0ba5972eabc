use std::collections::{BTreeSet, HashMap};

use super::{renumber, EdgeLabel, NodeLabel, StateId, TypeAutomaton};

/// Hopcroft partition refinement. States start out grouped by their full
/// label, so merged states always agree on polarity, constructors, variables
/// and atom. Missing transitions go to an implicit sink.
pub fn minimize(a: &TypeAutomaton) -> TypeAutomaton {
    let n = a.len();
    let sink = n;
    let alphabet: Vec<EdgeLabel> = a
        .transitions()
        .map(|(_, l, _)| l)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let letter: HashMap<EdgeLabel, usize> = alphabet.iter().enumerate().map(|(i, l)| (*l, i)).collect();

    // inverse[c][q] = states with a c-edge into q (the sink loops to itself).
    let mut inverse = vec![vec![Vec::new(); n + 1]; alphabet.len()];
    for (c, inv) in inverse.iter_mut().enumerate() {
        for s in 0..n {
            let t = a.successor(s, alphabet[c]).unwrap_or(sink);
            inv[t].push(s);
        }
        inv[sink].push(sink);
    }

    let mut block_of = vec![0usize; n + 1];
    let mut blocks: Vec<Vec<StateId>> = Vec::new();
    let mut by_label: HashMap<&NodeLabel, usize> = HashMap::new();
    for (s, label) in a.labels.iter().enumerate() {
        let b = *by_label.entry(label).or_insert_with(|| {
            blocks.push(Vec::new());
            blocks.len() - 1
        });
        blocks[b].push(s);
        block_of[s] = b;
    }
    blocks.push(vec![sink]);
    block_of[sink] = blocks.len() - 1;

    let mut pending: BTreeSet<(usize, usize)> = BTreeSet::new();
    for b in 0..blocks.len() {
        for c in 0..alphabet.len() {
            pending.insert((b, c));
        }
    }
    while let Some((splitter, c)) = pending.pop_first() {
        let mut touched: HashMap<usize, Vec<StateId>> = HashMap::new();
        for &q in &blocks[splitter] {
            for &p in &inverse[c][q] {
                touched.entry(block_of[p]).or_default().push(p);
            }
        }
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort();
        for (y, mut inside) in touched {
            inside.sort_unstable();
            inside.dedup();
            if inside.len() == blocks[y].len() {
                continue;
            }
            let inside_set: BTreeSet<_> = inside.iter().copied().collect();
            let outside: Vec<StateId> = blocks[y].iter().copied().filter(|s| !inside_set.contains(s)).collect();
            let z = blocks.len();
            blocks[y] = inside;
            for &s in &outside {
                block_of[s] = z;
            }
            blocks.push(outside);
            for c2 in 0..alphabet.len() {
                if pending.contains(&(y, c2)) || blocks[z].len() < blocks[y].len() {
                    pending.insert((z, c2));
                } else {
                    pending.insert((y, c2));
                }
            }
        }
    }

    let sink_block = block_of[sink];
    let mut labels = Vec::with_capacity(blocks.len());
    let mut edges = Vec::with_capacity(blocks.len());
    for block in &blocks {
        let rep = block[0];
        if rep == sink {
            labels.push(NodeLabel::identity(a.polarity(), &a.lattice));
            edges.push(Vec::new());
            continue;
        }
        labels.push(a.labels[rep].clone());
        edges.push(
            a.edges[rep]
                .iter()
                .filter(|(l, _)| letter.contains_key(l))
                .map(|&(l, t)| (l, block_of[t]))
                .filter(|&(_, b)| b != sink_block)
                .collect(),
        );
    }
    renumber(labels, edges, block_of[a.start], a.lattice.clone())
}
