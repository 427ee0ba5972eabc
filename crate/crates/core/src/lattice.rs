//! Finite lattice of atomic types.
//!
//! The lattice is loaded from a small line-oriented config:
//!
//! ```text
//! # comment
//! atom int32 32
//! leq int32 top_a
//! top top_a
//! bottom bot_a
//! ```
//!
//! `leq` pairs are closed reflexively and transitively at load; the Hasse
//! diagram is recomputed from the closure so redundant pairs are harmless.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of an element of the atomic lattice.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Atom(pub String);

impl Atom {
    pub fn new(name: impl Into<String>) -> Self {
        Atom(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Atom {
    fn from(s: &str) -> Self {
        Atom(s.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("unknown atom `{0}`")]
    UnknownAtom(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("lattice has no {0} element declared")]
    MissingExtreme(&'static str),
    #[error("order is not antisymmetric: `{0}` and `{1}` are mutually related")]
    Cycle(String, String),
    #[error("`{0}` is not below the declared top")]
    NotBelowTop(String),
    #[error("`{0}` is not above the declared bottom")]
    NotAboveBottom(String),
    #[error("`{a}` and `{b}` have no unique {which}")]
    NotALattice {
        a: String,
        b: String,
        which: &'static str,
    },
    #[error("i/o error reading lattice: {0}")]
    Io(String),
}

/// An immutable, validated finite lattice of atoms.
#[derive(Clone, Debug)]
pub struct AtomicLattice {
    names: Vec<String>,
    widths: Vec<Option<u32>>,
    index: BTreeMap<String, usize>,
    /// `leq[a][b]` iff a ⊑ b, reflexive-transitive closure.
    leq: Vec<Vec<bool>>,
    join: Vec<Vec<usize>>,
    meet: Vec<Vec<usize>>,
    /// Covering relation: `covers_up[a]` lists the elements immediately above `a`.
    covers_up: Vec<Vec<usize>>,
    top: usize,
    bottom: usize,
    diameter: u32,
}

pub const DEFAULT_LATTICE: &str = "\
# Flat lattice of machine atoms between bot_a and top_a.
top top_a
bottom bot_a
atom bool 8
atom int8 8
atom int16 16
atom int32 32
atom int64 64
atom uint8 8
atom uint16 16
atom uint32 32
atom uint64 64
atom float32 32
atom float64 64
atom code
";

impl Default for AtomicLattice {
    fn default() -> Self {
        Self::flat_default()
    }
}

impl AtomicLattice {
    /// The stock flat lattice; every declared atom sits between `bot_a` and `top_a`.
    pub fn flat_default() -> Self {
        Self::parse(DEFAULT_LATTICE).expect("default lattice is valid")
    }

    pub fn load(path: &Path) -> Result<Self, LatticeError> {
        let text = std::fs::read_to_string(path).map_err(|e| LatticeError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    /// Parses and validates a lattice config. Atoms with no `leq` line are
    /// placed directly between bottom and top.
    pub fn parse(text: &str) -> Result<Self, LatticeError> {
        let mut names: Vec<String> = Vec::new();
        let mut widths: Vec<Option<u32>> = Vec::new();
        let mut index = BTreeMap::new();
        let mut pairs: Vec<(String, String, usize)> = Vec::new();
        let mut top = None;
        let mut bottom = None;

        let mut declare = |name: &str, width: Option<u32>, names: &mut Vec<String>, widths: &mut Vec<Option<u32>>| {
            if let Some(&i) = index.get(name) {
                if width.is_some() {
                    widths[i] = width;
                }
                i
            } else {
                let i = names.len();
                names.push(name.to_string());
                widths.push(width);
                index.insert(name.to_string(), i);
                i
            }
        };

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            let syntax = |msg: &str| LatticeError::Syntax {
                line: line_no,
                msg: msg.to_string(),
            };
            match words.as_slice() {
                ["atom", name] => {
                    declare(name, None, &mut names, &mut widths);
                }
                ["atom", name, w] => {
                    let w: u32 = w.parse().map_err(|_| syntax("width must be a natural number"))?;
                    declare(name, Some(w), &mut names, &mut widths);
                }
                ["leq", a, b] => pairs.push((a.to_string(), b.to_string(), line_no)),
                ["top", name] => top = Some(declare(name, None, &mut names, &mut widths)),
                ["bottom", name] => bottom = Some(declare(name, None, &mut names, &mut widths)),
                _ => return Err(syntax("expected `atom`, `leq`, `top` or `bottom`")),
            }
        }
        let index: BTreeMap<String, usize> =
            names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let top = top.ok_or(LatticeError::MissingExtreme("top"))?;
        let bottom = bottom.ok_or(LatticeError::MissingExtreme("bottom"))?;

        let n = names.len();
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        for (a, b, _) in &pairs {
            let ia = *index.get(a).ok_or_else(|| LatticeError::UnknownAtom(a.clone()))?;
            let ib = *index.get(b).ok_or_else(|| LatticeError::UnknownAtom(b.clone()))?;
            leq[ia][ib] = true;
        }
        // Implicit placement: every element is above bottom and below top.
        leq[bottom].fill(true);
        for row in &mut leq {
            row[top] = true;
        }
        // Warshall closure.
        for k in 0..n {
            let through = leq[k].clone();
            for row in leq.iter_mut().filter(|r| r[k]) {
                for (x, &y) in row.iter_mut().zip(&through) {
                    *x |= y;
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if leq[i][j] && leq[j][i] {
                    return Err(LatticeError::Cycle(names[i].clone(), names[j].clone()));
                }
            }
        }
        for i in 0..n {
            if !leq[i][top] {
                return Err(LatticeError::NotBelowTop(names[i].clone()));
            }
            if !leq[bottom][i] {
                return Err(LatticeError::NotAboveBottom(names[i].clone()));
            }
        }

        let mut join = vec![vec![0; n]; n];
        let mut meet = vec![vec![0; n]; n];
        for a in 0..n {
            for b in 0..n {
                join[a][b] = least_of(&leq, (0..n).filter(|&c| leq[a][c] && leq[b][c])).ok_or_else(|| {
                    LatticeError::NotALattice {
                        a: names[a].clone(),
                        b: names[b].clone(),
                        which: "least upper bound",
                    }
                })?;
                meet[a][b] = greatest_of(&leq, (0..n).filter(|&c| leq[c][a] && leq[c][b])).ok_or_else(|| {
                    LatticeError::NotALattice {
                        a: names[a].clone(),
                        b: names[b].clone(),
                        which: "greatest lower bound",
                    }
                })?;
            }
        }

        let mut covers_up = vec![Vec::new(); n];
        for a in 0..n {
            for b in 0..n {
                if a != b && leq[a][b] && !(0..n).any(|c| c != a && c != b && leq[a][c] && leq[c][b]) {
                    covers_up[a].push(b);
                }
            }
        }

        let mut lattice = AtomicLattice {
            names,
            widths,
            index,
            leq,
            join,
            meet,
            covers_up,
            top,
            bottom,
            diameter: 0,
        };
        lattice.diameter = lattice.compute_diameter();
        Ok(lattice)
    }

    fn compute_diameter(&self) -> u32 {
        let n = self.names.len();
        let mut adj = vec![Vec::new(); n];
        for (a, ups) in self.covers_up.iter().enumerate() {
            for &b in ups {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        (0..n)
            .map(|s| bfs(&adj, s).into_iter().flatten().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    fn idx(&self, a: &Atom) -> Result<usize, LatticeError> {
        self.index
            .get(a.name())
            .copied()
            .ok_or_else(|| LatticeError::UnknownAtom(a.0.clone()))
    }

    fn atom(&self, i: usize) -> Atom {
        Atom(self.names[i].clone())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn elements(&self) -> impl Iterator<Item = Atom> + '_ {
        self.names.iter().map(|n| Atom(n.clone()))
    }

    pub fn top(&self) -> Atom {
        self.atom(self.top)
    }

    pub fn bottom(&self) -> Atom {
        self.atom(self.bottom)
    }

    pub fn is_top(&self, a: &Atom) -> bool {
        a.name() == self.names[self.top]
    }

    pub fn is_bottom(&self, a: &Atom) -> bool {
        a.name() == self.names[self.bottom]
    }

    pub fn width(&self, a: &Atom) -> Option<u32> {
        self.index.get(a.name()).and_then(|&i| self.widths[i])
    }

    pub fn leq(&self, a: &Atom, b: &Atom) -> Result<bool, LatticeError> {
        Ok(self.leq[self.idx(a)?][self.idx(b)?])
    }

    pub fn join_atoms(&self, a: &Atom, b: &Atom) -> Result<Atom, LatticeError> {
        Ok(self.atom(self.join[self.idx(a)?][self.idx(b)?]))
    }

    pub fn meet_atoms(&self, a: &Atom, b: &Atom) -> Result<Atom, LatticeError> {
        Ok(self.atom(self.meet[self.idx(a)?][self.idx(b)?]))
    }

    /// Average number of covering steps from each atom up to their least
    /// common ancestor (the join).
    pub fn atom_distance(&self, a: &Atom, b: &Atom) -> Result<f64, LatticeError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let lca = self.join[ia][ib];
        let up_a = bfs(&self.covers_up, ia)[lca].expect("join is reachable upward");
        let up_b = bfs(&self.covers_up, ib)[lca].expect("join is reachable upward");
        Ok(f64::from(up_a + up_b) / 2.0)
    }

    /// Diameter of the undirected Hasse diagram; the metric's maximum distance.
    pub fn max_distance(&self) -> f64 {
        f64::from(self.diameter)
    }

    /// Covering pairs `(lower, upper)` of the Hasse diagram.
    pub fn hasse_edges(&self) -> Vec<(Atom, Atom)> {
        let mut out = Vec::new();
        for (a, ups) in self.covers_up.iter().enumerate() {
            for &b in ups {
                out.push((self.atom(a), self.atom(b)));
            }
        }
        out
    }
}

fn least_of(leq: &[Vec<bool>], cands: impl Iterator<Item = usize>) -> Option<usize> {
    let cands: Vec<usize> = cands.collect();
    cands.iter().copied().find(|&c| cands.iter().all(|&d| leq[c][d]))
}

fn greatest_of(leq: &[Vec<bool>], cands: impl Iterator<Item = usize>) -> Option<usize> {
    let cands: Vec<usize> = cands.collect();
    cands.iter().copied().find(|&c| cands.iter().all(|&d| leq[d][c]))
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}
