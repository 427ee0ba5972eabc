//! Brute-force entailment for small constraint sets: saturate under
//! transitivity and constructor inversion, then look the goal up.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::frontend::SubtypeConstraint;
use crate::types::PolarType;

pub const MAX_TERMS: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("constraint set too large for the oracle ({terms} terms)")]
pub struct OracleTooLarge {
    pub terms: usize,
}

/// The saturated subtyping relation over every subterm of a constraint set.
pub struct Oracle {
    ids: HashMap<PolarType, usize>,
    terms: Vec<PolarType>,
    rel: HashSet<(usize, usize)>,
}

impl Oracle {
    pub fn new<'a>(cs: impl IntoIterator<Item = &'a SubtypeConstraint>) -> Result<Self, OracleTooLarge> {
        let mut o = Oracle {
            ids: HashMap::new(),
            terms: Vec::new(),
            rel: HashSet::new(),
        };
        let mut seeds = Vec::new();
        for c in cs {
            let l = o.intern(&c.lhs)?;
            let r = o.intern(&c.rhs)?;
            seeds.push((l, r));
        }
        o.saturate(seeds);
        Ok(o)
    }

    fn intern(&mut self, t: &PolarType) -> Result<usize, OracleTooLarge> {
        if let Some(&i) = self.ids.get(t) {
            return Ok(i);
        }
        if !matches!(t, PolarType::Mu(..)) {
            for (_, c) in t.children() {
                self.intern(c)?;
            }
        }
        if self.terms.len() >= MAX_TERMS {
            return Err(OracleTooLarge { terms: self.terms.len() + 1 });
        }
        let i = self.terms.len();
        self.terms.push(t.clone());
        self.ids.insert(t.clone(), i);
        Ok(i)
    }

    fn id(&self, t: &PolarType) -> usize {
        self.ids[t]
    }

    fn saturate(&mut self, seeds: Vec<(usize, usize)>) {
        let n = self.terms.len();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut work = seeds;
        while let Some((i, j)) = work.pop() {
            if i == j || !self.rel.insert((i, j)) {
                continue;
            }
            succ[i].push(j);
            pred[j].push(i);
            work.extend(succ[j].iter().map(|&k| (i, k)));
            work.extend(pred[i].iter().map(|&h| (h, j)));
            self.invert(i, j, &mut work);
        }
    }

    fn invert(&self, i: usize, j: usize, work: &mut Vec<(usize, usize)>) {
        use PolarType::*;
        match (&self.terms[i], &self.terms[j]) {
            (Union(a, b), _) => {
                work.push((self.id(a), j));
                work.push((self.id(b), j));
            }
            (_, Inter(a, b)) => {
                work.push((i, self.id(a)));
                work.push((i, self.id(b)));
            }
            (Ptr { store: a, load: b }, Ptr { store: c, load: d }) => {
                work.push((self.id(c), self.id(a)));
                work.push((self.id(b), self.id(d)));
            }
            (Record(l), Record(r)) => {
                for (k, rt) in r {
                    if let Some(lt) = l.get(k) {
                        work.push((self.id(lt), self.id(rt)));
                    }
                }
            }
            (Function { params: lp, returns: lr }, Function { params: rp, returns: rr }) => {
                for (k, rt) in rp {
                    if let Some(lt) = lp.get(k) {
                        work.push((self.id(rt), self.id(lt)));
                    }
                }
                for (k, rt) in rr {
                    if let Some(lt) = lr.get(k) {
                        work.push((self.id(lt), self.id(rt)));
                    }
                }
            }
            _ => {}
        }
    }

    /// Whether `l ≤ r` follows. Terms that never occur are only related reflexively.
    pub fn entails(&self, l: &PolarType, r: &PolarType) -> bool {
        if l == r || matches!(r, PolarType::Top) || matches!(l, PolarType::Bottom) {
            return true;
        }
        match (self.ids.get(l), self.ids.get(r)) {
            (Some(&i), Some(&j)) => self.rel.contains(&(i, j)),
            _ => false,
        }
    }

    pub fn relation_size(&self) -> usize {
        self.rel.len()
    }
}

/// Whether the variable constraint `goal.0 ≤ goal.1` is derivable from `cs`.
pub fn oracle_derivable(cs: &[SubtypeConstraint], goal: (&str, &str)) -> Result<bool, OracleTooLarge> {
    Ok(Oracle::new(cs)?.entails(&PolarType::var(goal.0), &PolarType::var(goal.1)))
}
