//! Distance between inferred and reference C types.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;
use thiserror::Error;

use crate::lattice::{Atom, AtomicLattice};
use crate::lowering::render::from_json;
use crate::lowering::{CField, CType, TypeEnvironment};

/// Pointers and named references are followed at most this deep; anything
/// further away counts as equal.
pub const MAX_DEPTH: usize = 8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundSignature {
    pub params: BTreeMap<u32, CType>,
    pub returns: BTreeMap<u32, CType>,
}

impl GroundSignature {
    pub fn new(params: Vec<CType>, returns: Vec<CType>) -> Self {
        let index = |v: Vec<CType>| v.into_iter().enumerate().map(|(i, t)| (i as u32, t)).collect();
        GroundSignature { params: index(params), returns: index(returns) }
    }

    pub fn from_ctype(t: &CType) -> Option<Self> {
        match t {
            CType::Func { params, returns } => Some(Self::new(params.clone(), returns.clone())),
            _ => None,
        }
    }
}

fn refs(m: &BTreeMap<u32, CType>) -> BTreeMap<u32, &CType> {
    m.iter().map(|(k, v)| (*k, v)).collect()
}

/// Compares types that may refer to named declarations on either side.
pub struct Metric<'a> {
    pub lattice: &'a AtomicLattice,
    pub inferred_env: &'a TypeEnvironment,
    pub ground_env: &'a TypeEnvironment,
    /// Pointer nesting beyond this depth scores zero.
    pub max_depth: usize,
}

impl Metric<'_> {
    pub fn max(&self) -> f64 {
        self.lattice.max_distance()
    }

    fn atom(&self, a: &str, b: &str) -> f64 {
        self.lattice
            .atom_distance(&Atom::new(a), &Atom::new(b))
            .unwrap_or_else(|_| self.max())
    }

    fn mean_over<K: Ord + Copy>(&self, a: &BTreeMap<K, &CType>, b: &BTreeMap<K, &CType>, depth: usize) -> f64 {
        let keys: BTreeSet<K> = a.keys().chain(b.keys()).copied().collect();
        if keys.is_empty() {
            return 0.0;
        }
        let total: f64 = keys
            .iter()
            .map(|k| match (a.get(k), b.get(k)) {
                (Some(x), Some(y)) => self.go(x, y, depth),
                _ => self.max(),
            })
            .sum();
        total / keys.len() as f64
    }

    fn slots(&self, a: &BTreeMap<u32, CType>, b: &BTreeMap<u32, CType>, depth: usize) -> f64 {
        self.mean_over(&refs(a), &refs(b), depth)
    }

    fn fields(&self, inferred: &[CField], ground: &[CField], depth: usize) -> f64 {
        let range = |f: &CField| (f.offset, f.offset + f.size.div_ceil(8).max(1));
        let overlaps = |f: &CField| {
            let (lo, hi) = range(f);
            ground.iter().any(|g| {
                let (glo, ghi) = range(g);
                lo < ghi && glo < hi
            })
        };
        let inf: BTreeMap<u32, &CType> = inferred
            .iter()
            .filter(|f| overlaps(f))
            .map(|f| (f.offset, &f.ty))
            .collect();
        let gr: BTreeMap<u32, &CType> = ground.iter().map(|f| (f.offset, &f.ty)).collect();
        self.mean_over(&inf, &gr, depth)
    }

    fn resolve<'b>(&'b self, t: &'b CType, env: &'b TypeEnvironment) -> &'b CType {
        match t {
            CType::Named { name } => env.decls.get(name).unwrap_or(t),
            _ => t,
        }
    }

    fn go(&self, inferred: &CType, ground: &CType, depth: usize) -> f64 {
        if depth > self.max_depth {
            return 0.0;
        }
        let named = matches!(inferred, CType::Named { .. }) || matches!(ground, CType::Named { .. });
        if named {
            let (i, g) = (self.resolve(inferred, self.inferred_env), self.resolve(ground, self.ground_env));
            if matches!(i, CType::Named { .. }) || matches!(g, CType::Named { .. }) {
                return self.max();
            }
            return self.go(i, g, depth + 1);
        }
        match (inferred, ground) {
            (CType::Func { params: p1, returns: r1 }, CType::Func { params: p2, returns: r2 }) => {
                let a = GroundSignature::new(p1.clone(), r1.clone());
                let b = GroundSignature::new(p2.clone(), r2.clone());
                self.signature_at(&a, &b, depth)
            }
            (CType::Struct { fields: a, .. }, CType::Struct { fields: b, .. }) => self.fields(a, b, depth),
            (CType::Ptr { pointee: a }, CType::Ptr { pointee: b }) => self.go(a, b, depth + 1),
            (CType::Prim { name: a, .. }, CType::Prim { name: b, .. }) => self.atom(a, b),
            (CType::Unknown { .. }, CType::Unknown { .. }) => 0.0,
            (CType::Unknown { .. }, CType::Prim { name, .. }) | (CType::Prim { name, .. }, CType::Unknown { .. }) => {
                self.atom(self.lattice.top().name(), name)
            }
            _ => self.max(),
        }
    }

    pub fn type_distance(&self, inferred: &CType, ground: &CType) -> f64 {
        self.go(inferred, ground, 0)
    }

    fn signature_at(&self, a: &GroundSignature, b: &GroundSignature, depth: usize) -> f64 {
        (self.slots(&a.params, &b.params, depth) + self.slots(&a.returns, &b.returns, depth)) / 2.0
    }

    /// Mean of the parameter-side and return-side distances; a slot present
    /// on only one side counts as the maximum distance.
    pub fn signature_distance(&self, inferred: &GroundSignature, ground: &GroundSignature) -> f64 {
        self.signature_at(inferred, ground, 0)
    }
}

/// Distance between types without named declarations.
pub fn type_distance(inferred: &CType, ground: &CType, lattice: &AtomicLattice) -> f64 {
    let env = TypeEnvironment::new();
    Metric { lattice, inferred_env: &env, ground_env: &env, max_depth: MAX_DEPTH }.type_distance(inferred, ground)
}

pub fn signature_distance(inferred: &GroundSignature, ground: &GroundSignature, lattice: &AtomicLattice) -> f64 {
    let env = TypeEnvironment::new();
    Metric { lattice, inferred_env: &env, ground_env: &env, max_depth: MAX_DEPTH }.signature_distance(inferred, ground)
}

#[derive(Debug, Error)]
pub enum SignatureFileError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("function `{0}`: {1}")]
    Entry(String, String),
}

/// Signatures and named types read from either an inference result or a
/// reference file. Both shapes are accepted:
/// `{"functions": {f: {"signature_ctype": T}}, "types": {...}}` and
/// `{f: {"params": [T...], "returns": [T...]}}`. Entries with neither, such
/// as refinements of external functions, are skipped.
pub fn load_signatures(v: &Value) -> Result<(BTreeMap<String, GroundSignature>, TypeEnvironment), SignatureFileError> {
    let empty = serde_json::Map::new();
    let root = v.as_object().unwrap_or(&empty);
    let (funcs, types) = match root.get("functions").and_then(Value::as_object) {
        Some(f) => (f, root.get("types").and_then(Value::as_object)),
        None => (root, None),
    };
    let mut env = TypeEnvironment::new();
    for (n, t) in types.into_iter().flatten() {
        env.decls.insert(n.clone(), from_json(t)?);
    }
    let mut out = BTreeMap::new();
    for (name, entry) in funcs {
        if ["signature_ctype", "params", "returns"].iter().all(|k| entry.get(k).is_none()) {
            continue;
        }
        let bad = |m: &str| SignatureFileError::Entry(name.clone(), m.to_string());
        let sig = if let Some(t) = entry.get("signature_ctype") {
            GroundSignature::from_ctype(&from_json(t)?).ok_or_else(|| bad("signature is not a function type"))?
        } else {
            let list = |key: &str| -> Result<Vec<CType>, SignatureFileError> {
                match entry.get(key) {
                    None => Ok(Vec::new()),
                    Some(Value::Array(xs)) => xs.iter().map(|x| from_json(x).map_err(Into::into)).collect(),
                    Some(_) => Err(bad(&format!("`{key}` must be a list"))),
                }
            };
            GroundSignature::new(list("params")?, list("returns")?)
        };
        out.insert(name.clone(), sig);
    }
    Ok((out, env))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceReport {
    pub per_function: BTreeMap<String, f64>,
    pub mean: f64,
    /// Functions present in only one file.
    pub warnings: Vec<String>,
}

/// Compares every function named in either file; a function missing from
/// one side scores the maximum distance.
pub fn compare_files(
    inferred: &Value,
    ground: &Value,
    lattice: &AtomicLattice,
    max_depth: usize,
) -> Result<DistanceReport, SignatureFileError> {
    let (inf, ienv) = load_signatures(inferred)?;
    let (gr, genv) = load_signatures(ground)?;
    let m = Metric { lattice, inferred_env: &ienv, ground_env: &genv, max_depth };
    let names: BTreeSet<&String> = inf.keys().chain(gr.keys()).collect();
    let mut per_function = BTreeMap::new();
    let mut warnings = Vec::new();
    for n in names {
        let d = match (inf.get(n), gr.get(n)) {
            (Some(a), Some(b)) => m.signature_distance(a, b),
            (Some(_), None) => {
                warnings.push(format!("`{n}` has no reference signature"));
                m.max()
            }
            _ => {
                warnings.push(format!("`{n}` was not inferred"));
                m.max()
            }
        };
        per_function.insert(n.clone(), d);
    }
    let mean = if per_function.is_empty() {
        0.0
    } else {
        per_function.values().sum::<f64>() / per_function.len() as f64
    };
    Ok(DistanceReport { per_function, mean, warnings })
}
