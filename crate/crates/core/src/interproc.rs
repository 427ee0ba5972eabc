//! Whole-program inference over strongly connected components of the call
//! graph, callees first, with fresh instantiation at every call site.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde_json::{json, Value};
use thiserror::Error;

use crate::automata::{build_from_store, decompile_automaton, dot, instantiate, AutomatonError, TypeAutomaton};
use crate::biunify::ConstraintStore;
use crate::ir::{generate, local_name, CalleeTypes, GenOptions, IrError, IrFunction, IrProgram, IrStatement, SlotPolicy};
use crate::lattice::AtomicLattice;
use crate::lowering::render::{declare, render_env, to_json};
use crate::lowering::{lower, CType, TypeEnvironment};
use crate::types::{FreshNames, Polarity, PolarType};

#[derive(Debug, Error)]
pub enum InterprocError {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallsiteRef {
    pub caller: String,
    /// Source line of the call.
    pub line: usize,
    pub callee: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SccPlan {
    /// Components with every callee component before its callers.
    pub sccs: Vec<BTreeSet<String>>,
    pub callsites: BTreeMap<String, Vec<CallsiteRef>>,
}

impl SccPlan {
    /// Length of the longest chain of callee components below each component.
    pub fn levels(&self, program: &IrProgram) -> Vec<usize> {
        let comp: BTreeMap<&str, usize> = self
            .sccs
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |f| (f.as_str(), i)))
            .collect();
        let mut level = vec![0; self.sccs.len()];
        for (i, scc) in self.sccs.iter().enumerate() {
            for f in scc {
                for g in &program.call_graph[f] {
                    if let Some(&j) = comp.get(g.as_str()) {
                        if j != i {
                            level[i] = level[i].max(level[j] + 1);
                        }
                    }
                }
            }
        }
        level
    }
}

pub fn plan_sccs(p: &IrProgram) -> SccPlan {
    let mut g = DiGraph::<&str, ()>::new();
    let nodes: BTreeMap<&str, _> = p.functions.keys().map(|f| (f.as_str(), g.add_node(f.as_str()))).collect();
    for (f, callees) in &p.call_graph {
        for c in callees {
            if let Some(&t) = nodes.get(c.as_str()) {
                g.add_edge(nodes[f.as_str()], t, ());
            }
        }
    }
    let sccs = tarjan_scc(&g)
        .into_iter()
        .map(|scc| scc.into_iter().map(|n| g[n].to_string()).collect())
        .collect();
    let callsites = p
        .functions
        .values()
        .map(|f| {
            let sites = f
                .statements()
                .filter_map(|s| match &s.stmt {
                    IrStatement::Call { target, .. } => Some(CallsiteRef {
                        caller: f.name.clone(),
                        line: s.line,
                        callee: target.clone(),
                    }),
                    _ => None,
                })
                .collect();
            (f.name.clone(), sites)
        })
        .collect();
    SccPlan { sccs, callsites }
}

#[derive(Clone, Copy, Debug)]
pub struct InferOptions {
    /// Instantiate callee types with fresh variables at each call site.
    /// When off, every call site of a callee shares its variables.
    pub polymorphic: bool,
    /// Worker threads for independent components.
    pub jobs: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions { polymorphic: true, jobs: 1 }
    }
}

/// The type a call site demands of its callee, closed under the caller's
/// constraints.
#[derive(Clone, Debug)]
pub struct CallsiteType {
    pub site: CallsiteRef,
    pub automaton: TypeAutomaton,
}

#[derive(Clone, Debug)]
pub struct GroupResult {
    pub automata: BTreeMap<String, TypeAutomaton>,
    pub callsites: Vec<CallsiteType>,
    pub diagnostics: BTreeMap<String, Vec<String>>,
    pub nanos: u128,
}

struct GroupCallees<'a> {
    group: &'a BTreeMap<String, &'a IrFunction>,
    qualify: bool,
    solved: &'a BTreeMap<String, TypeAutomaton>,
    program: &'a IrProgram,
    arity: &'a BTreeMap<String, (usize, usize)>,
    polymorphic: bool,
}

fn shared_names(t: &PolarType, callee: &str) -> PolarType {
    t.rename_free(&mut |v: &str| format!("{callee}${v}"))
}

impl CalleeTypes for GroupCallees<'_> {
    fn callee_type(&mut self, name: &str, fresh: &mut FreshNames) -> Option<PolarType> {
        if let Some(f) = self.group.get(name) {
            let slot = |v: &String| PolarType::var(local_name(f, v, self.qualify));
            return Some(PolarType::function(
                f.params.iter().enumerate().map(|(i, v)| (i as u32, slot(v))),
                f.returns.iter().enumerate().map(|(i, v)| (i as u32, slot(v))),
            ));
        }
        if let Some(a) = self.solved.get(name) {
            return Some(if self.polymorphic {
                instantiate(a, fresh)
            } else {
                shared_names(&decompile_automaton(a, fresh), name)
            });
        }
        let declared = self.program.externs.get(name)?;
        let t = match declared {
            Some(t) => t.clone(),
            None => {
                let (ins, outs) = self.arity.get(name).copied().unwrap_or((0, 0));
                PolarType::function(
                    (0..ins as u32).map(|i| (i, PolarType::var(format!("arg{i}")))),
                    (0..outs as u32).map(|i| (i, PolarType::var(format!("ret{i}")))),
                )
            }
        };
        Some(if self.polymorphic {
            let mut map = BTreeMap::new();
            t.rename_free(&mut |v: &str| map.entry(v.to_string()).or_insert_with(|| fresh.fresh()).clone())
        } else {
            shared_names(&t, name)
        })
    }
}

fn extern_arity(p: &IrProgram) -> BTreeMap<String, (usize, usize)> {
    let mut out: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for f in p.functions.values() {
        for s in f.statements() {
            if let IrStatement::Call { target, args, outs } = &s.stmt {
                let e = out.entry(target.clone()).or_default();
                e.0 = e.0.max(args.len());
                e.1 = e.1.max(outs.len());
            }
        }
    }
    out
}

/// Solves one component jointly and builds a signature automaton for each
/// member. Every callee outside the component must already be in `solved`
/// or declared external.
pub fn infer_function_group(
    scc: &BTreeSet<String>,
    solved: &BTreeMap<String, TypeAutomaton>,
    program: &IrProgram,
    lattice: &Arc<AtomicLattice>,
    opts: InferOptions,
) -> Result<GroupResult, InterprocError> {
    let start = Instant::now();
    let group: BTreeMap<String, &IrFunction> = scc.iter().map(|f| (f.clone(), &program.functions[f])).collect();
    let qualify = group.len() > 1;
    let arity = extern_arity(program);
    let mut callees = GroupCallees { group: &group, qualify, solved, program, arity: &arity, polymorphic: opts.polymorphic };
    let ns = scc.iter().next().cloned().unwrap_or_default();
    let mut fresh = FreshNames::new(ns);
    let gen_opts = GenOptions {
        slots: if opts.polymorphic { SlotPolicy::PerCallsite } else { SlotPolicy::SharedPerCallee },
        qualify,
    };
    let mut store = ConstraintStore::new(lattice.clone());
    let mut sites = Vec::new();
    for f in group.values() {
        let g = generate(f, &mut callees, &mut fresh, gen_opts)?;
        store.add_all(&g.constraints);
        sites.extend(g.callsites.into_iter().map(|c| (f.name.clone(), c)));
    }

    let mut automata = BTreeMap::new();
    for (name, f) in &group {
        let sig = PolarType::function(
            f.params
                .iter()
                .enumerate()
                .map(|(i, v)| (i as u32, PolarType::Var(local_name(f, v, qualify)))),
            f.returns
                .iter()
                .enumerate()
                .map(|(i, v)| (i as u32, PolarType::Var(local_name(f, v, qualify)))),
        );
        automata.insert(name.clone(), build_from_store(&store, &sig, Polarity::Positive)?.simplify()?);
    }
    let mut callsites = Vec::new();
    for (caller, c) in sites {
        callsites.push(CallsiteType {
            site: CallsiteRef { caller, line: c.line, callee: c.callee.clone() },
            automaton: build_from_store(&store, &c.expected_type(), Polarity::Negative)?.simplify()?,
        });
    }
    let diags: Vec<String> = store.diagnostics().map(|d| d.to_string()).collect();
    let diagnostics = if diags.is_empty() {
        BTreeMap::new()
    } else {
        group.keys().map(|f| (f.clone(), diags.clone())).collect()
    };
    Ok(GroupResult { automata, callsites, diagnostics, nanos: start.elapsed().as_nanos() })
}

#[derive(Clone, Debug, Default)]
pub struct InferenceResult {
    /// Signature automaton per function.
    pub automata: BTreeMap<String, TypeAutomaton>,
    /// Join of every call site's demand per called function.
    pub refined: BTreeMap<String, TypeAutomaton>,
    pub lowered: BTreeMap<String, CType>,
    pub refined_lowered: BTreeMap<String, CType>,
    pub callsites: Vec<CallsiteType>,
    pub callsite_lowered: Vec<CType>,
    pub env: TypeEnvironment,
    pub diagnostics: BTreeMap<String, Vec<String>>,
    /// Time spent solving each function's component.
    pub nanos: BTreeMap<String, u128>,
}

pub fn infer(program: &IrProgram, lattice: Arc<AtomicLattice>, opts: InferOptions) -> Result<InferenceResult, InterprocError> {
    let plan = plan_sccs(program);
    let levels = plan.levels(program);
    let max_level = levels.iter().copied().max();
    let mut res = InferenceResult::default();
    for f in program.functions.keys() {
        res.refined.insert(f.clone(), TypeAutomaton::empty(Polarity::Negative, lattice.clone()));
    }
    for level in 0..=max_level.unwrap_or(0) {
        let batch: Vec<&BTreeSet<String>> =
            plan.sccs.iter().zip(&levels).filter(|(_, l)| **l == level).map(|(s, _)| s).collect();
        let results = run_batch(&batch, &res.automata, program, &lattice, opts)?;
        for g in results {
            for (f, a) in g.automata {
                res.nanos.insert(f.clone(), g.nanos);
                res.automata.insert(f, a);
            }
            res.diagnostics.extend(g.diagnostics);
            for c in g.callsites {
                let r = res
                    .refined
                    .entry(c.site.callee.clone())
                    .or_insert_with(|| TypeAutomaton::empty(Polarity::Negative, lattice.clone()));
                *r = r.join(&c.automaton)?;
                res.callsites.push(c);
            }
        }
    }
    for (f, a) in &res.automata {
        let c = lower(a, &mut res.env);
        res.lowered.insert(f.clone(), c);
    }
    for (f, a) in &res.refined {
        let c = lower(a, &mut res.env);
        res.refined_lowered.insert(f.clone(), c);
    }
    for c in &res.callsites {
        let t = lower(&c.automaton, &mut res.env);
        res.callsite_lowered.push(t);
    }
    Ok(res)
}

fn run_batch(
    batch: &[&BTreeSet<String>],
    solved: &BTreeMap<String, TypeAutomaton>,
    program: &IrProgram,
    lattice: &Arc<AtomicLattice>,
    opts: InferOptions,
) -> Result<Vec<GroupResult>, InterprocError> {
    let jobs = opts.jobs.max(1).min(batch.len().max(1));
    if jobs == 1 {
        return batch.iter().map(|s| infer_function_group(s, solved, program, lattice, opts)).collect();
    }
    let chunk = batch.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| infer_function_group(s, solved, program, lattice, opts))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut out = Vec::new();
        for h in handles {
            out.extend(h.join().expect("inference worker panicked")?);
        }
        Ok(out)
    })
}

impl InferenceResult {
    /// Machine-readable summary. Timing is included only on request so that
    /// repeated runs compare equal.
    pub fn to_json(&self, with_dot: bool, with_timing: bool) -> Value {
        let mut functions = serde_json::Map::new();
        for (f, sig) in &self.lowered {
            let mut o = serde_json::Map::new();
            o.insert("signature_ctype".into(), to_json(sig));
            o.insert("signature_c".into(), Value::String(declare(sig, f, &self.env)));
            if let Some(r) = self.refined_lowered.get(f) {
                o.insert("refined_ctype".into(), to_json(r));
            }
            if with_dot {
                o.insert("automaton_dot".into(), Value::String(dot::to_dot(&self.automata[f], f)));
            }
            if let Some(d) = self.diagnostics.get(f) {
                o.insert("diagnostics".into(), json!(d));
            }
            if with_timing {
                o.insert("time_ns".into(), json!(self.nanos.get(f).copied().unwrap_or(0) as u64));
            }
            functions.insert(f.clone(), Value::Object(o));
        }
        for (f, r) in &self.refined_lowered {
            if !functions.contains_key(f) {
                functions.insert(f.clone(), json!({"refined_ctype": to_json(r)}));
            }
        }
        let callsites: Vec<Value> = self
            .callsites
            .iter()
            .zip(&self.callsite_lowered)
            .map(|(c, t)| json!({"caller": c.site.caller, "line": c.site.line, "callee": c.site.callee, "ctype": to_json(t)}))
            .collect();
        let types: serde_json::Map<String, Value> =
            self.env.decls.iter().map(|(n, d)| (n.clone(), to_json(d))).collect();
        json!({
            "functions": functions,
            "callsites": callsites,
            "types": types,
            "types_c": render_env(&self.env),
        })
    }
}

#[cfg(test)]
mod tests;
