use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::automata::language::path_language;
use crate::automata::EdgeLabel;
use crate::ir::parse_ir;
use crate::types::FieldKey;

fn lattice() -> Arc<AtomicLattice> {
    Arc::new(AtomicLattice::flat_default())
}

fn program(text: &str) -> IrProgram {
    parse_ir(text, &lattice()).unwrap()
}

fn fields(a: &TypeAutomaton) -> BTreeSet<FieldKey> {
    (0..a.len()).flat_map(|s| a.label(s).rec_fields.iter().copied()).collect()
}

const LIST_INC_IR: &str = include_str!("../../testdata/list_inc.ir");
const MALLOC: &str = include_str!("../../testdata/malloc.ir");
const JOIN: &str = include_str!("../../testdata/join.ir");
const CHAIN: &str = include_str!("../../testdata/chain.ir");

#[test]
fn plan_orders_callees_first() {
    let p = program(CHAIN);
    let plan = plan_sccs(&p);
    let pos = |f: &str| plan.sccs.iter().position(|s| s.contains(f)).unwrap();
    assert!(pos("h") < pos("g") && pos("g") < pos("f"));
    assert_eq!(plan.sccs[pos("odd")], BTreeSet::from(["even".to_string(), "odd".to_string()]));
    assert_eq!(plan.sccs.len(), 4);
    assert_eq!(plan.callsites["f"], [CallsiteRef { caller: "f".into(), line: 3, callee: "g".into() }]);
    let levels = plan.levels(&p);
    assert_eq!((levels[pos("h")], levels[pos("g")], levels[pos("f")]), (0, 1, 2));
}

#[test]
fn empty_program() {
    let r = infer(&IrProgram::default(), lattice(), InferOptions::default()).unwrap();
    assert!(r.automata.is_empty() && r.refined.is_empty() && r.lowered.is_empty());
}

#[test]
fn identity_function_shares_a_variable() {
    let p = program("func id(a) -> (r) {\n entry:\n r = a;\n}");
    let r = infer(&p, lattice(), InferOptions::default()).unwrap();
    let a = &r.automata["id"];
    let param = a.successor(a.start(), EdgeLabel::FnIn(0)).unwrap();
    let ret = a.successor(a.start(), EdgeLabel::FnOut(0)).unwrap();
    assert_eq!(a.label(param).polarity, Polarity::Negative);
    assert!(!a.label(param).vars.is_disjoint(&a.label(ret).vars));
}

#[test]
fn list_increment_signature() {
    let r = infer(&program(LIST_INC_IR), lattice(), InferOptions::default()).unwrap();
    let CType::Func { params, returns } = &r.lowered["list_inc"] else { panic!() };
    assert!(returns.is_empty());
    let CType::Ptr { pointee } = &params[0] else { panic!("{:?}", params[0]) };
    let CType::Named { name } = &**pointee else { panic!() };
    let CType::Struct { fields, .. } = &r.env.decls[name] else { panic!() };
    assert_eq!(fields[0].ty, CType::prim("int32", Some(32)));
    assert_eq!(fields[1].offset, 4);
    assert_eq!(fields[1].ty, CType::ptr(CType::named(name.clone())));
    let j = r.to_json(false, false);
    assert!(j["functions"]["list_inc"]["signature_c"].as_str().unwrap().starts_with("void list_inc(struct"));
}

#[test]
fn allocations_stay_apart_when_instantiated() {
    let p = program(MALLOC);
    let poly = infer(&p, lattice(), InferOptions::default()).unwrap();
    assert_eq!(poly.callsites.len(), 2);
    let (a, b) = (fields(&poly.callsites[0].automaton), fields(&poly.callsites[1].automaton));
    assert!(!a.is_empty() && !b.is_empty());
    assert!(a.is_disjoint(&b), "{a:?} {b:?}");

    let mono = infer(&p, lattice(), InferOptions { polymorphic: false, jobs: 1 }).unwrap();
    let (c, d) = (fields(&mono.callsites[0].automaton), fields(&mono.callsites[1].automaton));
    assert!(!c.is_disjoint(&d), "{c:?} {d:?}");
    assert!(a.is_subset(&c) && b.is_subset(&c));
}

#[test]
fn refined_parameter_joins_both_sites() {
    let r = infer(&program(JOIN), lattice(), InferOptions::default()).unwrap();
    let sites: Vec<&CallsiteType> = r.callsites.iter().filter(|c| c.site.callee == "sink").collect();
    assert_eq!(sites.len(), 2);
    let param = |a: &TypeAutomaton| a.label(a.successor(a.start(), EdgeLabel::FnIn(0)).unwrap()).clone();
    let (p0, p1) = (param(&sites[0].automaton), param(&sites[1].automaton));
    assert_eq!(p0.polarity, Polarity::Positive);
    assert!(p0.atom.name() == "int32" && !p0.ptr);
    assert!(p1.ptr && p1.atom.name() == "bot_a");
    let joined = param(&r.refined["sink"]);
    assert!(joined.ptr && joined.atom.name() == "int32");
    let expected = sites[0].automaton.join(&sites[1].automaton).unwrap();
    assert_eq!(r.refined["sink"], expected);
    let CType::Func { params, .. } = &r.refined_lowered["sink"] else { panic!() };
    assert!(matches!(params[0], CType::Ptr { .. }));
}

#[test]
fn refinement_only_grows() {
    let r = infer(&program(JOIN), lattice(), InferOptions::default()).unwrap();
    let first = &r.callsites.iter().find(|c| c.site.callee == "sink").unwrap().automaton;
    let small = path_language(first, 4).unwrap();
    let big = path_language(&r.refined["sink"], 4).unwrap();
    assert!(small.keys().all(|k| big.contains_key(k)));
}

#[test]
fn parallel_matches_sequential() {
    let p = program(CHAIN);
    let seq = infer(&p, lattice(), InferOptions::default()).unwrap();
    let par = infer(&p, lattice(), InferOptions { polymorphic: true, jobs: 4 }).unwrap();
    assert_eq!(seq.automata, par.automata);
    assert_eq!(seq.to_json(true, false), par.to_json(true, false));
}

#[test]
fn missing_callee_is_reported() {
    let p = program(CHAIN);
    let scc = BTreeSet::from(["f".to_string()]);
    let err = infer_function_group(&scc, &BTreeMap::new(), &p, &lattice(), InferOptions::default()).unwrap_err();
    assert!(matches!(err, InterprocError::Ir(IrError::MissingCalleeType(ref g)) if g == "g"));
}

fn dag_program(edges: &[(usize, usize)]) -> String {
    let mut out = String::new();
    for f in 0..5 {
        out.push_str(&format!("func f{f}(a) -> (r) {{\n entry:\n r = a;\n"));
        for &(x, y) in edges {
            if x == f {
                out.push_str(&format!(" r = call f{y}(a);\n"));
            }
        }
        out.push_str("}\n");
    }
    out
}

proptest! {
    #[test]
    fn plan_respects_random_dags(raw in prop::collection::vec((0usize..5, 0usize..5), 0..10)) {
        let edges: Vec<(usize, usize)> = raw.into_iter().filter(|(x, y)| x < y).collect();
        let p = program(&dag_program(&edges));
        let plan = plan_sccs(&p);
        prop_assert_eq!(plan.sccs.len(), 5);
        let pos = |f: usize| plan.sccs.iter().position(|s| s.contains(&format!("f{f}"))).unwrap();
        for (x, y) in edges {
            prop_assert!(pos(y) < pos(x));
        }
    }
}
