//! Seeded synthetic functions for benchmarking, shaped like lifted code:
//! copies, loads and stores through a few base pointers, integer arithmetic.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::frontend::SubtypeConstraint;
use crate::ir::{generate, GenOptions, IrBlock, IrFunction, IrStatement, Located, Operand};
use crate::types::FreshNames;

/// A single-block function with `stmts` statements over roughly `stmts / 3`
/// locals.
pub fn synthetic_function(stmts: usize, seed: u64) -> IrFunction {
    let mut rng = StdRng::seed_from_u64(seed);
    let nvars = (stmts / 3).max(4);
    let var = |rng: &mut StdRng| format!("v{}", rng.random_range(0..nvars));
    let width = |rng: &mut StdRng| if rng.random_bool(0.8) { 4 } else { 8 };
    let mut out = Vec::with_capacity(stmts);
    for i in 0..stmts {
        let stmt = match rng.random_range(0..100) {
            0..25 => IrStatement::Assign { dst: var(&mut rng), src: Operand::Var(var(&mut rng)) },
            25..55 => IrStatement::Load {
                dst: var(&mut rng),
                addr: var(&mut rng),
                offset: 4 * rng.random_range(0..4),
                width: width(&mut rng),
            },
            55..80 => IrStatement::Store {
                addr: var(&mut rng),
                offset: 4 * rng.random_range(0..4),
                width: width(&mut rng),
                src: Operand::Var(var(&mut rng)),
            },
            _ => IrStatement::BinOpInt {
                dst: var(&mut rng),
                a: Operand::Var(var(&mut rng)),
                b: Operand::Const(rng.random_range(0..16)),
                width: width(&mut rng),
            },
        };
        out.push(Located { line: i + 1, stmt });
    }
    IrFunction {
        name: format!("synth_{seed}"),
        params: vec!["v0".into(), "v1".into()],
        returns: vec!["v2".into()],
        blocks: vec![IrBlock { name: "entry".into(), stmts: out }],
    }
}

/// Exactly `n` constraints generated from a synthetic function.
pub fn synthetic_constraints(n: usize, seed: u64) -> Vec<SubtypeConstraint> {
    let mut stmts = n / 2 + 1;
    loop {
        let f = synthetic_function(stmts, seed);
        let mut fresh = FreshNames::new("s");
        let mut cs = generate(&f, &mut BTreeMap::new(), &mut fresh, GenOptions::default())
            .expect("synthetic functions make no calls")
            .constraints;
        if cs.len() >= n {
            cs.truncate(n);
            return cs;
        }
        stmts += stmts / 2 + 1;
    }
}
