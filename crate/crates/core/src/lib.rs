//! Binary type inference with algebraic subtyping.

pub mod automata;
pub mod biunify;
pub mod cli;
pub mod frontend;
pub mod interproc;
pub mod ir;
pub mod lattice;
pub mod lowering;
pub mod metrics;
pub mod oracle;
pub mod synth;
pub mod syntax;
pub mod types;
