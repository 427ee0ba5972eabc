//! The `binsub` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use crate::automata::{build_from_store, dot, AutomatonError};
use crate::biunify::ConstraintStore;
use crate::frontend::{parse_constraints, ConstraintForm};
use crate::interproc::{infer, InferOptions, InferenceResult, InterprocError};
use crate::ir::{parse_ir, IrError};
use crate::lattice::AtomicLattice;
use crate::lowering::render::{declare, render_env, to_json};
use crate::lowering::{lower, TypeEnvironment};
use crate::metrics::{compare_files, MAX_DEPTH};
use crate::synth::synthetic_constraints;
use crate::types::{FreshNames, PolarType, Polarity};

#[derive(Parser, Debug)]
#[command(name = "binsub", version, about = "Subtyping-based type inference for lifted binaries")]
pub struct Cli {
    /// Atom lattice file; the built-in flat lattice otherwise.
    #[arg(long, global = true)]
    pub lattice: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Pointer nesting depth the distance metric descends.
    #[arg(long, global = true, default_value_t = MAX_DEPTH)]
    pub depth: usize,
    /// Runs per measurement; reported times are means.
    #[arg(long, global = true, default_value_t = 1)]
    pub repeat: u32,
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve a constraint file and print the types of its variables.
    Solve {
        #[arg(long, value_enum, default_value_t = Format::Binsub)]
        format: Format,
        /// Variables to report; every named variable by default.
        #[arg(long = "var")]
        vars: Vec<String>,
        #[arg(long, value_enum, default_value_t = SolveEmit::Ctype)]
        emit: SolveEmit,
        #[arg(long, value_enum, default_value_t = Side::Neg)]
        polarity: Side,
        file: PathBuf,
    },
    /// Infer signatures for every function of an IR program.
    Infer {
        /// Share one instance of each callee's type across its call sites.
        #[arg(long)]
        monomorphic: bool,
        #[arg(long, value_enum, default_value_t = InferEmit::Json)]
        emit: InferEmit,
        file: PathBuf,
    },
    /// Distance between inferred and reference signatures.
    Distance {
        #[arg(long, value_enum, default_value_t = ReportEmit::Text)]
        emit: ReportEmit,
        inferred: PathBuf,
        ground: PathBuf,
    },
    /// Print a synthetic constraint set.
    Synth {
        #[arg(long, default_value_t = 100)]
        size: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Binsub,
    Retypd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolveEmit {
    Ctype,
    Polar,
    Dot,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InferEmit {
    Json,
    Dot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportEmit {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Side {
    Pos,
    Neg,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<AutomatonError> for CliError {
    fn from(e: AutomatonError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<InterprocError> for CliError {
    fn from(e: InterprocError) -> Self {
        match e {
            InterprocError::Ir(e) => CliError::Input(e.to_string()),
            InterprocError::Automaton(e) => e.into(),
        }
    }
}

impl From<IrError> for CliError {
    fn from(e: IrError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn io(e: std::io::Error) -> CliError {
    CliError::Input(e.to_string())
}

pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// Runs one command, writing results to `out` and diagnostics to `err`, and
/// returns the exit status.
pub fn run_with(
    args: impl IntoIterator<Item = impl Into<OsString> + Clone>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_lattice(cli: &Cli) -> Result<Arc<AtomicLattice>, CliError> {
    match &cli.lattice {
        Some(p) => AtomicLattice::load(p)
            .map(Arc::new)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => Ok(Arc::new(AtomicLattice::flat_default())),
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let lattice = load_lattice(cli)?;
    match &cli.command {
        Command::Solve { format, vars, emit, polarity, file } => {
            let p = match polarity {
                Side::Pos => Polarity::Positive,
                Side::Neg => Polarity::Negative,
            };
            solve(&read(file)?, *format, vars, *emit, p, &lattice, out, err)
        }
        Command::Infer { monomorphic, emit, file } => {
            let program = parse_ir(&read(file)?, &lattice)?;
            let opts = InferOptions { polymorphic: !monomorphic, jobs: cli.jobs.max(1) };
            let res = timed_infer(&program, &lattice, opts, cli.repeat.max(1))?;
            for (f, ds) in &res.diagnostics {
                for d in ds {
                    writeln!(err, "{f}: {d}").map_err(io)?;
                }
            }
            for d in &res.env.diagnostics {
                writeln!(err, "warning: {d}").map_err(io)?;
            }
            match emit {
                InferEmit::Json => {
                    let text = serde_json::to_string_pretty(&res.to_json(false, true)).expect("json values serialize");
                    writeln!(out, "{text}").map_err(io)?;
                }
                InferEmit::Dot => {
                    for (f, a) in &res.automata {
                        write!(out, "{}", dot::to_dot(a, f)).map_err(io)?;
                    }
                }
            }
            Ok(())
        }
        Command::Distance { emit, inferred, ground } => {
            let report = compare_files(&read_json(inferred)?, &read_json(ground)?, &lattice, cli.depth)
                .map_err(|e| CliError::Input(e.to_string()))?;
            for w in &report.warnings {
                writeln!(err, "warning: {w}").map_err(io)?;
            }
            match emit {
                ReportEmit::Text => {
                    for (f, d) in &report.per_function {
                        writeln!(out, "{f}\t{d:.4}").map_err(io)?;
                    }
                    writeln!(out, "mean\t{:.4}", report.mean).map_err(io)?;
                }
                ReportEmit::Json => {
                    let v = json!({"functions": report.per_function, "mean": report.mean});
                    writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json values serialize")).map_err(io)?;
                }
            }
            Ok(())
        }
        Command::Synth { size } => {
            for c in synthetic_constraints(*size, cli.seed) {
                writeln!(out, "{c}").map_err(io)?;
            }
            Ok(())
        }
    }
}

fn timed_infer(
    program: &crate::ir::IrProgram,
    lattice: &Arc<AtomicLattice>,
    opts: InferOptions,
    repeat: u32,
) -> Result<InferenceResult, CliError> {
    let mut res = infer(program, lattice.clone(), opts)?;
    for _ in 1..repeat {
        let again = infer(program, lattice.clone(), opts)?;
        for (f, t) in again.nanos {
            *res.nanos.entry(f).or_default() += t;
        }
    }
    for t in res.nanos.values_mut() {
        *t /= u128::from(repeat);
    }
    Ok(res)
}

#[allow(clippy::too_many_arguments)]
fn solve(
    text: &str,
    format: Format,
    vars: &[String],
    emit: SolveEmit,
    p: Polarity,
    lattice: &Arc<AtomicLattice>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let form = match format {
        Format::Binsub => ConstraintForm::BinSub,
        Format::Retypd => ConstraintForm::Retypd,
    };
    let cs = parse_constraints(text, form, lattice, &mut FreshNames::new("t"))
        .map_err(|e| CliError::Input(e.to_string()))?;
    if cs.is_empty() && vars.is_empty() {
        return Ok(());
    }
    let start = Instant::now();
    let mut store = ConstraintStore::new(lattice.clone());
    store.add_all(&cs);
    for d in store.diagnostics() {
        writeln!(err, "warning: {d}").map_err(io)?;
    }
    let names: Vec<String> = if vars.is_empty() {
        store.variables().filter(|v| !v.starts_with('#')).map(String::from).collect()
    } else {
        vars.to_vec()
    };

    let mut env = TypeEnvironment::new();
    let mut results = serde_json::Map::new();
    let mut decls = Vec::new();
    for v in &names {
        let automaton = build_from_store(&store, &PolarType::var(v.clone()), p)?.simplify()?;
        match emit {
            SolveEmit::Polar => writeln!(out, "{v}: {}", store.coalesce_var(v, p)).map_err(io)?,
            SolveEmit::Dot => write!(out, "{}", dot::to_dot(&automaton, v)).map_err(io)?,
            SolveEmit::Ctype => decls.push(declare(&lower(&automaton, &mut env), v, &env)),
            SolveEmit::Json => {
                let ct = lower(&automaton, &mut env);
                results.insert(
                    v.clone(),
                    json!({
                        "polar": store.coalesce_var(v, p).to_string(),
                        "ctype": to_json(&ct),
                        "c": declare(&ct, v, &env),
                        "states": automaton.len(),
                    }),
                );
            }
        }
    }
    for d in &env.diagnostics {
        writeln!(err, "warning: {d}").map_err(io)?;
    }
    match emit {
        SolveEmit::Ctype => {
            write!(out, "{}", render_env(&env)).map_err(io)?;
            for d in decls {
                writeln!(out, "{d};").map_err(io)?;
            }
        }
        SolveEmit::Json => {
            let types: serde_json::Map<String, Value> = env.decls.iter().map(|(n, d)| (n.clone(), to_json(d))).collect();
            let v = json!({"variables": results, "types": types, "time_ns": start.elapsed().as_nanos() as u64});
            writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json values serialize")).map_err(io)?;
        }
        _ => {}
    }
    Ok(())
}
