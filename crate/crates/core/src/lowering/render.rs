//! C declaration syntax and JSON for lowered types.

use std::fmt::Write;

use super::{CType, TypeEnvironment};

fn base(t: &CType, env: &TypeEnvironment) -> String {
    match t {
        CType::Prim { name, .. } => name.clone(),
        CType::Named { name } if env.is_struct(name) => format!("struct {name}"),
        CType::Named { name } => name.clone(),
        CType::Unknown { width: Some(w) } => format!("undefined{}", w.div_ceil(8)),
        CType::Unknown { width: None } => "void".into(),
        CType::Struct { name: Some(n), .. } => format!("struct {n}"),
        CType::Struct { name: None, fields } => {
            let mut s = String::from("struct {");
            for f in fields {
                write!(s, " {};", declare(&f.ty, &format!("f{}", f.offset), env)).unwrap();
            }
            s.push_str(" }");
            s
        }
        CType::Ptr { .. } | CType::Func { .. } => unreachable!("not a base type"),
    }
}

fn params(ps: &[CType], env: &TypeEnvironment) -> String {
    if ps.is_empty() {
        return "void".into();
    }
    ps.iter()
        .enumerate()
        .map(|(i, p)| declare(p, &format!("a{i}"), env))
        .collect::<Vec<_>>()
        .join(", ")
}

fn return_type(rs: &[CType]) -> CType {
    match rs {
        [] => CType::unknown(),
        [r] => r.clone(),
        _ => CType::Struct {
            name: None,
            fields: rs
                .iter()
                .enumerate()
                .map(|(i, r)| super::CField { offset: i as u32, size: 8, ty: r.clone() })
                .collect(),
        },
    }
}

/// Declares `declarator` with type `t`, e.g. `struct t0 *x` or
/// `int32 (*f)(void)`. An empty declarator gives an abstract type name.
pub fn declare(t: &CType, declarator: &str, env: &TypeEnvironment) -> String {
    match t {
        CType::Ptr { pointee } => {
            let inner = if matches!(**pointee, CType::Func { .. }) {
                format!("(*{declarator})")
            } else {
                format!("*{declarator}")
            };
            declare(pointee, &inner, env)
        }
        CType::Func { params: ps, returns } => {
            declare(&return_type(returns), &format!("{declarator}({})", params(ps, env)), env)
        }
        _ => {
            let b = base(t, env);
            if declarator.is_empty() {
                b
            } else {
                format!("{b} {declarator}")
            }
        }
    }
}

/// The abstract type name of `t`, e.g. `struct t0 *`.
pub fn type_name(t: &CType, env: &TypeEnvironment) -> String {
    declare(t, "", env).trim_end().to_string()
}

/// Definitions for every declaration in `env`, structs first as forward
/// declarations.
pub fn render_env(env: &TypeEnvironment) -> String {
    let mut out = String::new();
    for (n, d) in &env.decls {
        if matches!(d, CType::Struct { .. }) {
            writeln!(out, "struct {n};").unwrap();
        }
    }
    for (n, d) in &env.decls {
        match d {
            CType::Struct { fields, .. } => {
                writeln!(out, "struct {n} {{").unwrap();
                for f in fields {
                    writeln!(
                        out,
                        "    {}; /* offset {}, {} bits */",
                        declare(&f.ty, &format!("f{}", f.offset), env),
                        f.offset,
                        f.size
                    )
                    .unwrap();
                }
                out.push_str("};\n");
            }
            other => writeln!(out, "typedef {};", declare(other, n, env)).unwrap(),
        }
    }
    out
}

pub fn to_json(t: &CType) -> serde_json::Value {
    serde_json::to_value(t).expect("C types serialize")
}

pub fn from_json(v: &serde_json::Value) -> Result<CType, serde_json::Error> {
    serde_json::from_value(v.clone())
}
