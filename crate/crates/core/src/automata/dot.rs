//! Graphviz export.

use std::fmt::Write;

use super::TypeAutomaton;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn to_dot(a: &TypeAutomaton, name: &str) -> String {
    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", escape(name)).unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    writeln!(out, "  node [shape=box];").unwrap();
    for (s, label) in a.labels.iter().enumerate() {
        let shape = if s == a.start { ", peripheries=2" } else { "" };
        writeln!(out, "  q{s} [label=\"{}\"{shape}];", escape(&label.to_string())).unwrap();
    }
    for (s, l, t) in a.transitions() {
        writeln!(out, "  q{s} -> q{t} [label=\"{}\"];", escape(&l.to_string())).unwrap();
    }
    out.push_str("}\n");
    out
}
