//! Indented text form of a loop nest, for debugging and golden tests.

use std::fmt::Write;

use super::{AliasSource, Annotation, Bound, Direction, IrNode, LoopNest};

pub(crate) fn bound_str(b: &Bound) -> String {
    match b {
        Bound::Lit(v) => v.to_string(),
        Bound::Var { name, offset: 0 } => name.clone(),
        Bound::Var { name, offset } if *offset < 0 => format!("{name} - {}", -offset),
        Bound::Var { name, offset } => format!("{name} + {offset}"),
        Bound::Min(a, b) => format!("min({}, {})", bound_str(a), bound_str(b)),
    }
}

pub fn print_nest(nest: &LoopNest) -> String {
    let mut out = String::new();
    for t in &nest.tables {
        let _ = writeln!(out, "table {}{:?}", t.name, t.shape);
    }
    write_nodes(&nest.body, 0, &mut out);
    out
}

fn write_nodes(nodes: &[IrNode], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for n in nodes {
        match n {
            IrNode::Iteration(it) => {
                let mut tags: Vec<&str> = it
                    .annotations
                    .iter()
                    .map(|a| match a {
                        Annotation::Parallel => "parallel",
                        Annotation::Simd => "simd",
                    })
                    .collect();
                if it.direction == Direction::Backward {
                    tags.push("backward");
                }
                let step = if it.step == 1 {
                    String::new()
                } else {
                    format!(" step {}", it.step)
                };
                let tags = if tags.is_empty() {
                    String::new()
                } else {
                    format!(" [{}]", tags.join(", "))
                };
                let _ = writeln!(
                    out,
                    "{pad}for {} in [{}, {}){step}{tags}",
                    it.var,
                    bound_str(&it.start),
                    bound_str(&it.end)
                );
                write_nodes(&it.body, depth + 1, out);
            }
            IrNode::Single(body) => {
                let _ = writeln!(out, "{pad}single");
                write_nodes(body, depth + 1, out);
            }
            IrNode::Alias(a) => {
                let (src, add) = match &a.source {
                    AliasSource::Counter { var, shift } => (var, *shift),
                    AliasSource::Previous { alias, step } => (alias, *step),
                };
                let rhs = if add == 0 {
                    src.clone()
                } else {
                    format!("{src} + {add}")
                };
                let _ = writeln!(out, "{pad}{} = ({rhs}) % {}", a.name, a.period);
            }
            IrNode::Expression(a) => {
                let _ = writeln!(out, "{pad}{} = {}", a.lhs, a.rhs);
            }
        }
    }
}
