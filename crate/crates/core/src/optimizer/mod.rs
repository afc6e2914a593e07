//! Expression- and loop-level transformations: common subexpression
//! elimination, scalar folding and loop blocking with auto-tuning.

mod autotune;
mod blocking;

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub use autotune::{autotune, AutotuneOptions, AutotuneReport};
pub use blocking::{block_loops, default_candidates, normalize, BlockingPlan};

use crate::ir::{Assignment, IrError, IrNode, LoopNest};
use crate::symbolic::{count_ops, expand_numerator, substitute, Expr, Node, Num, SymbolicError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptError {
    #[error("unresolved symbols: {}", .0.join(", "))]
    UnresolvedSymbol(Vec<String>),
    #[error("bad block size {size} for `{dim}` (iteration extent {extent})")]
    BadBlockSize { dim: String, size: usize, extent: usize },
    #[error("blocking plan names {0}, which is not a parallel spatial dimension")]
    NotBlockable(String),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}

/// Hoisted temporaries followed by the rewritten expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct CseResult {
    pub temps: Vec<(String, Expr)>,
    pub body: Vec<Expr>,
}

impl CseResult {
    pub fn count_ops(&self) -> usize {
        self.temps.iter().map(|(_, e)| count_ops(e)).sum::<usize>() + self.body.iter().map(count_ops).sum::<usize>()
    }

    /// Substitutes every temporary back into the body.
    pub fn inline(&self) -> Vec<Expr> {
        let mut env: Vec<(Expr, Expr)> = Vec::new();
        for (name, e) in &self.temps {
            let value = replace_all(e, &env);
            env.push((Expr::symbol(name), value));
        }
        self.body.iter().map(|e| replace_all(e, &env)).collect()
    }
}

fn is_op(e: &Expr) -> bool {
    matches!(e.node(), Node::Add(_) | Node::Mul(_) | Node::Pow(..))
}

/// Structural replacement without simplification.
fn replace_all(e: &Expr, table: &[(Expr, Expr)]) -> Expr {
    let map: HashMap<&Expr, &Expr> = table.iter().map(|(k, v)| (k, v)).collect();
    fn go(e: &Expr, map: &HashMap<&Expr, &Expr>) -> Expr {
        if let Some(v) = map.get(e) {
            return (*v).clone();
        }
        let ops = e.operands();
        if ops.is_empty() {
            return e.clone();
        }
        e.with_children(ops.iter().map(|c| go(c, map)).collect())
    }
    go(e, &map)
}

/// Visits the arithmetic subtrees of `e` outside array indices.
fn for_each_candidate(e: &Expr, f: &mut dyn FnMut(&Expr)) {
    match e.node() {
        Node::Indexed { .. } | Node::Function { .. } => {}
        _ => {
            if is_op(e) {
                f(e);
            }
            for c in e.operands() {
                for_each_candidate(&c, f);
            }
        }
    }
}

/// Common subexpression elimination with temporaries named `{prefix}0, {prefix}1, ...`.
/// `blocked` lists array names whose reads must not be hoisted.
pub fn cse_with(exprs: &[Expr], prefix: &str, blocked: &BTreeSet<String>) -> CseResult {
    let mut counts: HashMap<Expr, usize> = HashMap::new();
    for e in exprs {
        for_each_candidate(e, &mut |s| *counts.entry(s.clone()).or_insert(0) += 1);
    }
    let reads_blocked = |e: &Expr| {
        let mut hit = false;
        e.walk(&mut |n| {
            if let Some(b) = n.base_name() {
                hit |= blocked.contains(b);
            }
        });
        hit
    };
    // Post-order rewrite: repeated subtrees become temporaries, children first.
    let mut temps: Vec<(Expr, Expr)> = Vec::new();
    let mut memo: HashMap<Expr, Expr> = HashMap::new();
    fn rewrite(
        e: &Expr,
        counts: &HashMap<Expr, usize>,
        temps: &mut Vec<(Expr, Expr)>,
        memo: &mut HashMap<Expr, Expr>,
        prefix: &str,
        reads_blocked: &dyn Fn(&Expr) -> bool,
    ) -> Expr {
        if matches!(e.node(), Node::Indexed { .. } | Node::Function { .. }) || !is_op(e) {
            return e.clone();
        }
        if let Some(t) = memo.get(e) {
            return t.clone();
        }
        let children: Vec<Expr> = e
            .operands()
            .iter()
            .map(|c| rewrite(c, counts, temps, memo, prefix, reads_blocked))
            .collect();
        let rebuilt = e.with_children(children);
        if counts.get(e).copied().unwrap_or(0) >= 2 && !reads_blocked(e) {
            let name = Expr::symbol(&format!("{prefix}{}", temps.len()));
            temps.push((name.clone(), rebuilt));
            memo.insert(e.clone(), name.clone());
            name
        } else {
            rebuilt
        }
    }
    let mut body: Vec<Expr> = exprs
        .iter()
        .map(|e| rewrite(e, &counts, &mut temps, &mut memo, prefix, &reads_blocked))
        .collect();
    // Inline temporaries that ended up used only once.
    loop {
        let mut uses: HashMap<Expr, usize> = HashMap::new();
        let mut count = |e: &Expr| {
            e.walk(&mut |n| {
                if n.as_symbol().is_some() {
                    *uses.entry(n.clone()).or_insert(0) += 1;
                }
            })
        };
        temps.iter().for_each(|(_, e)| count(e));
        body.iter().for_each(|e| count(e));
        let Some(pos) = temps.iter().position(|(n, _)| uses.get(n).copied().unwrap_or(0) < 2) else {
            break;
        };
        let (name, value) = temps.remove(pos);
        let table = [(name, value)];
        for (_, e) in temps.iter_mut() {
            *e = replace_all(e, &table);
        }
        for e in body.iter_mut() {
            *e = replace_all(e, &table);
        }
    }
    // Renumber densely in definition order.
    let renames: Vec<(Expr, Expr)> = temps
        .iter()
        .enumerate()
        .map(|(k, (n, _))| (n.clone(), Expr::symbol(&format!("{prefix}{k}"))))
        .collect();
    let temps = temps
        .iter()
        .zip(&renames)
        .map(|((_, e), (_, new))| (new.as_symbol().unwrap().to_string(), replace_all(e, &renames)))
        .collect();
    for e in body.iter_mut() {
        *e = replace_all(e, &renames);
    }
    CseResult { temps, body }
}

pub fn cse(exprs: &[Expr]) -> CseResult {
    cse_with(exprs, "temp", &BTreeSet::new())
}

/// Applies CSE to every parallel stencil block of `nest`; temporaries are
/// scalars local to the innermost loop body. Sequential custom iterations
/// are left alone.
pub fn cse_nest(nest: &mut LoopNest) -> Result<(), OptError> {
    let mut next = 0usize;
    fn go(nodes: &mut [IrNode], in_single: bool, next: &mut usize) {
        for n in nodes {
            match n {
                IrNode::Single(b) => go(b, true, next),
                IrNode::Iteration(it) if !in_single => {
                    let leaf = it.body.iter().all(|c| matches!(c, IrNode::Expression(_)));
                    if !leaf {
                        go(&mut it.body, in_single, next);
                        continue;
                    }
                    let block: Vec<Assignment> = it
                        .body
                        .iter()
                        .filter_map(|c| match c {
                            IrNode::Expression(a) => Some(a.clone()),
                            _ => None,
                        })
                        .collect();
                    let written: BTreeSet<String> = block
                        .iter()
                        .filter_map(|a| a.lhs.base_name().map(str::to_string))
                        .collect();
                    let rhs: Vec<Expr> = block.iter().map(|a| a.rhs.clone()).collect();
                    let prefix = "temp";
                    let r = cse_with(&rhs, prefix, &written);
                    // keep names unique across blocks of one kernel
                    let shift: Vec<(Expr, Expr)> = (0..r.temps.len())
                        .map(|k| (Expr::symbol(&format!("{prefix}{k}")), Expr::symbol(&format!("{prefix}{}", k + *next))))
                        .collect();
                    let mut body = Vec::new();
                    for (name, e) in &r.temps {
                        body.push(IrNode::Expression(Assignment {
                            lhs: replace_all(&Expr::symbol(name), &shift),
                            rhs: replace_all(e, &shift),
                        }));
                    }
                    for (a, e) in block.iter().zip(&r.body) {
                        body.push(IrNode::Expression(Assignment {
                            lhs: a.lhs.clone(),
                            rhs: replace_all(e, &shift),
                        }));
                    }
                    *next += r.temps.len();
                    it.body = body;
                }
                _ => {}
            }
        }
    }
    go(&mut nest.body, false, &mut next);
    Ok(())
}

/// Symbols of `e` outside array indices.
fn scalar_symbols(e: &Expr, out: &mut BTreeSet<String>) {
    match e.node() {
        Node::Symbol(s) => {
            out.insert(s.to_string());
        }
        Node::Indexed { .. } => {}
        _ => {
            for c in e.operands() {
                scalar_symbols(&c, out);
            }
        }
    }
}

/// Replaces scalar symbols (spacings, timestep, physical constants) by
/// numbers and folds the result, so only array reads and literals remain.
/// A quotient keeps its denominator whole so the divisor is rounded once.
pub fn fold_scalars(nest: &LoopNest, subs: &BTreeMap<String, Num>) -> Result<LoopNest, OptError> {
    let mapping: Vec<(Expr, Expr)> = subs
        .iter()
        .map(|(k, v)| (Expr::symbol(k), Expr::from_num(v.clone())))
        .collect();
    let mut out = nest.clone();
    let mut temps: BTreeSet<String> = BTreeSet::new();
    let mut missing: BTreeSet<String> = BTreeSet::new();
    out.map_assignments(&mut |a| {
        let rhs = expand_numerator(&substitute(&a.rhs, &mapping).map_err(IrError::from)?).map_err(IrError::from)?;
        let mut syms = BTreeSet::new();
        scalar_symbols(&rhs, &mut syms);
        missing.extend(syms.into_iter().filter(|s| !temps.contains(s)));
        if let Some(t) = a.lhs.as_symbol() {
            temps.insert(t.to_string());
        }
        Ok(Assignment {
            lhs: a.lhs.clone(),
            rhs,
        })
    })?;
    if !missing.is_empty() {
        return Err(OptError::UnresolvedSymbol(missing.into_iter().collect()));
    }
    Ok(out)
}
