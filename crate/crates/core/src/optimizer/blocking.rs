use std::fmt;

use super::OptError;
use crate::ir::{Annotation, Bound, Iteration, IrNode, LoopNest};

/// Block sizes for some of the parallel spatial dimensions; dimensions not
/// listed stay unblocked.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BlockingPlan {
    pub blocks: Vec<(String, usize)>,
}

impl BlockingPlan {
    pub fn unblocked() -> Self {
        BlockingPlan::default()
    }

    pub fn new(blocks: &[(&str, usize)]) -> Self {
        BlockingPlan {
            blocks: blocks.iter().map(|(d, b)| (d.to_string(), *b)).collect(),
        }
    }

    pub fn is_unblocked(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn size_of(&self, dim: &str) -> Option<usize> {
        self.blocks.iter().find(|(d, _)| d == dim).map(|(_, b)| *b)
    }
}

impl fmt::Display for BlockingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.blocks.is_empty() {
            return f.write_str("off");
        }
        let parts: Vec<String> = self.blocks.iter().map(|(d, b)| format!("{d}={b}")).collect();
        f.write_str(&parts.join(","))
    }
}

fn lit(b: &Bound) -> Option<i64> {
    match b {
        Bound::Lit(v) => Some(*v),
        _ => None,
    }
}

/// The chain of perfectly nested loops starting at the parallel loop.
fn parallel_chain(nodes: &mut [IrNode]) -> Option<&mut Iteration> {
    fn contains(nodes: &[IrNode]) -> bool {
        nodes.iter().any(|n| match n {
            IrNode::Iteration(it) => it.has(Annotation::Parallel) || contains(&it.body),
            _ => false,
        })
    }
    for n in nodes {
        if let IrNode::Iteration(it) = n {
            if it.has(Annotation::Parallel) {
                return Some(it);
            }
            if contains(&it.body) {
                return parallel_chain(&mut it.body);
            }
        }
    }
    None
}

fn chain_of(top: &Iteration) -> Vec<Iteration> {
    let mut out = vec![];
    let mut cur = top.clone();
    loop {
        let next = match cur.body.as_slice() {
            [IrNode::Iteration(inner)] => Some(inner.clone()),
            _ => None,
        };
        out.push(cur);
        match next {
            Some(n) => cur = n,
            None => break,
        }
    }
    out
}

/// Splits each planned loop into a loop over block starts and an inner loop
/// capped at `min(start + block, end)`. The parallel annotation moves to the
/// outermost loop of the new chain.
pub fn block_loops(nest: &LoopNest, plan: &BlockingPlan) -> Result<LoopNest, OptError> {
    let mut out = nest.clone();
    if plan.is_unblocked() {
        return Ok(out);
    }
    let Some(top) = parallel_chain(&mut out.body) else {
        return Err(OptError::NotBlockable(plan.blocks[0].0.clone()));
    };
    let chain = chain_of(top);
    for (dim, size) in &plan.blocks {
        let Some(it) = chain.iter().find(|it| &it.dim == dim) else {
            return Err(OptError::NotBlockable(dim.clone()));
        };
        let (lo, hi) = match (lit(&it.start), lit(&it.end)) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => return Err(OptError::NotBlockable(dim.clone())),
        };
        let extent = (hi - lo).max(0) as usize;
        if *size == 0 || *size > extent {
            return Err(OptError::BadBlockSize {
                dim: dim.clone(),
                size: *size,
                extent,
            });
        }
    }
    let leaf_body = chain.last().unwrap().body.clone();
    let mut block_loops = Vec::new();
    let mut point_loops = Vec::new();
    for it in &chain {
        let mut point = it.clone();
        point.body = Vec::new();
        point.annotations.remove(&Annotation::Parallel);
        if let Some(size) = plan.size_of(&it.dim) {
            let blk = format!("{}_blk", it.var);
            block_loops.push(Iteration {
                dim: it.dim.clone(),
                var: blk.clone(),
                start: it.start.clone(),
                end: it.end.clone(),
                step: size as i64,
                direction: it.direction,
                annotations: Default::default(),
                body: Vec::new(),
            });
            point.start = Bound::Var {
                name: blk.clone(),
                offset: 0,
            };
            point.end = Bound::Min(
                Box::new(Bound::Var {
                    name: blk,
                    offset: size as i64,
                }),
                Box::new(it.end.clone()),
            );
        }
        point_loops.push(point);
    }
    let mut loops: Vec<Iteration> = block_loops.into_iter().chain(point_loops).collect();
    loops[0].annotations.insert(Annotation::Parallel);
    let mut body = leaf_body;
    for mut l in loops.into_iter().rev() {
        l.body = body;
        body = vec![IrNode::Iteration(l)];
    }
    let IrNode::Iteration(new_top) = body.pop().unwrap() else {
        unreachable!()
    };
    *top = new_top;
    Ok(out)
}

fn resolve(b: &Bound, var: &str, value: i64) -> Bound {
    match b {
        Bound::Var { name, offset } if name == var => Bound::Lit(value + offset),
        Bound::Min(x, y) => {
            let (x, y) = (resolve(x, var, value), resolve(y, var, value));
            match (&x, &y) {
                (Bound::Lit(a), Bound::Lit(c)) => Bound::Lit(*a.min(c)),
                _ => Bound::Min(Box::new(x), Box::new(y)),
            }
        }
        other => other.clone(),
    }
}

fn resolve_nodes(nodes: &mut [IrNode], var: &str, value: i64) {
    for n in nodes {
        if let IrNode::Iteration(it) = n {
            it.start = resolve(&it.start, var, value);
            it.end = resolve(&it.end, var, value);
            resolve_nodes(&mut it.body, var, value);
        }
    }
}

/// Removes loops that run exactly once (such as a block loop whose block
/// covers the whole extent), folding their counter into inner bounds.
pub fn normalize(nest: &LoopNest) -> LoopNest {
    fn go(nodes: Vec<IrNode>) -> Vec<IrNode> {
        let mut out = Vec::new();
        for n in nodes {
            match n {
                IrNode::Iteration(mut it) => {
                    let once = match (lit(&it.start), lit(&it.end)) {
                        (Some(lo), Some(hi)) => hi > lo && it.step >= hi - lo && it.var.ends_with("_blk"),
                        _ => false,
                    };
                    if once {
                        let lo = lit(&it.start).unwrap();
                        let parallel = it.has(Annotation::Parallel);
                        resolve_nodes(&mut it.body, &it.var, lo);
                        let mut inner = go(it.body);
                        if parallel {
                            if let Some(IrNode::Iteration(first)) = inner.first_mut() {
                                first.annotations.insert(Annotation::Parallel);
                            }
                        }
                        out.extend(inner);
                    } else {
                        it.body = go(it.body);
                        out.push(IrNode::Iteration(it));
                    }
                }
                IrNode::Single(b) => out.push(IrNode::Single(go(b))),
                other => out.push(other),
            }
        }
        out
    }
    let mut out = nest.clone();
    out.body = go(std::mem::take(&mut out.body));
    out
}

/// Candidate plans: unblocked, plus every combination of `sizes` over all
/// parallel spatial dimensions except the innermost one. Sizes larger than
/// a loop's extent are skipped.
pub fn default_candidates(nest: &LoopNest, sizes: &[usize]) -> Vec<BlockingPlan> {
    let mut probe = nest.clone();
    let mut plans = vec![BlockingPlan::unblocked()];
    let Some(top) = parallel_chain(&mut probe.body) else {
        return plans;
    };
    let chain = chain_of(top);
    let blockable: Vec<(String, usize)> = chain[..chain.len().saturating_sub(1)]
        .iter()
        .filter_map(|it| match (lit(&it.start), lit(&it.end)) {
            (Some(lo), Some(hi)) => Some((it.dim.clone(), (hi - lo).max(0) as usize)),
            _ => None,
        })
        .collect();
    let mut combos: Vec<Vec<(String, usize)>> = vec![vec![]];
    for (dim, extent) in &blockable {
        let mut next = Vec::new();
        for c in &combos {
            for &s in sizes.iter().filter(|&&s| s >= 1 && s <= *extent) {
                let mut c = c.clone();
                c.push((dim.clone(), s));
                next.push(c);
            }
        }
        combos = next;
    }
    if !blockable.is_empty() {
        plans.extend(combos.into_iter().filter(|c| !c.is_empty()).map(|blocks| BlockingPlan { blocks }));
    }
    plans
}
