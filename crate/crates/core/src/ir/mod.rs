//! Loop-nest IR: indexed accesses, iteration spaces, time-buffer aliasing and
//! user-defined iterations, plus a reference interpreter and a text printer.

mod interp;
mod print;

use std::collections::{BTreeMap, BTreeSet};

pub use interp::{interpret, Trace};
pub use print::print_nest;

use crate::grid::{FunctionMeta, SymbolRegistry, SPACE_DIMS, TIME_DIM};
use crate::symbolic::{simplify, substitute, Eqn, Expr, Node, SymbolicError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IrError {
    #[error("argument `{arg}` of `{access}` is not `{dim}` plus an integer number of spacings")]
    NonIntegerOffset { access: String, dim: String, arg: String },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("empty iteration space along `{dim}`: extent {extent}, pads {lower_pad}+{upper_pad}")]
    EmptyIterationSpace {
        dim: String,
        extent: usize,
        lower_pad: usize,
        upper_pad: usize,
    },
    #[error("inconsistent shapes: {0}")]
    ShapeMismatch(String),
    #[error("index `{0}` is not bound by an enclosing iteration")]
    UnboundIndex(String),
    #[error("the loop nest has no time dimension")]
    NoTimeDimension,
    #[error("`{base}` reads the buffer it writes in the same timestep (offsets {read} and {written})")]
    TimeBufferHazard { base: String, read: i64, written: i64 },
    #[error("name `{0}` is already used by another array")]
    DuplicateArray(String),
    #[error("access {array}{index:?} is out of bounds for shape {shape:?}")]
    OutOfBounds {
        array: String,
        index: Vec<i64>,
        shape: Vec<usize>,
    },
    #[error("no value for `{0}`")]
    Unbound(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}

/// A named iteration index with its extent and stencil reach.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dimension {
    pub name: String,
    pub extent: usize,
    pub lower_pad: usize,
    pub upper_pad: usize,
    pub is_time: bool,
    pub buffer_count: Option<usize>,
    pub parallelizable: bool,
}

impl Dimension {
    pub fn space(name: &str, extent: usize) -> Self {
        Dimension {
            name: name.to_string(),
            extent,
            lower_pad: 0,
            upper_pad: 0,
            is_time: false,
            buffer_count: None,
            parallelizable: true,
        }
    }

    pub fn time(steps: usize) -> Self {
        Dimension {
            name: TIME_DIM.to_string(),
            extent: steps,
            lower_pad: 0,
            upper_pad: 0,
            is_time: true,
            buffer_count: None,
            parallelizable: false,
        }
    }

    /// A sequential user-defined index, e.g. over sparse points.
    pub fn custom(name: &str, extent: usize) -> Self {
        Dimension {
            parallelizable: false,
            ..Dimension::space(name, extent)
        }
    }

    /// Half-open loop bounds after removing the pads.
    pub fn bounds(&self) -> (i64, i64) {
        (self.lower_pad as i64, self.extent as i64 - self.upper_pad as i64)
    }
}

/// An array access whose every index is a dimension plus a constant offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedAccess {
    pub base: String,
    pub indices: Vec<(String, i64)>,
}

impl IndexedAccess {
    /// Reads `f[x + 1, y]` style accesses; `None` for anything else.
    pub fn from_expr(e: &Expr) -> Option<Self> {
        let Node::Indexed { base, indices } = e.node() else {
            return None;
        };
        let indices = indices.iter().map(split_offset).collect::<Option<Vec<_>>>()?;
        Some(IndexedAccess {
            base: base.to_string(),
            indices,
        })
    }

    pub fn to_expr(&self) -> Expr {
        let idx = self
            .indices
            .iter()
            .map(|(d, k)| simplify(&(Expr::symbol(d) + Expr::int(*k))).expect("integer sum"))
            .collect();
        Expr::indexed(&self.base, idx)
    }
}

/// Splits `v + k` (or plain `v`) into the variable name and `k`.
fn split_offset(e: &Expr) -> Option<(String, i64)> {
    match e.node() {
        Node::Symbol(s) => Some((s.to_string(), 0)),
        Node::Add(terms) if terms.len() == 2 => {
            let k = terms[0].as_num()?.as_i64()?;
            let v = terms[1].as_symbol()?;
            Some((v.to_string(), k))
        }
        _ => None,
    }
}

/// Loop bound: a literal, a variable plus a constant, or the minimum of two bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Bound {
    Lit(i64),
    Var { name: String, offset: i64 },
    Min(Box<Bound>, Box<Bound>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Annotation {
    Parallel,
    Simd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iteration {
    pub dim: String,
    pub var: String,
    pub start: Bound,
    pub end: Bound,
    pub step: i64,
    pub direction: Direction,
    pub annotations: BTreeSet<Annotation>,
    pub body: Vec<IrNode>,
}

impl Iteration {
    pub fn has(&self, a: Annotation) -> bool {
        self.annotations.contains(&a)
    }
}

/// `lhs = rhs`. A scalar lhs declares a local temporary.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Assignment {
    pub fn is_scalar(&self) -> bool {
        self.lhs.as_symbol().is_some()
    }
}

/// Where an alias takes its value from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AliasSource {
    /// `(counter + shift) % period`
    Counter { var: String, shift: i64 },
    /// `(alias + step) % period`
    Previous { alias: String, step: i64 },
}

/// A time-buffer alias such as `t1 = (t0 + 1) % 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeAlias {
    pub name: String,
    pub period: usize,
    pub source: AliasSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IrNode {
    Iteration(Iteration),
    Expression(Assignment),
    Alias(TimeAlias),
    /// Body executed by one thread inside the parallel region.
    Single(Vec<IrNode>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableData {
    Int(Vec<i64>),
    Float(Vec<f64>),
}

/// Read-only lookup table baked into the kernel, such as per-point cell indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstTable {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TableData,
}

impl ConstTable {
    pub fn is_int(&self) -> bool {
        matches!(self.data, TableData::Int(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeLoop {
    pub lo: i64,
    pub hi: i64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopNest {
    /// Functions referenced by the nest, in registry declaration order.
    pub params: Vec<FunctionMeta>,
    pub tables: Vec<ConstTable>,
    pub dims: Vec<Dimension>,
    pub body: Vec<IrNode>,
}

/// Loop counter name for a dimension: `x, y, z` become `i1, i2, i3`, time
/// takes the next number, anything else keeps its own name.
pub fn loop_var(dim: &str, space_rank: usize) -> String {
    if let Some(k) = SPACE_DIMS.iter().position(|d| *d == dim) {
        format!("i{}", k + 1)
    } else if dim == TIME_DIM {
        format!("i{}", space_rank + 1)
    } else {
        dim.to_string()
    }
}

impl LoopNest {
    /// Element type of the referenced functions (`f32` when there are none).
    pub fn element_type(&self) -> crate::grid::ElementType {
        self.params.first().map_or(crate::grid::ElementType::F32, |m| m.dtype)
    }

    pub fn space_rank(&self) -> usize {
        self.dims.iter().filter(|d| !d.is_time && d.parallelizable).count()
    }

    pub fn time_loop(&self) -> Option<&Iteration> {
        self.body.iter().find_map(|n| match n {
            IrNode::Iteration(it) if it.dim == TIME_DIM => Some(it),
            _ => None,
        })
    }

    fn time_loop_mut(&mut self) -> Option<&mut Iteration> {
        self.body.iter_mut().find_map(|n| match n {
            IrNode::Iteration(it) if it.dim == TIME_DIM => Some(it),
            _ => None,
        })
    }

    /// All assignments in execution order.
    pub fn assignments(&self) -> Vec<&Assignment> {
        fn go<'a>(nodes: &'a [IrNode], out: &mut Vec<&'a Assignment>) {
            for n in nodes {
                match n {
                    IrNode::Iteration(it) => go(&it.body, out),
                    IrNode::Single(b) => go(b, out),
                    IrNode::Expression(a) => out.push(a),
                    IrNode::Alias(_) => {}
                }
            }
        }
        let mut out = Vec::new();
        go(&self.body, &mut out);
        out
    }

    /// Applies `f` to every assignment.
    pub fn map_assignments(
        &mut self,
        f: &mut dyn FnMut(&Assignment) -> Result<Assignment, IrError>,
    ) -> Result<(), IrError> {
        fn go(
            nodes: &mut [IrNode],
            f: &mut dyn FnMut(&Assignment) -> Result<Assignment, IrError>,
        ) -> Result<(), IrError> {
            for n in nodes {
                match n {
                    IrNode::Iteration(it) => go(&mut it.body, f)?,
                    IrNode::Single(b) => go(b, f)?,
                    IrNode::Expression(a) => *a = f(a)?,
                    IrNode::Alias(_) => {}
                }
            }
            Ok(())
        }
        go(&mut self.body, f)
    }

    /// Rewrites the body of every innermost loop (the stencil update blocks
    /// and custom iterations) as a whole.
    pub fn map_leaf_blocks(
        &mut self,
        f: &mut dyn FnMut(&[Assignment]) -> Result<Vec<Assignment>, IrError>,
    ) -> Result<(), IrError> {
        fn go(
            nodes: &mut [IrNode],
            f: &mut dyn FnMut(&[Assignment]) -> Result<Vec<Assignment>, IrError>,
        ) -> Result<(), IrError> {
            for n in nodes {
                match n {
                    IrNode::Iteration(it) => {
                        if it.body.iter().all(|c| matches!(c, IrNode::Expression(_))) {
                            let block: Vec<Assignment> = it
                                .body
                                .iter()
                                .map(|c| match c {
                                    IrNode::Expression(a) => a.clone(),
                                    _ => unreachable!(),
                                })
                                .collect();
                            it.body = f(&block)?.into_iter().map(IrNode::Expression).collect();
                        } else {
                            go(&mut it.body, f)?;
                        }
                    }
                    IrNode::Single(b) => go(b, f)?,
                    _ => {}
                }
            }
            Ok(())
        }
        go(&mut self.body, f)
    }

    pub fn param(&self, name: &str) -> Option<&FunctionMeta> {
        self.params.iter().find(|m| m.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&ConstTable> {
        self.tables.iter().find(|t| t.name == name)
    }
}

fn meta_for<'a>(registry: &'a SymbolRegistry, e: &Expr) -> Result<&'a FunctionMeta, IrError> {
    registry
        .metadata_of(e)
        .map_err(|_| IrError::UnknownSymbol(e.base_name().unwrap_or("?").to_string()))
}

/// Rewrites every function application `f(x + k*h, y)` into the indexed
/// access `f[x + k, y]`. Spacing symbols outside arguments are untouched.
pub fn indexify(registry: &SymbolRegistry, e: &Expr) -> Result<Expr, IrError> {
    let mut err = None;
    let out = e.map_bottom_up(&mut |node| {
        if err.is_some() {
            return node;
        }
        let Node::Function { name, args } = node.node() else {
            return node;
        };
        let meta = match meta_for(registry, &node) {
            Ok(m) => m,
            Err(e) => {
                err = Some(e);
                return node;
            }
        };
        let dims = meta.dims();
        if dims.len() != args.len() {
            err = Some(IrError::ShapeMismatch(format!(
                "`{name}` takes {} arguments, got {}",
                dims.len(),
                args.len()
            )));
            return node;
        }
        let mut indices = Vec::with_capacity(args.len());
        for (arg, dim) in args.iter().zip(dims) {
            match integer_offset(arg, dim) {
                Some(k) => indices.push(simplify(&(Expr::symbol(dim) + Expr::int(k))).expect("integer sum")),
                None => {
                    err = Some(IrError::NonIntegerOffset {
                        access: node.to_string(),
                        dim: dim.to_string(),
                        arg: arg.to_string(),
                    });
                    return node;
                }
            }
        }
        Expr::indexed(name, indices)
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// `k` such that `arg == dim + k * spacing(dim)`.
fn integer_offset(arg: &Expr, dim: &str) -> Option<i64> {
    let spacing = FunctionMeta::spacing_of(dim)?;
    let k = simplify(&((arg.clone() - Expr::symbol(dim)) / Expr::symbol(spacing))).ok()?;
    k.as_num()?.as_i64()
}

pub fn indexify_eqn(registry: &SymbolRegistry, eq: &Eqn) -> Result<Eqn, IrError> {
    Ok(Eqn::new(indexify(registry, &eq.lhs)?, indexify(registry, &eq.rhs)?))
}

/// Every `Indexed` node in `e`, including those nested in indices.
pub fn indexed_accesses(e: &Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    e.walk(&mut |n| {
        if matches!(n.node(), Node::Indexed { .. }) {
            out.push(n.clone());
        }
    });
    out
}

/// Spatial dimensions touched by `eqs` with pads equal to the largest
/// negative and positive offsets along each.
pub fn infer_iteration_space(registry: &SymbolRegistry, eqs: &[Eqn]) -> Result<Vec<Dimension>, IrError> {
    if eqs.is_empty() {
        return Err(IrError::EmptyIterationSpace {
            dim: "<none>".into(),
            extent: 0,
            lower_pad: 0,
            upper_pad: 0,
        });
    }
    let mut dims: Vec<Dimension> = Vec::new();
    for eq in eqs {
        for access in indexed_accesses(&eq.lhs).into_iter().chain(indexed_accesses(&eq.rhs)) {
            let meta = meta_for(registry, &access)?;
            if meta.is_sparse() {
                continue;
            }
            let parsed = IndexedAccess::from_expr(&access).ok_or_else(|| {
                IrError::Unsupported(format!("non-affine index in `{access}`"))
            })?;
            let space = meta.space_dims();
            if dims.is_empty() {
                dims = space
                    .iter()
                    .zip(&meta.space_shape)
                    .map(|(d, &n)| Dimension::space(d, n))
                    .collect();
            } else if dims.len() != space.len() {
                return Err(IrError::ShapeMismatch(format!(
                    "`{}` has {} spatial dimensions, expected {}",
                    meta.name,
                    space.len(),
                    dims.len()
                )));
            }
            for (k, (d, &n)) in space.iter().zip(&meta.space_shape).enumerate() {
                if dims[k].extent != n {
                    return Err(IrError::ShapeMismatch(format!(
                        "`{}` has extent {n} along {d}, expected {}",
                        meta.name, dims[k].extent
                    )));
                }
                let (name, off) = &parsed.indices[k + usize::from(meta.is_time_varying())];
                if name != d {
                    return Err(IrError::UnboundIndex(name.clone()));
                }
                if *off < 0 {
                    dims[k].lower_pad = dims[k].lower_pad.max(off.unsigned_abs() as usize);
                } else {
                    dims[k].upper_pad = dims[k].upper_pad.max(*off as usize);
                }
            }
        }
    }
    for d in &dims {
        if d.lower_pad + d.upper_pad >= d.extent {
            return Err(IrError::EmptyIterationSpace {
                dim: d.name.clone(),
                extent: d.extent,
                lower_pad: d.lower_pad,
                upper_pad: d.upper_pad,
            });
        }
    }
    Ok(dims)
}

fn referenced_params(registry: &SymbolRegistry, nodes: &[IrNode], known: &[ConstTable]) -> Result<Vec<FunctionMeta>, IrError> {
    let mut names = BTreeSet::new();
    fn collect(nodes: &[IrNode], names: &mut BTreeSet<String>) {
        for n in nodes {
            match n {
                IrNode::Iteration(it) => collect(&it.body, names),
                IrNode::Single(b) => collect(b, names),
                IrNode::Expression(a) => {
                    for e in indexed_accesses(&a.lhs).into_iter().chain(indexed_accesses(&a.rhs)) {
                        names.insert(e.base_name().unwrap().to_string());
                    }
                }
                IrNode::Alias(_) => {}
            }
        }
    }
    collect(nodes, &mut names);
    let mut metas = Vec::new();
    for name in names {
        if known.iter().any(|t| t.name == name) {
            continue;
        }
        let meta = registry.get(&name).ok_or_else(|| IrError::UnknownSymbol(name.clone()))?;
        metas.push(meta.clone());
    }
    metas.sort_by_key(|m| registry.position(&m.name));
    Ok(metas)
}

fn rename_dims(e: &Expr, mapping: &[(Expr, Expr)]) -> Result<Expr, IrError> {
    Ok(substitute(e, mapping)?)
}

/// Builds the loop nest for indexed stencil equations: an optional
/// sequential time loop around the spatial loops, outermost spatial loop
/// parallel, innermost vectorizable.
pub fn build_nest(
    registry: &SymbolRegistry,
    eqs: &[Eqn],
    dims: &[Dimension],
    time: Option<TimeLoop>,
) -> Result<LoopNest, IrError> {
    if eqs.is_empty() || dims.is_empty() {
        return Err(IrError::EmptyIterationSpace {
            dim: "<none>".into(),
            extent: 0,
            lower_pad: 0,
            upper_pad: 0,
        });
    }
    let rank = dims.len();
    let mut mapping: Vec<(Expr, Expr)> = dims
        .iter()
        .map(|d| (Expr::symbol(&d.name), Expr::symbol(&loop_var(&d.name, rank))))
        .collect();
    if time.is_some() {
        mapping.push((Expr::symbol(TIME_DIM), Expr::symbol(&loop_var(TIME_DIM, rank))));
    }
    let leaves = eqs
        .iter()
        .map(|eq| {
            Ok(IrNode::Expression(Assignment {
                lhs: rename_dims(&eq.lhs, &mapping)?,
                rhs: rename_dims(&eq.rhs, &mapping)?,
            }))
        })
        .collect::<Result<Vec<_>, IrError>>()?;
    let mut body = leaves;
    for (k, d) in dims.iter().enumerate().rev() {
        let (lo, hi) = d.bounds();
        let mut annotations = BTreeSet::new();
        if k == 0 && d.parallelizable {
            annotations.insert(Annotation::Parallel);
        }
        if k == rank - 1 {
            annotations.insert(Annotation::Simd);
        }
        body = vec![IrNode::Iteration(Iteration {
            dim: d.name.clone(),
            var: loop_var(&d.name, rank),
            start: Bound::Lit(lo),
            end: Bound::Lit(hi),
            step: 1,
            direction: Direction::Forward,
            annotations,
            body,
        })];
    }
    let mut all_dims = dims.to_vec();
    let params_probe = referenced_params(registry, &body, &[])?;
    let uses_time = params_probe.iter().any(|m| m.is_time_varying() || m.is_sparse());
    if let Some(tl) = time {
        all_dims.push(Dimension::time((tl.hi - tl.lo).max(0) as usize));
        body = vec![IrNode::Iteration(Iteration {
            dim: TIME_DIM.to_string(),
            var: loop_var(TIME_DIM, rank),
            start: Bound::Lit(tl.lo),
            end: Bound::Lit(tl.hi),
            step: 1,
            direction: tl.direction,
            annotations: BTreeSet::new(),
            body,
        })];
    } else if uses_time {
        return Err(IrError::NoTimeDimension);
    }
    Ok(LoopNest {
        params: params_probe,
        tables: Vec::new(),
        dims: all_dims,
        body,
    })
}

/// Replaces every time index of a time-buffered function by a modulo alias
/// and computes the aliases once per timestep in a `single` section.
pub fn lower_time_buffers(registry: &SymbolRegistry, mut nest: LoopNest) -> Result<LoopNest, IrError> {
    let rank = nest.space_rank();
    let tvar = loop_var(TIME_DIM, rank);
    if nest.time_loop().is_none() {
        return Err(IrError::NoTimeDimension);
    }
    // (period, offset) pairs in use
    let mut used: BTreeSet<(usize, i64)> = BTreeSet::new();
    let time_offset = |e: &Expr| -> Result<Option<(String, usize, i64)>, IrError> {
        let Node::Indexed { base, indices } = e.node() else {
            return Ok(None);
        };
        let Some(meta) = registry.get(base) else {
            return Ok(None);
        };
        let Some(order) = meta.time_order() else {
            return Ok(None);
        };
        match split_offset(&indices[0]) {
            Some((v, k)) if v == tvar => Ok(Some((base.to_string(), order + 1, k))),
            Some((v, _)) if v.starts_with('t') && v[1..].chars().all(|c| c.is_ascii_digit()) => Ok(None),
            _ => Err(IrError::UnboundIndex(indices[0].to_string())),
        }
    };
    for a in nest.assignments() {
        for e in indexed_accesses(&a.lhs).into_iter().chain(indexed_accesses(&a.rhs)) {
            if let Some((_, p, k)) = time_offset(&e)? {
                used.insert((p, k));
            }
        }
    }
    check_hazards(&nest, &time_offset)?;
    let mut names: BTreeMap<(usize, i64), String> = BTreeMap::new();
    let mut aliases = Vec::new();
    let mut first_of_period: BTreeMap<usize, (String, i64)> = BTreeMap::new();
    for (n, &(period, k)) in used.iter().enumerate() {
        let name = format!("t{n}");
        let source = match first_of_period.get(&period) {
            None => {
                first_of_period.insert(period, (name.clone(), k));
                AliasSource::Counter {
                    var: tvar.clone(),
                    shift: k.rem_euclid(period as i64),
                }
            }
            Some((first, k0)) => AliasSource::Previous {
                alias: first.clone(),
                step: (k - k0).rem_euclid(period as i64),
            },
        };
        aliases.push(IrNode::Alias(TimeAlias {
            name: name.clone(),
            period,
            source,
        }));
        names.insert((period, k), name);
    }
    nest.map_assignments(&mut |a| {
        let rewrite = |e: &Expr| -> Result<Expr, IrError> {
            let mut err = None;
            let out = e.map_bottom_up(&mut |node| match time_offset(&node) {
                Ok(Some((_, p, k))) => {
                    let mut idx = node.children().to_vec();
                    idx[0] = Expr::symbol(&names[&(p, k)]);
                    node.with_children(idx)
                }
                Ok(None) => node,
                Err(e) => {
                    err = Some(e);
                    node
                }
            });
            err.map_or(Ok(out), Err)
        };
        Ok(Assignment {
            lhs: rewrite(&a.lhs)?,
            rhs: rewrite(&a.rhs)?,
        })
    })?;
    let max_period = used.iter().map(|(p, _)| *p).max();
    if let Some(d) = nest.dims.iter_mut().find(|d| d.is_time) {
        d.buffer_count = max_period;
    }
    if !aliases.is_empty() {
        let tl = nest.time_loop_mut().expect("checked above");
        tl.body.insert(0, IrNode::Single(aliases));
    }
    Ok(nest)
}

type OffsetFn<'a> = dyn Fn(&Expr) -> Result<Option<(String, usize, i64)>, IrError> + 'a;

/// In the parallel stencil block, a written time buffer must not be read at
/// an offset that lands on the same buffer.
fn check_hazards(nest: &LoopNest, time_offset: &OffsetFn) -> Result<(), IrError> {
    fn go(nodes: &[IrNode], time_offset: &OffsetFn, in_single: bool) -> Result<(), IrError> {
        for n in nodes {
            match n {
                IrNode::Iteration(it) => go(&it.body, time_offset, in_single)?,
                IrNode::Single(b) => go(b, time_offset, true)?,
                IrNode::Expression(a) if !in_single => {
                    let Some((base, period, w)) = time_offset(&a.lhs)? else {
                        continue;
                    };
                    for e in indexed_accesses(&a.rhs) {
                        if let Some((b, _, r)) = time_offset(&e)? {
                            if b == base && (r - w).rem_euclid(period as i64) == 0 {
                                return Err(IrError::TimeBufferHazard {
                                    base,
                                    read: r,
                                    written: w,
                                });
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
    go(&nest.body, time_offset, false)
}

/// A user-defined sequential loop and the equations it runs, e.g. source
/// injection over sparse points.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomIteration {
    pub index: Dimension,
    pub limits: (i64, i64),
    pub eqs: Vec<Eqn>,
    pub tables: Vec<ConstTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    BeforeStencil,
    AfterStencil,
}

/// Inserts `custom` inside the time loop (or at top level without one),
/// before or after the stencil block. Must run before `lower_time_buffers`.
pub fn add_custom_iteration(
    registry: &SymbolRegistry,
    mut nest: LoopNest,
    custom: &CustomIteration,
    placement: Placement,
) -> Result<LoopNest, IrError> {
    if custom.eqs.is_empty() {
        return Ok(nest);
    }
    let rank = nest.space_rank();
    let tvar = nest.time_loop().map(|t| t.var.clone());
    let mut mapping = Vec::new();
    if let Some(tv) = &tvar {
        mapping.push((Expr::symbol(TIME_DIM), Expr::symbol(tv)));
    }
    let var = loop_var(&custom.index.name, rank);
    mapping.push((Expr::symbol(&custom.index.name), Expr::symbol(&var)));
    for t in &custom.tables {
        if nest.tables.iter().any(|o| o.name == t.name) || registry.get(&t.name).is_some() {
            return Err(IrError::DuplicateArray(t.name.clone()));
        }
    }
    let mut bound: BTreeSet<String> = BTreeSet::from([var.clone()]);
    bound.extend(tvar.iter().cloned());
    let mut body = Vec::new();
    for eq in &custom.eqs {
        let lhs = rename_dims(&eq.lhs, &mapping)?;
        let rhs = rename_dims(&eq.rhs, &mapping)?;
        for e in indexed_accesses(&lhs).into_iter().chain(indexed_accesses(&rhs)) {
            let base = e.base_name().unwrap();
            let known = registry.get(base).is_some() || custom.tables.iter().any(|t| t.name == base);
            if !known {
                return Err(IrError::UnknownSymbol(base.to_string()));
            }
            for idx in e.children() {
                for s in index_symbols(idx) {
                    if !bound.contains(&s) {
                        return Err(IrError::UnboundIndex(s));
                    }
                }
            }
        }
        body.push(IrNode::Expression(Assignment { lhs, rhs }));
    }
    let loop_node = IrNode::Single(vec![IrNode::Iteration(Iteration {
        dim: custom.index.name.clone(),
        var,
        start: Bound::Lit(custom.limits.0),
        end: Bound::Lit(custom.limits.1),
        step: 1,
        direction: Direction::Forward,
        annotations: BTreeSet::new(),
        body,
    })]);
    let container = match nest.time_loop_mut() {
        Some(t) => &mut t.body,
        None => &mut nest.body,
    };
    match placement {
        Placement::BeforeStencil => {
            let at = container
                .iter()
                .position(|n| !matches!(n, IrNode::Single(b) if b.iter().all(|c| matches!(c, IrNode::Alias(_)))))
                .unwrap_or(container.len());
            container.insert(at, loop_node);
        }
        Placement::AfterStencil => container.push(loop_node),
    }
    nest.tables.extend(custom.tables.iter().cloned());
    if !nest.dims.iter().any(|d| d.name == custom.index.name) {
        nest.dims.push(custom.index.clone());
    }
    nest.params = referenced_params(registry, &nest.body, &nest.tables)?;
    Ok(nest)
}

/// Symbols used directly as index variables (not inside nested table lookups,
/// whose own indices are checked separately).
fn index_symbols(idx: &Expr) -> Vec<String> {
    let mut out = Vec::new();
    fn go(e: &Expr, out: &mut Vec<String>) {
        match e.node() {
            Node::Symbol(s) => out.push(s.to_string()),
            Node::Indexed { .. } => {}
            _ => {
                for c in e.operands() {
                    go(&c, out);
                }
            }
        }
    }
    go(idx, &mut out);
    out
}

/// Lowering in one call: indexify, infer the iteration space, build the
/// nest, add custom iterations and alias the time buffers.
pub fn lower(
    registry: &SymbolRegistry,
    eqs: &[Eqn],
    time: Option<TimeLoop>,
    custom: &[(CustomIteration, Placement)],
) -> Result<LoopNest, IrError> {
    let indexed = eqs
        .iter()
        .map(|e| indexify_eqn(registry, e))
        .collect::<Result<Vec<_>, _>>()?;
    let dims = infer_iteration_space(registry, &indexed)?;
    let mut nest = build_nest(registry, &indexed, &dims, time)?;
    for (c, at) in custom {
        nest = add_custom_iteration(registry, nest, c, *at)?;
    }
    if nest.time_loop().is_some() {
        nest = lower_time_buffers(registry, nest)?;
    }
    Ok(nest)
}

#[cfg(test)]
mod tests;
