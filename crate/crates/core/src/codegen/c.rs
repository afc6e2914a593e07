//! C99 + OpenMP emission.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::{CodegenConfig, CodegenError};
use crate::grid::ElementType;
use crate::ir::{AliasSource, Annotation, Bound, ConstTable, Direction, IrNode, Iteration, LoopNest, TableData};
use crate::symbolic::{Expr, Node, Num};

/// Literal in the shortest form that round-trips through the element type.
pub fn literal(v: f64, dtype: ElementType) -> String {
    match dtype {
        ElementType::F32 => format!("{:e}F", v as f32),
        ElementType::F64 => format!("{v:e}"),
    }
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Prec {
    Add = 1,
    Mul = 2,
    Unary = 3,
    Atom = 4,
}

fn wrap((s, p): (String, Prec), min: Prec) -> String {
    if p < min {
        format!("({s})")
    } else {
        s
    }
}

/// Integer index expression, printed compactly as in `i2-1`.
fn index_expr(e: &Expr) -> Result<String, CodegenError> {
    Ok(match e.node() {
        Node::Int(v) => v.to_string(),
        Node::Symbol(s) => s.to_string(),
        Node::Indexed { base, indices } => {
            let mut s = base.to_string();
            for i in indices {
                let _ = write!(s, "[{}]", index_expr(i)?);
            }
            s
        }
        Node::Add(terms) => {
            let (nums, rest): (Vec<&Expr>, Vec<&Expr>) = terms.iter().partition(|t| t.is_number());
            let mut s = String::new();
            for (k, t) in rest.into_iter().chain(nums).enumerate() {
                let p = index_expr(t)?;
                match p.strip_prefix('-') {
                    Some(neg) if k > 0 => {
                        s.push('-');
                        s.push_str(neg);
                    }
                    _ => {
                        if k > 0 {
                            s.push('+');
                        }
                        s.push_str(&p);
                    }
                }
            }
            s
        }
        Node::Mul(fs) => {
            let parts = fs.iter().map(index_expr).collect::<Result<Vec<_>, _>>()?;
            match parts.as_slice() {
                [c, rest @ ..] if c == "-1" => format!("-{}", rest.join("*")),
                _ => parts.join("*"),
            }
        }
        _ => return Err(CodegenError::UnloweredConstruct(format!("index `{e}`"))),
    })
}

pub(crate) struct ExprPrinter<'a> {
    pub dtype: ElementType,
    pub scalars: &'a BTreeSet<String>,
}

impl ExprPrinter<'_> {
    fn num(&self, n: &Num) -> (String, Prec) {
        let v = n.to_f64();
        let s = literal(v, self.dtype);
        let p = if s.starts_with('-') { Prec::Unary } else { Prec::Atom };
        (s, p)
    }

    fn pow_name(&self) -> &'static str {
        match self.dtype {
            ElementType::F32 => "powf",
            ElementType::F64 => "pow",
        }
    }

    pub fn print(&self, e: &Expr) -> Result<String, CodegenError> {
        Ok(self.go(e)?.0)
    }

    fn go(&self, e: &Expr) -> Result<(String, Prec), CodegenError> {
        Ok(match e.node() {
            Node::Int(_) | Node::Rational(_) | Node::Float(_) => self.num(&e.as_num().unwrap()),
            Node::Symbol(s) => {
                if !self.scalars.contains(&**s) {
                    return Err(CodegenError::UnloweredConstruct(format!("free symbol `{s}`")));
                }
                (s.to_string(), Prec::Atom)
            }
            Node::Indexed { .. } => (index_expr(e)?, Prec::Atom),
            Node::Function { name, .. } => {
                return Err(CodegenError::UnloweredConstruct(format!("function application `{name}`")))
            }
            Node::Add(terms) => {
                let mut s = String::new();
                for (k, t) in terms.iter().enumerate() {
                    let p = wrap(self.go(t)?, Prec::Add);
                    match p.strip_prefix('-') {
                        Some(neg) if k > 0 => {
                            s.push_str(" - ");
                            s.push_str(neg);
                        }
                        _ => {
                            if k > 0 {
                                s.push_str(" + ");
                            }
                            s.push_str(&p);
                        }
                    }
                }
                (s, Prec::Add)
            }
            Node::Mul(_) | Node::Pow(..) => self.product(e)?,
        })
    }

    fn product(&self, e: &Expr) -> Result<(String, Prec), CodegenError> {
        let (coeff, factors) = e.coeff_and_factors();
        let mut numer = Vec::new();
        let mut denom = Vec::new();
        for f in factors {
            match f.node() {
                Node::Pow(b, x) => match x.as_num().and_then(|n| n.as_i64()) {
                    Some(n) if n < 0 => denom.push(self.power(b, -n)?),
                    Some(n) => numer.push(self.power(b, n)?),
                    None => numer.push((
                        format!("{}({}, {})", self.pow_name(), self.go(b)?.0, self.go(x)?.0),
                        Prec::Atom,
                    )),
                },
                _ => numer.push(self.go(f)?),
            }
        }
        let mut s = String::new();
        let negative = coeff.is_negative();
        let magnitude = coeff.abs();
        let unit = magnitude.is_one();
        if !unit || numer.is_empty() {
            s.push_str(&self.num(&magnitude).0);
        }
        for (k, f) in numer.into_iter().enumerate() {
            if k > 0 || !unit {
                s.push('*');
            }
            s.push_str(&wrap(f, Prec::Mul));
        }
        if !denom.is_empty() {
            let d = if denom.len() == 1 {
                wrap(denom.pop().unwrap(), Prec::Unary)
            } else {
                format!(
                    "({})",
                    denom.into_iter().map(|f| wrap(f, Prec::Mul)).collect::<Vec<_>>().join("*")
                )
            };
            let _ = write!(s, "/{d}");
        }
        if negative {
            s.insert(0, '-');
            return Ok((s, Prec::Unary));
        }
        Ok((s, Prec::Mul))
    }

    /// `b**n` for a positive integer `n` as repeated multiplication.
    fn power(&self, b: &Expr, n: i64) -> Result<(String, Prec), CodegenError> {
        let base = wrap(self.go(b)?, Prec::Atom);
        if n == 1 {
            return Ok((base, Prec::Atom));
        }
        if n <= 4 {
            return Ok((format!("({})", vec![base; n as usize].join("*")), Prec::Atom));
        }
        Ok((format!("{}({base}, {n})", self.pow_name()), Prec::Atom))
    }
}

fn bound(b: &Bound) -> String {
    match b {
        Bound::Lit(v) => v.to_string(),
        Bound::Var { name, offset: 0 } => name.clone(),
        Bound::Var { name, offset } if *offset < 0 => format!("{name} - {}", -offset),
        Bound::Var { name, offset } => format!("{name} + {offset}"),
        Bound::Min(a, c) => format!("MIN({}, {})", bound(a), bound(c)),
    }
}

fn table_decl(t: &ConstTable, dtype: ElementType) -> String {
    let (ty, values): (&str, Vec<String>) = match &t.data {
        TableData::Int(v) => ("int", v.iter().map(|x| x.to_string()).collect()),
        TableData::Float(v) => (dtype.c_name(), v.iter().map(|x| literal(*x, dtype)).collect()),
    };
    let dims: String = t.shape.iter().map(|n| format!("[{n}]")).collect();
    let inner = *t.shape.last().unwrap_or(&1);
    let rows: Vec<String> = values
        .chunks(inner.max(1))
        .map(|r| r.join(", "))
        .collect();
    let body = if t.shape.len() > 1 {
        rows.iter().map(|r| format!("{{{r}}}")).collect::<Vec<_>>().join(", ")
    } else {
        rows.join(", ")
    };
    format!("static const {ty} {}{dims} = {{{body}}};\n", t.name)
}

struct Emitter<'a> {
    cfg: &'a CodegenConfig,
    dtype: ElementType,
    out: String,
    arrays: Vec<String>,
    scalars: BTreeSet<String>,
}

impl Emitter<'_> {
    fn line(&mut self, depth: usize, s: &str) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn pragma(&mut self, depth: usize, s: &str) {
        if self.cfg.parallel {
            self.line(depth, &format!("#pragma omp {s}"));
        }
    }

    fn simd_clause(&self, it: &Iteration) -> String {
        let mut used = BTreeSet::new();
        collect_arrays(&it.body, &mut used);
        let list: Vec<&String> = self.arrays.iter().filter(|a| used.contains(*a)).collect();
        if list.is_empty() {
            String::new()
        } else {
            format!(
                " aligned({}:{})",
                list.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
                self.cfg.alignment
            )
        }
    }

    fn nodes(&mut self, nodes: &[IrNode], depth: usize, in_single: bool) -> Result<(), CodegenError> {
        for n in nodes {
            match n {
                IrNode::Iteration(it) => self.iteration(it, depth, in_single)?,
                IrNode::Single(body) => {
                    if self.cfg.parallel {
                        self.pragma(depth, "single");
                        self.line(depth, "{");
                        self.nodes(body, depth + 1, true)?;
                        self.line(depth, "}");
                    } else {
                        self.nodes(body, depth, true)?;
                    }
                }
                IrNode::Alias(a) => {
                    let rhs = match &a.source {
                        AliasSource::Counter { var, shift: 0 } => var.clone(),
                        AliasSource::Counter { var, shift } => format!("{var} + {shift}"),
                        AliasSource::Previous { alias, step } => format!("{alias} + {step}"),
                    };
                    self.line(depth, &format!("{} = ({rhs}) % {};", a.name, a.period));
                }
                IrNode::Expression(a) => {
                    let printer = ExprPrinter {
                        dtype: self.dtype,
                        scalars: &self.scalars,
                    };
                    let rhs = printer.print(&a.rhs)?;
                    let line = match a.lhs.as_symbol() {
                        Some(name) => {
                            self.scalars.insert(name.to_string());
                            format!("{} {name} = {rhs};", self.dtype.c_name())
                        }
                        None => format!("{} = {rhs};", index_expr(&a.lhs)?),
                    };
                    self.line(depth, &line);
                }
            }
        }
        Ok(())
    }

    fn iteration(&mut self, it: &Iteration, depth: usize, in_single: bool) -> Result<(), CodegenError> {
        if !in_single {
            let par = it.has(Annotation::Parallel);
            let simd = it.has(Annotation::Simd);
            match (par, simd) {
                (true, true) => {
                    let clause = self.simd_clause(it);
                    self.pragma(depth, &format!("for simd schedule(static){clause}"));
                }
                (true, false) => self.pragma(depth, "for schedule(static)"),
                (false, true) => {
                    let clause = self.simd_clause(it);
                    self.pragma(depth, &format!("simd{clause}"));
                }
                _ => {}
            }
        }
        let v = &it.var;
        let header = match it.direction {
            Direction::Forward => {
                let inc = if it.step == 1 {
                    format!("{v}++")
                } else {
                    format!("{v} += {}", it.step)
                };
                format!("for (int {v} = {}; {v}<{}; {inc})", bound(&it.start), bound(&it.end))
            }
            Direction::Backward => {
                let start = match &it.end {
                    Bound::Lit(hi) => (hi - 1).to_string(),
                    other => format!("{} - 1", bound(other)),
                };
                format!("for (int {v} = {start}; {v}>={}; {v} -= {})", bound(&it.start), it.step)
            }
        };
        self.line(depth, &header);
        self.line(depth, "{");
        self.scalars.insert(v.clone());
        self.nodes(&it.body, depth + 1, in_single)?;
        self.line(depth, "}");
        Ok(())
    }
}

fn collect_arrays(nodes: &[IrNode], out: &mut BTreeSet<String>) {
    for n in nodes {
        match n {
            IrNode::Iteration(it) => collect_arrays(&it.body, out),
            IrNode::Single(b) => collect_arrays(b, out),
            IrNode::Expression(a) => {
                for e in [&a.lhs, &a.rhs] {
                    e.walk(&mut |x| {
                        if let Node::Indexed { base, .. } = x.node() {
                            out.insert(base.to_string());
                        }
                    });
                }
            }
            IrNode::Alias(_) => {}
        }
    }
}

fn collect_aliases(nodes: &[IrNode], out: &mut Vec<String>) {
    for n in nodes {
        match n {
            IrNode::Iteration(it) => collect_aliases(&it.body, out),
            IrNode::Single(b) => collect_aliases(b, out),
            IrNode::Alias(a) => out.push(a.name.clone()),
            IrNode::Expression(_) => {}
        }
    }
}

/// One translation unit: the entry `int <name>(<elem> *<f>_vec, ...)`, an
/// `<name>_argv` trampoline taking the pointers as an array, and a thread
/// count setter.
pub fn emit_source(nest: &LoopNest, cfg: &CodegenConfig) -> Result<String, CodegenError> {
    let dtype = cfg.element_type;
    if let Some(m) = nest.params.iter().find(|m| m.dtype != dtype) {
        return Err(CodegenError::SignatureMismatch(format!(
            "`{}` is {} but the kernel element type is {}",
            m.name,
            m.dtype.name(),
            dtype.name()
        )));
    }
    if nest.body.is_empty() {
        return Err(crate::ir::IrError::EmptyIterationSpace {
            dim: "<none>".into(),
            extent: 0,
            lower_pad: 0,
            upper_pad: 0,
        }
        .into());
    }
    let mut em = Emitter {
        cfg,
        dtype,
        out: String::new(),
        arrays: nest.params.iter().map(|m| m.name.clone()).collect(),
        scalars: BTreeSet::new(),
    };
    em.line(0, "#include <stdlib.h>");
    em.line(0, "#include <math.h>");
    if cfg.parallel {
        em.line(0, "#include <omp.h>");
    }
    em.line(0, "");
    em.line(0, "#define MIN(a, b) ((a) < (b) ? (a) : (b))");
    em.line(0, "");
    for t in &nest.tables {
        em.out.push_str(&table_decl(t, dtype));
    }
    if !nest.tables.is_empty() {
        em.line(0, "");
    }
    let ty = dtype.c_name();
    let args: Vec<String> = nest.params.iter().map(|m| format!("{ty} *{}_vec", m.name)).collect();
    let name = &cfg.entry;
    em.line(0, &format!("int {name}({})", args.join(", ")));
    em.line(0, "{");
    for m in &nest.params {
        let shape = m.buffer_shape();
        if shape.len() == 1 {
            em.line(1, &format!("{ty} *{n} = {n}_vec;", n = m.name));
        } else {
            let dims: String = shape[1..].iter().map(|n| format!("[{n}]")).collect();
            em.line(1, &format!("{ty} (*{n}){dims} = ({ty} (*){dims}) {n}_vec;", n = m.name));
        }
    }
    let mut aliases = Vec::new();
    collect_aliases(&nest.body, &mut aliases);
    if !aliases.is_empty() {
        em.line(1, &format!("int {};", aliases.join(", ")));
    }
    em.scalars.extend(aliases);
    if cfg.parallel {
        em.pragma(1, "parallel");
        em.line(1, "{");
        em.nodes(&nest.body, 2, false)?;
        em.line(1, "}");
    } else {
        em.nodes(&nest.body, 1, false)?;
    }
    em.line(1, "return 0;");
    em.line(0, "}");
    em.line(0, "");
    let casts: Vec<String> = (0..nest.params.len()).map(|k| format!("({ty} *) args[{k}]")).collect();
    em.line(0, &format!("int {name}_argv(void **args)"));
    em.line(0, "{");
    if nest.params.is_empty() {
        em.line(1, "(void) args;");
    }
    em.line(1, &format!("return {name}({});", casts.join(", ")));
    em.line(0, "}");
    em.line(0, "");
    em.line(0, &format!("void {name}_set_threads(int n)"));
    em.line(0, "{");
    if cfg.parallel {
        em.line(1, "if (n > 0) omp_set_num_threads(n);");
    } else {
        em.line(1, "(void) n;");
    }
    em.line(0, "}");
    Ok(em.out)
}
