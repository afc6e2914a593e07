//! Reference interpreter for lowered loop nests.
//!
//! The nest is first compiled into a small tree of loops whose leaves are
//! stack programs with precomputed strides, then executed sequentially in
//! double precision. Stores into `f32` arrays round through `f32`.

use std::collections::HashMap;

use super::{AliasSource, Bound, ConstTable, Direction, IrError, IrNode, LoopNest, TableData};
use crate::grid::{ElementType, GridFunction};
use crate::symbolic::{Expr, Node};

/// Loop-counter values recorded at every array store, per assignment.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Trace {
    /// `(assignment number, array index of the store)`
    pub writes: Vec<(usize, Vec<i64>)>,
}

struct Array {
    name: String,
    shape: Vec<usize>,
    strides: Vec<usize>,
    round_f32: bool,
}

#[derive(Clone)]
enum IdxTerm {
    Var(usize, i64),
    Table(Box<Access>),
}

#[derive(Clone)]
struct IndexCode {
    terms: Vec<IdxTerm>,
    constant: i64,
}

#[derive(Clone)]
struct Access {
    array: usize,
    idx: Vec<IndexCode>,
}

enum Op {
    Const(f64),
    Load(Access),
    Temp(usize),
    Add(usize),
    Mul(usize),
    PowI(i32),
    Pow,
}

enum Target {
    Array(Access),
    Temp(usize),
}

enum BoundCode {
    Lit(i64),
    Var(usize, i64),
    Min(Box<BoundCode>, Box<BoundCode>),
}

enum Exec {
    Loop {
        slot: usize,
        start: BoundCode,
        end: BoundCode,
        step: i64,
        backward: bool,
        body: Vec<Exec>,
    },
    Alias {
        slot: usize,
        from: usize,
        add: i64,
        period: i64,
    },
    Store {
        id: usize,
        target: Target,
        code: Vec<Op>,
    },
}

struct Compiler<'a> {
    arrays: Vec<Array>,
    array_index: HashMap<String, usize>,
    int_tables: HashMap<String, usize>,
    ints: HashMap<String, usize>,
    temps: HashMap<String, usize>,
    next_store: usize,
    nest: &'a LoopNest,
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl<'a> Compiler<'a> {
    fn int_slot(&mut self, name: &str) -> usize {
        let n = self.ints.len();
        *self.ints.entry(name.to_string()).or_insert(n)
    }

    fn bound(&self, b: &Bound) -> Result<BoundCode, IrError> {
        Ok(match b {
            Bound::Lit(v) => BoundCode::Lit(*v),
            Bound::Var { name, offset } => {
                let slot = *self.ints.get(name).ok_or_else(|| IrError::Unbound(name.clone()))?;
                BoundCode::Var(slot, *offset)
            }
            Bound::Min(a, b) => BoundCode::Min(Box::new(self.bound(a)?), Box::new(self.bound(b)?)),
        })
    }

    fn index(&self, e: &Expr) -> Result<IndexCode, IrError> {
        let mut code = IndexCode {
            terms: Vec::new(),
            constant: 0,
        };
        let terms: Vec<Expr> = match e.node() {
            Node::Add(ts) => ts.clone(),
            _ => vec![e.clone()],
        };
        for t in terms {
            if let Some(k) = t.as_num().and_then(|n| n.as_i64()) {
                code.constant += k;
                continue;
            }
            let (coeff, factors) = t.coeff_and_factors();
            let coeff = coeff
                .as_i64()
                .ok_or_else(|| IrError::Unsupported(format!("non-integer index `{e}`")))?;
            match factors {
                [f] => match f.node() {
                    Node::Symbol(s) => {
                        let slot = *self.ints.get(&**s).ok_or_else(|| IrError::Unbound(s.to_string()))?;
                        code.terms.push(IdxTerm::Var(slot, coeff));
                    }
                    Node::Indexed { base, .. } if self.int_tables.contains_key(&**base) && coeff == 1 => {
                        code.terms.push(IdxTerm::Table(Box::new(self.access(f)?)));
                    }
                    _ => return Err(IrError::Unsupported(format!("index `{e}`"))),
                },
                _ => return Err(IrError::Unsupported(format!("index `{e}`"))),
            }
        }
        Ok(code)
    }

    fn access(&self, e: &Expr) -> Result<Access, IrError> {
        let Node::Indexed { base, indices } = e.node() else {
            unreachable!()
        };
        let array = *self
            .array_index
            .get(&**base)
            .ok_or_else(|| IrError::UnknownSymbol(base.to_string()))?;
        if indices.len() != self.arrays[array].shape.len() {
            return Err(IrError::Unsupported(format!("rank mismatch in `{e}`")));
        }
        let idx = indices.iter().map(|i| self.index(i)).collect::<Result<_, _>>()?;
        Ok(Access { array, idx })
    }

    fn expr(&self, e: &Expr, out: &mut Vec<Op>) -> Result<(), IrError> {
        match e.node() {
            Node::Int(_) | Node::Rational(_) | Node::Float(_) => out.push(Op::Const(e.as_num().unwrap().to_f64())),
            Node::Symbol(s) => match self.temps.get(&**s) {
                Some(&slot) => out.push(Op::Temp(slot)),
                None => return Err(IrError::Unbound(s.to_string())),
            },
            Node::Indexed { .. } => out.push(Op::Load(self.access(e)?)),
            Node::Function { name, .. } => return Err(IrError::Unsupported(format!("function `{name}`"))),
            Node::Add(ts) => {
                for t in ts {
                    self.expr(t, out)?;
                }
                out.push(Op::Add(ts.len()));
            }
            Node::Mul(fs) => {
                for f in fs {
                    self.expr(f, out)?;
                }
                out.push(Op::Mul(fs.len()));
            }
            Node::Pow(b, x) => {
                self.expr(b, out)?;
                match x.as_num().and_then(|n| n.as_i64()) {
                    Some(n) if n.abs() < i32::MAX as i64 => out.push(Op::PowI(n as i32)),
                    _ => {
                        self.expr(x, out)?;
                        out.push(Op::Pow);
                    }
                }
            }
        }
        Ok(())
    }

    fn nodes(&mut self, nodes: &[IrNode]) -> Result<Vec<Exec>, IrError> {
        let mut out = Vec::new();
        for n in nodes {
            match n {
                IrNode::Iteration(it) => {
                    let start = self.bound(&it.start)?;
                    let end = self.bound(&it.end)?;
                    let slot = self.int_slot(&it.var);
                    let body = self.nodes(&it.body)?;
                    out.push(Exec::Loop {
                        slot,
                        start,
                        end,
                        step: it.step,
                        backward: it.direction == Direction::Backward,
                        body,
                    });
                }
                IrNode::Single(b) => out.extend(self.nodes(b)?),
                IrNode::Alias(a) => {
                    let (from, add) = match &a.source {
                        AliasSource::Counter { var, shift } => (var, *shift),
                        AliasSource::Previous { alias, step } => (alias, *step),
                    };
                    let from = *self.ints.get(from).ok_or_else(|| IrError::Unbound(from.clone()))?;
                    let slot = self.int_slot(&a.name);
                    out.push(Exec::Alias {
                        slot,
                        from,
                        add,
                        period: a.period as i64,
                    });
                }
                IrNode::Expression(a) => {
                    let mut code = Vec::new();
                    self.expr(&a.rhs, &mut code)?;
                    let target = match a.lhs.node() {
                        Node::Symbol(s) => {
                            let n = self.temps.len();
                            Target::Temp(*self.temps.entry(s.to_string()).or_insert(n))
                        }
                        Node::Indexed { .. } => Target::Array(self.access(&a.lhs)?),
                        _ => return Err(IrError::Unsupported(format!("assignment target `{}`", a.lhs))),
                    };
                    out.push(Exec::Store {
                        id: self.next_store,
                        target,
                        code,
                    });
                    self.next_store += 1;
                }
            }
        }
        Ok(out)
    }
}

struct State<'t> {
    floats: Vec<Vec<f64>>,
    ints: Vec<Vec<i64>>,
    int_of_array: Vec<Option<usize>>,
    vars: Vec<i64>,
    temps: Vec<f64>,
    stack: Vec<f64>,
    trace: Option<&'t mut Trace>,
}

struct Machine<'a> {
    arrays: &'a [Array],
}

impl Machine<'_> {
    fn bound(&self, b: &BoundCode, st: &State) -> i64 {
        match b {
            BoundCode::Lit(v) => *v,
            BoundCode::Var(slot, off) => st.vars[*slot] + off,
            BoundCode::Min(a, b) => self.bound(a, st).min(self.bound(b, st)),
        }
    }

    fn index_value(&self, code: &IndexCode, st: &State) -> Result<i64, IrError> {
        let mut v = code.constant;
        for t in &code.terms {
            v += match t {
                IdxTerm::Var(slot, c) => st.vars[*slot] * c,
                IdxTerm::Table(inner) => {
                    let off = self.offset(inner, st)?;
                    let table = st.int_of_array[inner.array].expect("int table");
                    st.ints[table][off]
                }
            };
        }
        Ok(v)
    }

    fn index_values(&self, a: &Access, st: &State) -> Result<Vec<i64>, IrError> {
        a.idx.iter().map(|c| self.index_value(c, st)).collect()
    }

    fn offset(&self, a: &Access, st: &State) -> Result<usize, IrError> {
        let arr = &self.arrays[a.array];
        let mut off = 0usize;
        for (k, code) in a.idx.iter().enumerate() {
            let v = self.index_value(code, st)?;
            if v < 0 || v as usize >= arr.shape[k] {
                return Err(IrError::OutOfBounds {
                    array: arr.name.clone(),
                    index: self.index_values(a, st)?,
                    shape: arr.shape.clone(),
                });
            }
            off += v as usize * arr.strides[k];
        }
        Ok(off)
    }

    fn eval(&self, code: &[Op], st: &mut State) -> Result<f64, IrError> {
        let mut stack = std::mem::take(&mut st.stack);
        stack.clear();
        for op in code {
            match op {
                Op::Const(v) => stack.push(*v),
                Op::Temp(slot) => stack.push(st.temps[*slot]),
                Op::Load(a) => {
                    let off = self.offset(a, st)?;
                    stack.push(st.floats[a.array][off]);
                }
                Op::Add(n) => {
                    let at = stack.len() - n;
                    let mut acc = stack[at];
                    for v in &stack[at + 1..] {
                        acc += v;
                    }
                    stack.truncate(at);
                    stack.push(acc);
                }
                Op::Mul(n) => {
                    let at = stack.len() - n;
                    let mut acc = stack[at];
                    for v in &stack[at + 1..] {
                        acc *= v;
                    }
                    stack.truncate(at);
                    stack.push(acc);
                }
                Op::PowI(n) => {
                    let b = stack.pop().unwrap();
                    stack.push(b.powi(*n));
                }
                Op::Pow => {
                    let x = stack.pop().unwrap();
                    let b = stack.pop().unwrap();
                    stack.push(b.powf(x));
                }
            }
        }
        let v = stack.pop().unwrap();
        st.stack = stack;
        Ok(v)
    }

    fn run(&self, code: &[Exec], st: &mut State) -> Result<(), IrError> {
        for e in code {
            match e {
                Exec::Loop {
                    slot,
                    start,
                    end,
                    step,
                    backward,
                    body,
                } => {
                    let lo = self.bound(start, st);
                    let hi = self.bound(end, st);
                    if *backward {
                        let mut i = hi - 1;
                        while i >= lo {
                            st.vars[*slot] = i;
                            self.run(body, st)?;
                            i -= step;
                        }
                    } else {
                        let mut i = lo;
                        while i < hi {
                            st.vars[*slot] = i;
                            self.run(body, st)?;
                            i += step;
                        }
                    }
                }
                Exec::Alias {
                    slot,
                    from,
                    add,
                    period,
                } => st.vars[*slot] = (st.vars[*from] + add).rem_euclid(*period),
                Exec::Store { id, target, code } => {
                    let v = self.eval(code, st)?;
                    match target {
                        Target::Temp(slot) => st.temps[*slot] = v,
                        Target::Array(a) => {
                            let off = self.offset(a, st)?;
                            let arr = &self.arrays[a.array];
                            st.floats[a.array][off] = if arr.round_f32 { v as f32 as f64 } else { v };
                            if st.trace.is_some() {
                                let idx = self.index_values(a, st)?;
                                st.trace.as_mut().unwrap().writes.push((*id, idx));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs `nest` sequentially against `functions` (matched by name), writing
/// results back into them. Pass a `Trace` to record every array store.
pub fn interpret(
    nest: &LoopNest,
    functions: &mut [&mut GridFunction],
    trace: Option<&mut Trace>,
) -> Result<(), IrError> {
    let mut comp = Compiler {
        arrays: Vec::new(),
        array_index: HashMap::new(),
        int_tables: HashMap::new(),
        ints: HashMap::new(),
        temps: HashMap::new(),
        next_store: 0,
        nest,
    };
    let mut floats = Vec::new();
    let mut ints = Vec::new();
    let mut int_of_array = Vec::new();
    let mut bound_fn = Vec::new();
    for meta in &comp.nest.params {
        let pos = functions
            .iter()
            .position(|f| f.name() == meta.name)
            .ok_or_else(|| IrError::Unbound(meta.name.clone()))?;
        let f = &functions[pos];
        if f.meta() != meta {
            return Err(IrError::ShapeMismatch(format!(
                "`{}` does not match the nest's signature",
                meta.name
            )));
        }
        let shape = meta.buffer_shape();
        comp.array_index.insert(meta.name.clone(), comp.arrays.len());
        comp.arrays.push(Array {
            name: meta.name.clone(),
            strides: strides(&shape),
            shape,
            round_f32: meta.dtype == ElementType::F32,
        });
        floats.push(f.to_vec());
        ints.push(Vec::new());
        int_of_array.push(None);
        bound_fn.push(pos);
    }
    for t in &comp.nest.tables {
        add_table(&mut comp, t, &mut floats, &mut ints, &mut int_of_array);
    }
    let program = comp.nodes(&comp.nest.body)?;
    let machine = Machine { arrays: &comp.arrays };
    let mut st = State {
        floats,
        ints,
        int_of_array,
        vars: vec![0; comp.ints.len()],
        temps: vec![0.0; comp.temps.len()],
        stack: Vec::with_capacity(64),
        trace,
    };
    machine.run(&program, &mut st)?;
    for (k, pos) in bound_fn.into_iter().enumerate() {
        functions[pos]
            .fill_from(&st.floats[k])
            .expect("same length as the source buffer");
    }
    Ok(())
}

fn add_table(
    comp: &mut Compiler,
    t: &ConstTable,
    floats: &mut Vec<Vec<f64>>,
    ints: &mut Vec<Vec<i64>>,
    int_of_array: &mut Vec<Option<usize>>,
) {
    let id = comp.arrays.len();
    comp.array_index.insert(t.name.clone(), id);
    let dtype_f32 = comp.nest.element_type() == ElementType::F32;
    comp.arrays.push(Array {
        name: t.name.clone(),
        strides: strides(&t.shape),
        shape: t.shape.clone(),
        round_f32: false,
    });
    match &t.data {
        TableData::Int(v) => {
            comp.int_tables.insert(t.name.clone(), id);
            floats.push(Vec::new());
            int_of_array.push(Some(ints.len()));
            ints.push(v.clone());
        }
        TableData::Float(v) => {
            // Float tables are emitted in the kernel's element type.
            let data = if dtype_f32 {
                v.iter().map(|&x| x as f32 as f64).collect()
            } else {
                v.clone()
            };
            floats.push(data);
            int_of_array.push(None);
            ints.push(Vec::new());
        }
    }
}
