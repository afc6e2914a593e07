use std::cmp::Ordering;
use std::fmt;
use std::ops;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use ordered_float::OrderedFloat;

use super::number::Num;

/// One node of an expression tree. Children are shared, never mutated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Int(BigInt),
    Rational(BigRational),
    Float(OrderedFloat<f64>),
    Symbol(Arc<str>),
    Function { name: Arc<str>, args: Vec<Expr> },
    Indexed { base: Arc<str>, indices: Vec<Expr> },
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Expr, Expr),
}

/// Immutable symbolic expression.
///
/// Constructors build nodes exactly as given; [`Expr::simplify`] produces
/// the canonical form every pipeline stage works with.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn int(v: i64) -> Self {
        Expr::from_node(Node::Int(BigInt::from(v)))
    }

    pub fn zero() -> Self {
        Expr::int(0)
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    /// Exact rational in lowest terms; collapses to an integer when possible.
    ///
    /// Panics if `den` is zero.
    pub fn rational(num: i64, den: i64) -> Self {
        Expr::from_ratio(BigRational::new(num.into(), den.into()))
    }

    pub fn from_ratio(r: BigRational) -> Self {
        if r.is_integer() {
            Expr::from_node(Node::Int(r.to_integer()))
        } else {
            Expr::from_node(Node::Rational(r))
        }
    }

    pub fn float(v: f64) -> Self {
        Expr::from_node(Node::Float(OrderedFloat(v)))
    }

    pub fn from_num(n: Num) -> Self {
        match n {
            Num::Exact(r) => Expr::from_ratio(r),
            Num::Float(f) => Expr::float(f),
        }
    }

    pub fn symbol(name: &str) -> Self {
        Expr::from_node(Node::Symbol(name.into()))
    }

    pub fn func(name: &str, args: Vec<Expr>) -> Self {
        Expr::from_node(Node::Function {
            name: name.into(),
            args,
        })
    }

    pub fn indexed(base: &str, indices: Vec<Expr>) -> Self {
        Expr::from_node(Node::Indexed {
            base: base.into(),
            indices,
        })
    }

    pub fn add(terms: Vec<Expr>) -> Self {
        Expr::from_node(Node::Add(terms))
    }

    pub fn mul(factors: Vec<Expr>) -> Self {
        Expr::from_node(Node::Mul(factors))
    }

    pub fn pow(base: Expr, exp: Expr) -> Self {
        Expr::from_node(Node::Pow(base, exp))
    }

    pub fn as_num(&self) -> Option<Num> {
        match self.node() {
            Node::Int(i) => Some(Num::Exact(BigRational::from_integer(i.clone()))),
            Node::Rational(r) => Some(Num::Exact(r.clone())),
            Node::Float(f) => Some(Num::Float(f.0)),
            _ => None,
        }
    }

    pub fn is_number(&self) -> bool {
        matches!(self.node(), Node::Int(_) | Node::Rational(_) | Node::Float(_))
    }

    pub fn is_zero(&self) -> bool {
        match self.node() {
            Node::Int(i) => i.is_zero(),
            Node::Float(f) => f.0 == 0.0,
            _ => false,
        }
    }

    pub fn is_one(&self) -> bool {
        match self.node() {
            Node::Int(i) => i.is_one(),
            _ => false,
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self.node() {
            Node::Symbol(s) => Some(s),
            _ => None,
        }
    }

    /// Name of a function application or indexed base.
    pub fn base_name(&self) -> Option<&str> {
        match self.node() {
            Node::Function { name, .. } => Some(name),
            Node::Indexed { base, .. } => Some(base),
            _ => None,
        }
    }

    /// Direct children in storage order.
    pub fn children(&self) -> &[Expr] {
        match self.node() {
            Node::Function { args, .. } => args,
            Node::Indexed { indices, .. } => indices,
            Node::Add(v) | Node::Mul(v) => v,
            Node::Pow(..) => &[],
            _ => &[],
        }
    }

    /// Rebuilds this node with new children (same arity as [`Expr::children`],
    /// or `[base, exp]` for powers).
    pub fn with_children(&self, children: Vec<Expr>) -> Expr {
        match self.node() {
            Node::Function { name, .. } => Expr::from_node(Node::Function {
                name: name.clone(),
                args: children,
            }),
            Node::Indexed { base, .. } => Expr::from_node(Node::Indexed {
                base: base.clone(),
                indices: children,
            }),
            Node::Add(_) => Expr::add(children),
            Node::Mul(_) => Expr::mul(children),
            Node::Pow(..) => {
                let mut it = children.into_iter();
                let b = it.next().expect("pow base");
                let e = it.next().expect("pow exponent");
                Expr::pow(b, e)
            }
            _ => self.clone(),
        }
    }

    /// All direct subexpressions, including both operands of a power.
    pub fn operands(&self) -> Vec<Expr> {
        match self.node() {
            Node::Pow(b, e) => vec![b.clone(), e.clone()],
            _ => self.children().to_vec(),
        }
    }

    /// True if `target` occurs anywhere in this tree.
    pub fn contains(&self, target: &Expr) -> bool {
        self == target || self.operands().iter().any(|c| c.contains(target))
    }

    /// Pre-order traversal.
    pub fn walk(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        for c in self.operands() {
            c.walk(f);
        }
    }

    /// Rebuilds the tree bottom-up through `f`; `f` sees already-mapped children.
    pub fn map_bottom_up(&self, f: &mut dyn FnMut(Expr) -> Expr) -> Expr {
        let ops = self.operands();
        let rebuilt = if ops.is_empty() {
            self.clone()
        } else {
            let mapped: Vec<Expr> = ops.iter().map(|c| c.map_bottom_up(f)).collect();
            self.with_children(mapped)
        };
        f(rebuilt)
    }

    /// Names of all `Symbol` leaves.
    pub fn free_symbols(&self) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        self.walk(&mut |e| {
            if let Node::Symbol(s) = e.node() {
                out.insert(s.to_string());
            }
        });
        out
    }

    fn kind_rank(&self) -> u8 {
        match self.node() {
            Node::Int(_) | Node::Rational(_) | Node::Float(_) => 0,
            Node::Symbol(_) => 1,
            Node::Add(_) => 2,
            Node::Mul(_) => 3,
            Node::Pow(..) => 4,
            Node::Indexed { .. } => 5,
            Node::Function { .. } => 6,
        }
    }

    /// Splits a term into its numeric coefficient and the remaining factors.
    pub fn coeff_and_factors(&self) -> (Num, &[Expr]) {
        match self.node() {
            Node::Mul(fs) => match fs.first().and_then(|f| f.as_num()) {
                Some(c) => (c, &fs[1..]),
                None => (Num::one(), fs.as_slice()),
            },
            _ => match self.as_num() {
                Some(c) => (c, &[]),
                None => (Num::one(), std::slice::from_ref(self)),
            },
        }
    }
}

fn cmp_slices(a: &[Expr], b: &[Expr], f: fn(&Expr, &Expr) -> Ordering) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = f(x, y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Ordering of summands: by their non-numeric part, then by coefficient,
/// so `-h + x` and `h + x` sort next to each other.
pub fn term_cmp(a: &Expr, b: &Expr) -> Ordering {
    let (ca, ma) = a.coeff_and_factors();
    let (cb, mb) = b.coeff_and_factors();
    match (ma.is_empty(), mb.is_empty()) {
        (true, false) => return Ordering::Less,
        (false, true) => return Ordering::Greater,
        _ => {}
    }
    cmp_slices(ma, mb, canonical_cmp).then_with(|| ca.total_cmp(&cb))
}

/// Deterministic total order on expressions: node kind, then name, then children.
pub fn canonical_cmp(a: &Expr, b: &Expr) -> Ordering {
    if Arc::ptr_eq(&a.0, &b.0) {
        return Ordering::Equal;
    }
    let ra = a.kind_rank();
    let rb = b.kind_rank();
    if ra != rb {
        return ra.cmp(&rb);
    }
    match (a.node(), b.node()) {
        (Node::Symbol(x), Node::Symbol(y)) => x.cmp(y),
        (Node::Add(x), Node::Add(y)) => cmp_slices(x, y, term_cmp),
        (Node::Mul(x), Node::Mul(y)) => cmp_slices(x, y, canonical_cmp),
        (Node::Pow(b1, e1), Node::Pow(b2, e2)) => {
            canonical_cmp(b1, b2).then_with(|| canonical_cmp(e1, e2))
        }
        (Node::Indexed { base: n1, indices: a1 }, Node::Indexed { base: n2, indices: a2 })
        | (Node::Function { name: n1, args: a1 }, Node::Function { name: n2, args: a2 }) => {
            n1.cmp(n2).then_with(|| cmp_slices(a1, a2, canonical_cmp))
        }
        _ => {
            let na = a.as_num().expect("numeric");
            let nb = b.as_num().expect("numeric");
            na.total_cmp(&nb)
        }
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        canonical_cmp(self, other)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", super::print::to_infix(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", super::print::to_infix(self))
    }
}

impl From<i64> for Expr {
    fn from(v: i64) -> Self {
        Expr::int(v)
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(vec![self, rhs])
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::add(vec![self, Expr::mul(vec![Expr::int(-1), rhs])])
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(vec![self, rhs])
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::mul(vec![self, Expr::pow(rhs, Expr::int(-1))])
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::mul(vec![Expr::int(-1), self])
    }
}

/// An equation `lhs = rhs`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Eqn {
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Eqn {
    pub fn new(lhs: Expr, rhs: Expr) -> Self {
        Eqn { lhs, rhs }
    }

    /// `lhs - rhs`, unsimplified.
    pub fn residual(&self) -> Expr {
        self.lhs.clone() - self.rhs.clone()
    }
}

impl fmt::Debug for Eqn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Eqn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Eq({}, {})", self.lhs, self.rhs)
    }
}
