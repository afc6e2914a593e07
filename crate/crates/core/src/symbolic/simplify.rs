//! Canonicalization, expansion and substitution.

use std::collections::HashMap;

use super::expr::{canonical_cmp, term_cmp, Expr, Node};
use super::number::Num;
use super::SymbolicError;

type Result<T> = std::result::Result<T, SymbolicError>;

/// Returns the canonical form of `e`: flattened sums and products, sorted
/// operands, folded constants, collected like terms and like bases.
pub fn simplify(e: &Expr) -> Result<Expr> {
    match e.node() {
        Node::Int(_) | Node::Symbol(_) | Node::Float(_) => Ok(e.clone()),
        Node::Rational(r) => Ok(Expr::from_ratio(r.clone())),
        Node::Function { .. } | Node::Indexed { .. } => {
            let args = e
                .children()
                .iter()
                .map(simplify)
                .collect::<Result<Vec<_>>>()?;
            Ok(e.with_children(args))
        }
        Node::Add(terms) => {
            let terms = terms.iter().map(simplify).collect::<Result<Vec<_>>>()?;
            Ok(add_simplified(terms))
        }
        Node::Mul(factors) => {
            let factors = factors.iter().map(simplify).collect::<Result<Vec<_>>>()?;
            mul_simplified(factors)
        }
        Node::Pow(b, x) => pow_simplified(simplify(b)?, simplify(x)?),
    }
}

fn make_term(coeff: Num, factors: &[Expr]) -> Expr {
    if factors.is_empty() {
        return Expr::from_num(coeff);
    }
    if coeff.is_one() {
        if factors.len() == 1 {
            return factors[0].clone();
        }
        return Expr::mul(factors.to_vec());
    }
    let mut v = Vec::with_capacity(factors.len() + 1);
    v.push(Expr::from_num(coeff));
    v.extend_from_slice(factors);
    Expr::mul(v)
}

/// Sum of already-canonical terms.
pub(crate) fn add_simplified(terms: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(terms.len());
    for t in terms {
        match t.node() {
            Node::Add(inner) => flat.extend(inner.iter().cloned()),
            _ => flat.push(t),
        }
    }
    let mut constant = Num::zero();
    let mut index: HashMap<Vec<Expr>, usize> = HashMap::new();
    let mut groups: Vec<(Vec<Expr>, Num)> = Vec::new();
    for t in &flat {
        if let Some(n) = t.as_num() {
            constant = constant.add(&n);
            continue;
        }
        let (c, fs) = t.coeff_and_factors();
        match index.get(fs) {
            Some(&i) => groups[i].1 = groups[i].1.add(&c),
            None => {
                index.insert(fs.to_vec(), groups.len());
                groups.push((fs.to_vec(), c));
            }
        }
    }
    let mut out: Vec<Expr> = groups
        .into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|(fs, c)| make_term(c, &fs))
        .collect();
    if !constant.is_zero() {
        out.push(Expr::from_num(constant));
    }
    out.sort_by(term_cmp);
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::add(out),
    }
}

/// Product of already-canonical factors.
pub(crate) fn mul_simplified(factors: Vec<Expr>) -> Result<Expr> {
    let mut coeff = Num::one();
    let mut index: HashMap<Expr, usize> = HashMap::new();
    let mut bases: Vec<(Expr, Vec<Expr>)> = Vec::new();
    let mut stack = factors;
    while let Some(f) = stack.pop() {
        match f.node() {
            Node::Mul(inner) => stack.extend(inner.iter().cloned()),
            _ => {
                if let Some(n) = f.as_num() {
                    coeff = coeff.mul(&n);
                    continue;
                }
                let (b, x) = match f.node() {
                    Node::Pow(b, x) => (b.clone(), x.clone()),
                    _ => (f.clone(), Expr::one()),
                };
                match index.get(&b) {
                    Some(&i) => bases[i].1.push(x),
                    None => {
                        index.insert(b.clone(), bases.len());
                        bases.push((b, vec![x]));
                    }
                }
            }
        }
    }
    if coeff.is_zero() {
        return Ok(Expr::from_num(coeff));
    }
    let mut out = Vec::with_capacity(bases.len());
    let mut again = Vec::new();
    for (b, exps) in bases {
        let x = if exps.len() == 1 {
            exps.into_iter().next().unwrap()
        } else {
            add_simplified(exps)
        };
        let p = pow_simplified(b, x)?;
        if let Some(n) = p.as_num() {
            coeff = coeff.mul(&n);
        } else if matches!(p.node(), Node::Mul(_)) {
            again.push(p);
        } else {
            out.push(p);
        }
    }
    if !again.is_empty() {
        out.extend(again);
        out.push(Expr::from_num(coeff));
        return mul_simplified(out);
    }
    if coeff.is_zero() {
        return Ok(Expr::from_num(coeff));
    }
    out.sort_by(canonical_cmp);
    Ok(make_term(coeff, &out))
}

pub(crate) fn pow_simplified(b: Expr, x: Expr) -> Result<Expr> {
    if x.is_zero() {
        return Ok(Expr::one());
    }
    if x.is_one() {
        return Ok(b);
    }
    if b.is_one() {
        return Ok(Expr::one());
    }
    if let (Some(bn), Some(xn)) = (b.as_num(), x.as_num()) {
        if let Some(v) = bn.pow(&xn)? {
            return Ok(Expr::from_num(v));
        }
        return Ok(Expr::pow(b, x));
    }
    if let Node::Int(_) = x.node() {
        match b.node() {
            Node::Pow(b2, x2) => {
                let x = mul_simplified(vec![x2.clone(), x])?;
                return pow_simplified(b2.clone(), x);
            }
            Node::Mul(fs) => {
                let parts = fs
                    .iter()
                    .map(|f| pow_simplified(f.clone(), x.clone()))
                    .collect::<Result<Vec<_>>>()?;
                return mul_simplified(parts);
            }
            _ => {}
        }
    }
    if b.is_zero() {
        if let Some(xn) = x.as_num() {
            if !xn.is_negative() {
                return Ok(b);
            }
            return Err(SymbolicError::ZeroDivision);
        }
    }
    Ok(Expr::pow(b, x))
}

/// Distributes products over sums (and small positive integer powers of
/// sums), then simplifies. Negative powers of sums stay as they are.
pub fn expand(e: &Expr) -> Result<Expr> {
    match e.node() {
        Node::Add(terms) => {
            let terms = terms.iter().map(expand).collect::<Result<Vec<_>>>()?;
            Ok(add_simplified(terms))
        }
        Node::Mul(factors) => {
            let factors = factors.iter().map(expand).collect::<Result<Vec<_>>>()?;
            // Collect like bases first so a sum times its own reciprocal cancels.
            let product = mul_simplified(factors)?;
            match product.node() {
                Node::Mul(fs) => distribute(fs.clone()),
                Node::Pow(..) => expand_pow(product),
                _ => Ok(product),
            }
        }
        Node::Pow(..) => expand_pow(e.clone()),
        Node::Function { .. } | Node::Indexed { .. } => {
            let args = e.children().iter().map(expand).collect::<Result<Vec<_>>>()?;
            Ok(e.with_children(args))
        }
        _ => simplify(e),
    }
}

/// Like [`expand`], except that a product with reciprocal sums stays one
/// quotient: the numerator is expanded and the denominator is kept whole.
pub fn expand_numerator(e: &Expr) -> Result<Expr> {
    let e = simplify(e)?;
    if let Node::Mul(factors) = e.node() {
        let (den, num): (Vec<Expr>, Vec<Expr>) = factors.iter().cloned().partition(is_reciprocal_sum);
        if !den.is_empty() {
            let mut out = vec![expand(&Expr::mul(num))?];
            for d in &den {
                out.push(expand(d)?);
            }
            return simplify(&Expr::mul(out));
        }
    }
    expand(&e)
}

fn is_reciprocal_sum(e: &Expr) -> bool {
    match e.node() {
        Node::Pow(b, x) => matches!(b.node(), Node::Add(_)) && x.as_num().is_some_and(|n| n.to_f64() < 0.0),
        _ => false,
    }
}

fn expand_pow(e: Expr) -> Result<Expr> {
    let Node::Pow(b, x) = e.node() else {
        return expand(&e);
    };
    let b = expand(b)?;
    let x = simplify(x)?;
    if let (Node::Add(_), Some(n)) = (b.node(), x.as_num().and_then(|n| n.as_i64())) {
        if (2..=8).contains(&n) {
            return distribute(vec![b; n as usize]);
        }
    }
    let p = pow_simplified(b, x)?;
    match p.node() {
        Node::Mul(fs) => distribute(fs.clone()),
        _ => Ok(p),
    }
}

fn distribute(factors: Vec<Expr>) -> Result<Expr> {
    let mut products: Vec<Vec<Expr>> = vec![Vec::new()];
    for f in factors {
        match f.node() {
            Node::Add(terms) => {
                let mut next = Vec::with_capacity(products.len() * terms.len());
                for p in &products {
                    for t in terms {
                        let mut q = p.clone();
                        q.push(t.clone());
                        next.push(q);
                    }
                }
                products = next;
            }
            _ => products.iter_mut().for_each(|p| p.push(f.clone())),
        }
    }
    let terms = products
        .into_iter()
        .map(mul_simplified)
        .collect::<Result<Vec<_>>>()?;
    // A product of expanded factors may itself yield a power of a sum.
    let terms = terms
        .into_iter()
        .map(|t| {
            if contains_positive_sum_power(&t) {
                expand(&t)
            } else {
                Ok(t)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(add_simplified(terms))
}

fn contains_positive_sum_power(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |n| {
        if let Node::Pow(b, x) = n.node() {
            if matches!(b.node(), Node::Add(_))
                && x.as_num().and_then(|v| v.as_i64()).is_some_and(|v| v >= 2)
            {
                found = true;
            }
        }
    });
    found
}

/// Simultaneously replaces every maximal subtree equal to a key, then simplifies.
pub fn substitute(e: &Expr, mapping: &[(Expr, Expr)]) -> Result<Expr> {
    let table: HashMap<&Expr, &Expr> = mapping.iter().map(|(k, v)| (k, v)).collect();
    fn go(e: &Expr, table: &HashMap<&Expr, &Expr>) -> Expr {
        if let Some(v) = table.get(e) {
            return (*v).clone();
        }
        let ops = e.operands();
        if ops.is_empty() {
            return e.clone();
        }
        e.with_children(ops.iter().map(|c| go(c, table)).collect())
    }
    simplify(&go(e, &table))
}

/// Number of arithmetic operations: an n-ary sum or product counts n-1, a power 1.
pub fn count_ops(e: &Expr) -> usize {
    let own = match e.node() {
        Node::Add(v) | Node::Mul(v) => v.len().saturating_sub(1),
        Node::Pow(..) => 1,
        _ => 0,
    };
    own + e.operands().iter().map(count_ops).sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::symbol("x")
    }
    fn y() -> Expr {
        Expr::symbol("y")
    }

    #[test]
    fn collects_like_terms() {
        let e = simplify(&Expr::add(vec![x(), x()])).unwrap();
        assert_eq!(e, Expr::mul(vec![Expr::int(2), x()]));
    }

    #[test]
    fn rationals_in_lowest_terms() {
        let h = Expr::symbol("h");
        let raw = Expr::mul(vec![
            Expr::from_node(Node::Rational(num_rational::BigRational::new(2.into(), 4.into()))),
            h.clone(),
        ]);
        let e = simplify(&raw).unwrap();
        assert_eq!(e, Expr::mul(vec![Expr::rational(1, 2), h]));
    }

    #[test]
    fn cancels_to_zero() {
        let h = Expr::symbol("h");
        let f = Expr::func("f", vec![x(), y()]);
        let t = |c: i64| Expr::mul(vec![Expr::int(c), f.clone(), Expr::pow(h.clone(), Expr::int(-2))]);
        let e = simplify(&Expr::add(vec![t(-2), t(1), t(1)])).unwrap();
        assert_eq!(e, Expr::zero());
    }

    #[test]
    fn exact_zero_division_is_an_error() {
        let e = Expr::pow(Expr::zero(), Expr::int(-1));
        assert!(matches!(simplify(&e), Err(SymbolicError::ZeroDivision)));
        let e = x() / (y() - y());
        assert!(matches!(simplify(&e), Err(SymbolicError::ZeroDivision)));
    }

    #[test]
    fn powers_merge_and_vanish() {
        let e = simplify(&(x() * x() / x())).unwrap();
        assert_eq!(e, x());
        let e = simplify(&Expr::pow(Expr::pow(x(), Expr::int(2)), Expr::int(3))).unwrap();
        assert_eq!(e, Expr::pow(x(), Expr::int(6)));
        let e = simplify(&Expr::pow(x() * y(), Expr::int(-1))).unwrap();
        assert_eq!(
            e,
            Expr::mul(vec![
                Expr::pow(x(), Expr::int(-1)),
                Expr::pow(y(), Expr::int(-1))
            ])
        );
    }

    #[test]
    fn expand_numerator_keeps_quotient() {
        let d = Expr::pow(x() + y(), Expr::int(-1));
        let e = Expr::mul(vec![Expr::int(2), x() + Expr::one(), d.clone()]);
        let got = expand_numerator(&e).unwrap();
        let want = simplify(&Expr::mul(vec![Expr::int(2) * x() + Expr::int(2), d])).unwrap();
        assert_eq!(got, want);
        assert_eq!(expand_numerator(&(x() * (x() + y()))).unwrap(), expand(&(x() * (x() + y()))).unwrap());
    }

    #[test]
    fn expand_distributes() {
        let e = expand(&((x() + y()) * (x() - y()))).unwrap();
        let want = simplify(&(x() * x() - y() * y())).unwrap();
        assert_eq!(e, want);
        let e = expand(&Expr::pow(x() + Expr::one(), Expr::int(2))).unwrap();
        let want = simplify(&(x() * x() + Expr::int(2) * x() + Expr::one())).unwrap();
        assert_eq!(e, want);
    }

    #[test]
    fn substitution_is_simultaneous() {
        let e = x() + Expr::int(2) * y();
        let s = substitute(&e, &[(x(), y()), (y(), x())]).unwrap();
        assert_eq!(s, simplify(&(y() + Expr::int(2) * x())).unwrap());
    }

    #[test]
    fn substitute_into_function_argument() {
        let h = Expr::symbol("h");
        let f = Expr::func("f", vec![x() + h.clone(), y()]);
        let s = substitute(&f, &[(x(), Expr::zero())]).unwrap();
        assert_eq!(s, Expr::func("f", vec![h, y()]));
    }

    #[test]
    fn substitute_rationals() {
        let (a, dt) = (Expr::symbol("a"), Expr::symbol("dt"));
        let s = substitute(
            &(a.clone() * dt.clone()),
            &[(a, Expr::rational(1, 2)), (dt, Expr::rational(1, 2))],
        )
        .unwrap();
        assert_eq!(s, Expr::rational(1, 4));
    }

    #[test]
    fn op_counts() {
        assert_eq!(count_ops(&x()), 0);
        assert_eq!(count_ops(&Expr::add(vec![x(), y(), Expr::symbol("z")])), 2);
        assert_eq!(count_ops(&Expr::pow(x(), Expr::int(2))), 1);
    }
}
