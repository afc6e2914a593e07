//! Infix printer in the familiar `-2*f(x, y)/h**2` notation.

use num_traits::{One, Signed};

use super::expr::{Expr, Node};
use super::number::Num;

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Prec {
    Add = 1,
    Mul = 2,
    Pow = 3,
    Atom = 4,
}

pub fn to_infix(e: &Expr) -> String {
    print(e).0
}

fn wrap(s: (String, Prec), min: Prec) -> String {
    if s.1 < min {
        format!("({})", s.0)
    } else {
        s.0
    }
}

fn num_str(n: &Num) -> (String, Prec) {
    match n {
        Num::Exact(r) if r.is_integer() => {
            let p = if r.is_negative() { Prec::Add } else { Prec::Atom };
            (r.to_integer().to_string(), p)
        }
        Num::Exact(r) => (format!("{}/{}", r.numer(), r.denom()), Prec::Mul),
        Num::Float(f) => {
            let p = if *f < 0.0 { Prec::Add } else { Prec::Atom };
            (format!("{f:?}"), p)
        }
    }
}

fn join_args(args: &[Expr]) -> String {
    args.iter().map(to_infix).collect::<Vec<_>>().join(", ")
}

fn print(e: &Expr) -> (String, Prec) {
    match e.node() {
        Node::Int(_) | Node::Rational(_) | Node::Float(_) => num_str(&e.as_num().unwrap()),
        Node::Symbol(s) => (s.to_string(), Prec::Atom),
        Node::Function { name, args } => (format!("{name}({})", join_args(args)), Prec::Atom),
        Node::Indexed { base, indices } => {
            (format!("{base}[{}]", join_args(indices)), Prec::Atom)
        }
        Node::Add(terms) => {
            // Constants go last, as in `x + 1`.
            let (nums, rest): (Vec<&Expr>, Vec<&Expr>) = terms.iter().partition(|t| t.is_number());
            let mut out = String::new();
            for (i, t) in rest.into_iter().chain(nums).enumerate() {
                let s = print(t).0;
                if i == 0 {
                    out.push_str(&s);
                } else if let Some(stripped) = s.strip_prefix('-') {
                    out.push_str(" - ");
                    out.push_str(stripped);
                } else {
                    out.push_str(" + ");
                    out.push_str(&s);
                }
            }
            (out, Prec::Add)
        }
        Node::Mul(_) | Node::Pow(..) => print_product(e),
    }
}

fn print_product(e: &Expr) -> (String, Prec) {
    let (coeff, factors) = e.coeff_and_factors();
    let mut numer: Vec<String> = Vec::new();
    let mut denom: Vec<(String, Prec)> = Vec::new();
    let negative = coeff.is_negative();
    let coeff = coeff.abs();
    match &coeff {
        Num::Exact(r) => {
            if !r.numer().is_one() {
                numer.push(r.numer().to_string());
            }
            if !r.denom().is_one() {
                denom.push((r.denom().to_string(), Prec::Atom));
            }
        }
        Num::Float(f) => {
            if *f != 1.0 {
                numer.push(format!("{f:?}"));
            }
        }
    }
    // sums print before function applications, as in `(a + b)*f(x)`
    let mut factors: Vec<&Expr> = factors.iter().collect();
    factors.sort_by_key(|f| match f.node() {
        Node::Add(_) => 1,
        Node::Function { .. } | Node::Indexed { .. } => 2,
        _ => 0,
    });
    for f in factors {
        match f.node() {
            Node::Pow(b, x) if x.as_num().is_some_and(|n| n.is_negative()) => {
                let pos = x.as_num().unwrap().neg();
                if pos.is_one() {
                    denom.push(print(b));
                } else {
                    denom.push((
                        format!("{}**{}", wrap(print(b), Prec::Atom), num_str(&pos).0),
                        Prec::Pow,
                    ));
                }
            }
            Node::Pow(b, x) => numer.push(format!(
                "{}**{}",
                wrap(print(b), Prec::Atom),
                wrap(print(x), Prec::Atom)
            )),
            _ => numer.push(wrap(print(f), Prec::Mul)),
        }
    }
    let mut s = if numer.is_empty() {
        "1".to_string()
    } else {
        numer.join("*")
    };
    if !denom.is_empty() {
        s.push('/');
        if denom.len() == 1 {
            s.push_str(&wrap(denom.pop().unwrap(), Prec::Pow));
        } else {
            let d: Vec<String> = denom.into_iter().map(|d| wrap(d, Prec::Mul)).collect();
            s.push_str(&format!("({})", d.join("*")));
        }
    }
    if negative {
        s.insert(0, '-');
        (s, Prec::Add)
    } else {
        (s, Prec::Mul)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::simplify;

    #[test]
    fn prints_sums_and_quotients() {
        let (x, h) = (Expr::symbol("x"), Expr::symbol("h"));
        let e = simplify(&(Expr::int(-2) * x.clone() / (h.clone() * h.clone()) + x.clone())).unwrap();
        assert_eq!(to_infix(&e), "x - 2*x/h**2");
        let e = simplify(&(x.clone() / (Expr::int(12) * h.clone()))).unwrap();
        assert_eq!(to_infix(&e), "x/(12*h)");
        let e = simplify(&(-(h.clone()) + x.clone())).unwrap();
        assert_eq!(to_infix(&e), "-h + x");
        let e = simplify(&Expr::pow(x.clone() + h.clone(), Expr::int(2))).unwrap();
        assert_eq!(to_infix(&e), "(h + x)**2");
        let e = simplify(&(x + Expr::one())).unwrap();
        assert_eq!(to_infix(&e), "x + 1");
    }
}
