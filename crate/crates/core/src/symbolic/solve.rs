use super::expr::{Eqn, Expr, Node};
use super::simplify::{add_simplified, mul_simplified, simplify};
use super::SymbolicError;

/// Splits `e` into `(a, b)` with `e == a*target + b`, neither part containing `target`.
pub fn affine_parts(e: &Expr, target: &Expr) -> Result<(Expr, Expr), SymbolicError> {
    if e == target {
        return Ok((Expr::one(), Expr::zero()));
    }
    if !e.contains(target) {
        return Ok((Expr::zero(), e.clone()));
    }
    let not_affine = || SymbolicError::NotAffine {
        target: target.to_string(),
    };
    match e.node() {
        Node::Add(terms) => {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for t in terms {
                let (ta, tb) = affine_parts(t, target)?;
                a.push(ta);
                b.push(tb);
            }
            Ok((add_simplified(a), add_simplified(b)))
        }
        Node::Mul(factors) => {
            let mut dependent = None;
            let mut others = Vec::with_capacity(factors.len());
            for f in factors {
                if f.contains(target) {
                    if dependent.is_some() {
                        return Err(not_affine());
                    }
                    dependent = Some(f);
                } else {
                    others.push(f.clone());
                }
            }
            let (fa, fb) = affine_parts(dependent.expect("dependent factor"), target)?;
            let mut a = others.clone();
            a.push(fa);
            let mut b = others;
            b.push(fb);
            Ok((mul_simplified(a)?, mul_simplified(b)?))
        }
        _ => Err(not_affine()),
    }
}

/// Solves an equation that is affine in `target` for `target`.
pub fn solve_linear(eq: &Eqn, target: &Expr) -> Result<Expr, SymbolicError> {
    let residual = simplify(&eq.residual())?;
    let target = simplify(target)?;
    let (a, b) = affine_parts(&residual, &target)?;
    let a = simplify(&a)?;
    if a.is_zero() {
        return Err(SymbolicError::SingularCoefficient);
    }
    simplify(&(-b / a))
}
