use super::expr::{Expr, Node};
use super::SymbolicError;

/// Evaluates `e` in double precision. Numbers evaluate to themselves; every
/// symbol, function application and indexed access is resolved through `leaf`.
pub fn eval_f64(e: &Expr, leaf: &mut dyn FnMut(&Expr) -> Option<f64>) -> Result<f64, SymbolicError> {
    Ok(match e.node() {
        Node::Int(_) | Node::Rational(_) | Node::Float(_) => e.as_num().unwrap().to_f64(),
        Node::Symbol(_) | Node::Function { .. } | Node::Indexed { .. } => {
            leaf(e).ok_or_else(|| SymbolicError::Unbound(e.to_string()))?
        }
        Node::Add(terms) => {
            let mut acc = 0.0;
            for t in terms {
                acc += eval_f64(t, leaf)?;
            }
            acc
        }
        Node::Mul(factors) => {
            let mut acc = 1.0;
            for f in factors {
                acc *= eval_f64(f, leaf)?;
            }
            acc
        }
        Node::Pow(b, x) => {
            let base = eval_f64(b, leaf)?;
            match x.as_num().and_then(|n| n.as_i64()) {
                Some(n) => base.powi(n as i32),
                None => base.powf(eval_f64(x, leaf)?),
            }
        }
    })
}
