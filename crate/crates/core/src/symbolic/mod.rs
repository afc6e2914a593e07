//! A small computer-algebra core: immutable expression trees, canonical
//! simplification, substitution and affine solving.

mod eval;
mod expr;
pub mod number;
mod print;
mod simplify;
mod solve;

pub use eval::eval_f64;
pub use expr::{canonical_cmp, term_cmp, Eqn, Expr, Node};
pub use number::Num;
pub use print::to_infix;
pub use simplify::{count_ops, expand, expand_numerator, simplify, substitute};
pub use solve::{affine_parts, solve_linear};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SymbolicError {
    #[error("division by zero")]
    ZeroDivision,
    #[error("integer exponent out of range")]
    ExponentTooLarge,
    #[error("equation is not affine in {target}")]
    NotAffine { target: String },
    #[error("coefficient of the solve target simplifies to zero")]
    SingularCoefficient,
    #[error("no value bound for {0}")]
    Unbound(String),
}
