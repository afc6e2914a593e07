//! Finite-difference expansion of symbolic derivatives.

mod weights;

use num_rational::BigRational;
use num_traits::Zero;

pub use weights::{fd_weights, int_offsets};

use crate::grid::{FunctionMeta, SymbolRegistry};
use crate::symbolic::{expand, simplify, Expr, SymbolicError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FdError {
    #[error("derivative of order {derivative_order} needs more than {points} points")]
    InsufficientPoints { derivative_order: usize, points: usize },
    #[error("duplicate stencil offset {0}")]
    DuplicateOffsets(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("`{0}` is not a dimension of the function")]
    BadDimension(String),
    #[error("`{0}` has no time dimension")]
    MissingTimeDimension(String),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}

/// Offsets and weights of a one-dimensional stencil, in units of the spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilSpec {
    pub derivative_order: usize,
    pub offsets: Vec<BigRational>,
    pub weights: Vec<BigRational>,
}

impl StencilSpec {
    pub fn new(derivative_order: usize, offsets: Vec<BigRational>) -> Result<Self, FdError> {
        let weights = fd_weights(derivative_order, &offsets)?;
        Ok(StencilSpec {
            derivative_order,
            offsets,
            weights,
        })
    }

    /// Centered stencil reaching the requested accuracy; an odd accuracy
    /// selects a one-sided forward stencil instead.
    pub fn for_accuracy(derivative_order: usize, accuracy_order: usize) -> Result<Self, FdError> {
        let offsets = if accuracy_order % 2 == 0 {
            let p = (accuracy_order / 2 + derivative_order.saturating_sub(1) / 2) as i64;
            int_offsets(-p, p)
        } else {
            int_offsets(0, (derivative_order + accuracy_order) as i64 - 1)
        };
        Self::new(derivative_order, offsets)
    }
}

/// Replaces the argument of `func` along `dim` by `dim + shift * spacing`.
fn shifted(func: &Expr, position: usize, spacing: &Expr, shift: &BigRational) -> Result<Expr, FdError> {
    let mut args = func.children().to_vec();
    let step = Expr::from_ratio(shift.clone()) * spacing.clone();
    args[position] = simplify(&(args[position].clone() + step))?;
    Ok(func.with_children(args))
}

fn dim_position(meta: &FunctionMeta, dim: &str) -> Result<usize, FdError> {
    meta.dims()
        .iter()
        .position(|d| *d == dim)
        .ok_or_else(|| FdError::BadDimension(dim.to_string()))
}

/// Applies a stencil to a function application along `dim`.
pub fn apply_stencil(meta: &FunctionMeta, func: &Expr, dim: &str, stencil: &StencilSpec) -> Result<Expr, FdError> {
    let position = dim_position(meta, dim)?;
    let spacing = Expr::symbol(
        FunctionMeta::spacing_of(dim).ok_or_else(|| FdError::BadDimension(dim.to_string()))?,
    );
    let mut terms = Vec::with_capacity(stencil.offsets.len());
    for (o, w) in stencil.offsets.iter().zip(&stencil.weights) {
        if w.is_zero() {
            continue;
        }
        terms.push(Expr::from_ratio(w.clone()) * shifted(func, position, &spacing, o)?);
    }
    let scale = Expr::pow(spacing, Expr::int(-(stencil.derivative_order as i64)));
    Ok(expand(&(Expr::add(terms) * scale))?)
}

/// Finite-difference expansion of `d^n func / d dim^n` at the given accuracy.
pub fn as_finite_diff(
    registry: &SymbolRegistry,
    func: &Expr,
    dim: &str,
    derivative_order: usize,
    accuracy_order: usize,
) -> Result<Expr, FdError> {
    let meta = registry
        .metadata_of(func)
        .map_err(|_| FdError::UnknownSymbol(func.to_string()))?;
    let stencil = StencilSpec::for_accuracy(derivative_order, accuracy_order)?;
    apply_stencil(meta, func, dim, &stencil)
}

/// Shorthand derivative operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    Dx,
    Dy,
    Dz,
    Dx2,
    Dy2,
    Dz2,
    Dxy,
    Dt,
    Dt2,
}

fn time_order(meta: &FunctionMeta) -> Result<usize, FdError> {
    meta.time_order()
        .ok_or_else(|| FdError::MissingTimeDimension(meta.name.clone()))
}

/// Expands a shorthand derivative of `meta`'s symbolic view. Spatial
/// derivatives use the function's `space_order`, time derivatives its
/// `time_order` (one-sided forward for first order, centered otherwise).
pub fn derivative(meta: &FunctionMeta, which: Derivative) -> Result<Expr, FdError> {
    let f = meta.symbolic();
    let space = |dim: &str, n: usize| {
        let stencil = StencilSpec::for_accuracy(n, meta.space_order)?;
        apply_stencil(meta, &f, dim, &stencil)
    };
    match which {
        Derivative::Dx => space("x", 1),
        Derivative::Dy => space("y", 1),
        Derivative::Dz => space("z", 1),
        Derivative::Dx2 => space("x", 2),
        Derivative::Dy2 => space("y", 2),
        Derivative::Dz2 => space("z", 2),
        Derivative::Dxy => {
            let stencil = StencilSpec::for_accuracy(1, meta.space_order)?;
            let py = dim_position(meta, "y")?;
            let px = dim_position(meta, "x")?;
            let h = Expr::symbol("h");
            let mut terms = Vec::new();
            for (ox, wx) in stencil.offsets.iter().zip(&stencil.weights) {
                if wx.is_zero() {
                    continue;
                }
                let fx = shifted(&f, px, &h, ox)?;
                for (oy, wy) in stencil.offsets.iter().zip(&stencil.weights) {
                    if wy.is_zero() {
                        continue;
                    }
                    terms.push(Expr::from_ratio(wx * wy) * shifted(&fx, py, &h, oy)?);
                }
            }
            Ok(expand(&(Expr::add(terms) * Expr::pow(h, Expr::int(-2))))?)
        }
        Derivative::Dt => {
            let stencil = StencilSpec::for_accuracy(1, time_order(meta)?)?;
            apply_stencil(meta, &f, "t", &stencil)
        }
        Derivative::Dt2 => {
            let order = time_order(meta)?;
            let stencil = StencilSpec::for_accuracy(2, order.max(2))?;
            apply_stencil(meta, &f, "t", &stencil)
        }
    }
}

/// Sum of second derivatives over all spatial dimensions.
pub fn laplace(meta: &FunctionMeta) -> Result<Expr, FdError> {
    let parts = [Derivative::Dx2, Derivative::Dy2, Derivative::Dz2];
    let terms = parts[..meta.space_dims().len()]
        .iter()
        .map(|&d| derivative(meta, d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(expand(&Expr::add(terms))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeAccess {
    Forward,
    Backward,
}

/// `u(t + s, ...)` or `u(t - s, ...)`.
pub fn time_accessor(meta: &FunctionMeta, which: TimeAccess) -> Result<Expr, FdError> {
    time_order(meta)?;
    let shift = match which {
        TimeAccess::Forward => BigRational::from_integer(1.into()),
        TimeAccess::Backward => BigRational::from_integer((-1).into()),
    };
    shifted(&meta.symbolic(), 0, &Expr::symbol("s"), &shift)
}
