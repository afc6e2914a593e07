//! Symbolic finite-difference stencils lowered to loop nests, emitted as C
//! and run as JIT-loaded parallel kernels.

pub mod symbolic;
pub mod grid;
pub mod fd;
pub mod ir;
pub mod optimizer;
pub mod codegen;
pub mod sparse;
pub mod apps;

pub use apps::{AppError, RunOptions};
pub use codegen::{CodegenConfig, CodegenError, CompiledKernel, OperatorHandle, Toolchain};
pub use grid::{ElementType, GridFunction, SymbolRegistry};
pub use ir::{Direction, Placement};
pub use optimizer::BlockingPlan;
pub use sparse::SparsePointSet;
pub use symbolic::{Eqn, Expr, Num};
