//! End-user problems built on the pipeline: heat diffusion, acoustic
//! forward and adjoint modelling, and the benchmark harness.

pub mod acoustic;
pub mod bench;
pub mod diffusion;

pub use acoustic::{
    acoustic_adjoint, acoustic_forward, adjoint_test, damping_profile, ricker_wavelet, AcousticModel, AdjointReport,
    AdjointResult, ForwardResult,
};
pub use bench::{bench, BenchOptions, BenchReport, BenchStatus, BenchVariant, Scenario, VariantTiming};
pub use diffusion::{diffusion_compiled, diffusion_operator, diffusion_reference, DiffusionConfig};

use crate::codegen::{CodegenConfig, CodegenError};
use crate::fd::FdError;
use crate::grid::GridError;
use crate::ir::IrError;
use crate::optimizer::{BlockingPlan, OptError};
use crate::sparse::SparseError;
use crate::symbolic::SymbolicError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Fd(#[from] FdError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error("timestep {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl From<IrError> for AppError {
    fn from(e: IrError) -> Self {
        AppError::Codegen(e.into())
    }
}

impl From<OptError> for AppError {
    fn from(e: OptError) -> Self {
        AppError::Codegen(e.into())
    }
}

/// How operators are compiled and run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub codegen: CodegenConfig,
    pub blocking: BlockingPlan,
    /// Pick the blocking plan by auto-tuning before the real run.
    pub autotune: bool,
    pub threads: Option<usize>,
    pub cse: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            codegen: CodegenConfig::default(),
            blocking: BlockingPlan::unblocked(),
            autotune: false,
            threads: None,
            cse: true,
        }
    }
}

impl RunOptions {
    pub(crate) fn configure(&self, op: crate::codegen::OperatorHandle) -> crate::codegen::OperatorHandle {
        let op = op
            .config(self.codegen.clone())
            .blocking(self.blocking.clone())
            .cse(self.cse);
        match self.threads {
            Some(n) => op.threads(n),
            None => op,
        }
    }
}

/// `max |a - b| / max |reference|`; zero when both are identically zero.
pub fn max_relative_error(a: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
