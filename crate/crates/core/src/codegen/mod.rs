//! C source emission, toolchain-driven JIT compilation and kernel execution.

mod c;
mod jit;
mod operator;

use std::path::PathBuf;

pub use c::{emit_source, literal};
pub use jit::{
    clean_workspace, compile_count, jit_compile, resolve_toolchain, toolchain_invocations, workspace_dir,
    CompiledKernel, KernelArg,
};
pub use operator::OperatorHandle;

use crate::grid::{ElementType, DEFAULT_ALIGNMENT};
use crate::ir::IrError;
use crate::optimizer::OptError;

/// Environment variable overriding the compiler executable.
pub const CC_ENV: &str = "STENCILFORGE_CC";
/// Environment variable naming a file that receives every emitted source.
pub const DUMP_ENV: &str = "STENCILFORGE_DUMP";

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error("cannot emit {0}")]
    UnloweredConstruct(String),
    #[error("toolchain `{0}` not found")]
    ToolchainNotFound(String),
    #[error("compilation failed:\n{diagnostics}")]
    CompileFailed { diagnostics: String },
    #[error("symbol `{0}` not found in compiled library")]
    SymbolNotFound(String),
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
    #[error("kernel returned status {0}")]
    KernelStatus(i32),
    #[error("operator has not been built")]
    NotBuilt,
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CodegenError {
    fn from(e: std::io::Error) -> Self {
        CodegenError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Toolchain {
    Gcc,
    Clang,
    /// Vendor compiler (`icx`).
    Vendor,
}

impl Toolchain {
    pub fn executable(self) -> &'static str {
        match self {
            Toolchain::Gcc => "gcc",
            Toolchain::Clang => "clang",
            Toolchain::Vendor => "icx",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gcc" => Some(Toolchain::Gcc),
            "clang" => Some(Toolchain::Clang),
            "vendor" | "icx" | "intel" => Some(Toolchain::Vendor),
            _ => None,
        }
    }

    /// Default flags for shared-library output. `-ffp-contract=off` keeps
    /// results independent of FMA contraction so the interpreter and the
    /// kernel round identically.
    pub fn default_flags(self) -> Vec<String> {
        let mut f: Vec<&str> = vec!["-O3", "-march=native", "-fPIC", "-shared", "-std=c99"];
        match self {
            Toolchain::Gcc | Toolchain::Clang => f.push("-ffp-contract=off"),
            Toolchain::Vendor => f.push("-fp-model=precise"),
        }
        f.into_iter().map(String::from).collect()
    }

    pub fn openmp_flag(self) -> &'static str {
        "-fopenmp"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CodegenConfig {
    pub toolchain: Toolchain,
    /// Explicit compiler path; takes precedence over the environment and preset.
    pub compiler: Option<PathBuf>,
    pub flags: Vec<String>,
    pub alignment: usize,
    pub element_type: ElementType,
    /// Emit OpenMP pragmas and link with OpenMP.
    pub parallel: bool,
    pub dump_path: Option<PathBuf>,
    /// Name of the entry function.
    pub entry: String,
}

impl Default for CodegenConfig {
    fn default() -> Self {
        CodegenConfig::preset(Toolchain::Gcc)
    }
}

impl CodegenConfig {
    pub fn preset(toolchain: Toolchain) -> Self {
        CodegenConfig {
            toolchain,
            compiler: None,
            flags: toolchain.default_flags(),
            alignment: DEFAULT_ALIGNMENT,
            element_type: ElementType::F32,
            parallel: true,
            dump_path: None,
            entry: "Operator".to_string(),
        }
    }

    pub fn with_element_type(mut self, t: ElementType) -> Self {
        self.element_type = t;
        self
    }

    pub fn with_parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn with_compiler(mut self, path: impl Into<PathBuf>) -> Self {
        self.compiler = Some(path.into());
        self
    }

    pub fn with_dump_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.dump_path = Some(path.into());
        self
    }

    /// Full flag list passed to the toolchain.
    pub fn all_flags(&self) -> Vec<String> {
        let mut f = self.flags.clone();
        if self.parallel {
            f.push(self.toolchain.openmp_flag().to_string());
        }
        f
    }
}
