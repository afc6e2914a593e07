use std::collections::BTreeMap;

use super::{emit_source, jit_compile, CodegenConfig, CodegenError, CompiledKernel};
use crate::grid::{GridFunction, SymbolRegistry};
use crate::ir::{self, CustomIteration, Direction, LoopNest, Placement, TimeLoop, Trace};
use crate::optimizer::{block_loops, cse_nest, fold_scalars, normalize, BlockingPlan};
use crate::symbolic::{Eqn, Num};

/// A configured stencil operator: equations plus everything needed to lower,
/// compile and run them.
#[derive(Debug, Clone)]
pub struct OperatorHandle {
    registry: SymbolRegistry,
    eqs: Vec<Eqn>,
    subs: BTreeMap<String, Num>,
    time: Option<(i64, i64)>,
    direction: Direction,
    custom: Vec<(CustomIteration, Placement)>,
    blocking: BlockingPlan,
    cse: bool,
    threads: Option<usize>,
    config: CodegenConfig,
    kernel: Option<CompiledKernel>,
}

impl OperatorHandle {
    /// `registry` must contain every function the equations reference.
    pub fn new(registry: &SymbolRegistry, eqs: Vec<Eqn>) -> Self {
        OperatorHandle {
            registry: registry.clone(),
            eqs,
            subs: BTreeMap::new(),
            time: None,
            direction: Direction::Forward,
            custom: Vec::new(),
            blocking: BlockingPlan::unblocked(),
            cse: true,
            threads: None,
            config: CodegenConfig::default(),
            kernel: None,
        }
    }

    pub fn subs(mut self, name: &str, value: Num) -> Self {
        self.subs.insert(name.to_string(), value);
        self.kernel = None;
        self
    }

    /// Time loop over `[0, nt)`.
    pub fn timesteps(self, nt: usize) -> Self {
        self.time_range(0, nt as i64)
    }

    /// Time loop over `[lo, hi)`; the direction decides the traversal order.
    pub fn time_range(mut self, lo: i64, hi: i64) -> Self {
        self.time = Some((lo, hi));
        self.kernel = None;
        self
    }

    pub fn direction(mut self, d: Direction) -> Self {
        self.direction = d;
        self.kernel = None;
        self
    }

    pub fn custom(mut self, c: CustomIteration, at: Placement) -> Self {
        self.custom.push((c, at));
        self.kernel = None;
        self
    }

    pub fn blocking(mut self, plan: BlockingPlan) -> Self {
        self.blocking = plan;
        self.kernel = None;
        self
    }

    pub fn cse(mut self, on: bool) -> Self {
        self.cse = on;
        self.kernel = None;
        self
    }

    /// OpenMP thread count for `apply`; unset leaves the runtime default.
    pub fn threads(mut self, n: usize) -> Self {
        self.threads = Some(n);
        self
    }

    pub fn config(mut self, cfg: CodegenConfig) -> Self {
        self.config = cfg;
        self.kernel = None;
        self
    }

    pub fn codegen_config(&self) -> &CodegenConfig {
        &self.config
    }

    pub fn time_bounds(&self) -> Option<(i64, i64)> {
        self.time
    }

    pub fn blocking_plan(&self) -> &BlockingPlan {
        &self.blocking
    }

    pub fn kernel(&self) -> Option<&CompiledKernel> {
        self.kernel.as_ref()
    }

    /// Lowered, folded, blocked and (optionally) CSE-optimized loop nest.
    pub fn lower(&self) -> Result<LoopNest, CodegenError> {
        let time = self.time.map(|(lo, hi)| TimeLoop {
            lo,
            hi,
            direction: self.direction,
        });
        let nest = ir::lower(&self.registry, &self.eqs, time, &self.custom)?;
        let nest = fold_scalars(&nest, &self.subs)?;
        let mut nest = normalize(&block_loops(&nest, &self.blocking)?);
        if self.cse {
            cse_nest(&mut nest)?;
        }
        Ok(nest)
    }

    pub fn emit(&self) -> Result<String, CodegenError> {
        let nest = self.lower()?;
        let cfg = self.config.clone().with_element_type(nest.element_type());
        emit_source(&nest, &cfg)
    }

    pub fn build(&mut self) -> Result<&CompiledKernel, CodegenError> {
        if self.kernel.is_none() {
            let nest = self.lower()?;
            let cfg = self.config.clone().with_element_type(nest.element_type());
            let src = emit_source(&nest, &cfg)?;
            let k = jit_compile(&src, &cfg)?.with_signature(&nest.params);
            self.kernel = Some(k);
        }
        Ok(self.kernel.as_ref().unwrap())
    }

    /// Runs the compiled kernel, building it first if needed. Functions are
    /// matched to kernel arguments by name; extras are ignored.
    pub fn apply(&mut self, functions: &mut [&mut GridFunction]) -> Result<(), CodegenError> {
        let threads = self.threads;
        let kernel = self.build()?.clone();
        let mut ordered: Vec<&mut GridFunction> = Vec::with_capacity(kernel.signature.len());
        let mut pool: Vec<Option<&mut GridFunction>> = functions.iter_mut().map(|f| Some(&mut **f)).collect();
        for arg in &kernel.signature {
            let slot = pool
                .iter_mut()
                .find(|f| f.as_ref().is_some_and(|f| f.name() == arg.name))
                .ok_or_else(|| CodegenError::SignatureMismatch(format!("missing buffer `{}`", arg.name)))?;
            ordered.push(slot.take().unwrap());
        }
        if let Some(n) = threads {
            kernel.set_threads(n)?;
        }
        match kernel.call(&mut ordered)? {
            0 => Ok(()),
            s => Err(CodegenError::KernelStatus(s)),
        }
    }

    /// Runs the same lowered nest through the reference interpreter.
    pub fn interpret(&self, functions: &mut [&mut GridFunction], trace: Option<&mut Trace>) -> Result<(), CodegenError> {
        let nest = self.lower()?;
        ir::interpret(&nest, functions, trace)?;
        Ok(())
    }
}
