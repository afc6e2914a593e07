use std::time::{Duration, Instant};

use super::BlockingPlan;
use crate::codegen::{CodegenError, OperatorHandle};
use crate::grid::GridFunction;

#[derive(Debug, Clone)]
pub struct AutotuneOptions {
    /// Timesteps per timed run.
    pub timesteps: usize,
    /// Runs per candidate; the median is kept.
    pub repeats: usize,
}

impl Default for AutotuneOptions {
    fn default() -> Self {
        AutotuneOptions {
            timesteps: 5,
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AutotuneReport {
    /// Median runtime per candidate, in candidate order.
    pub timings: Vec<(BlockingPlan, Duration)>,
    pub best: BlockingPlan,
}

/// Times each candidate plan on copies of `functions` over a short time
/// window and returns the fastest. The caller's buffers are not modified.
pub fn autotune(
    op: &OperatorHandle,
    functions: &[&GridFunction],
    candidates: &[BlockingPlan],
    opts: &AutotuneOptions,
) -> Result<AutotuneReport, CodegenError> {
    let candidates: Vec<BlockingPlan> = if candidates.is_empty() {
        vec![BlockingPlan::unblocked()]
    } else {
        candidates.to_vec()
    };
    let short = match op.time_bounds() {
        Some((lo, hi)) => op.clone().time_range(lo, hi.min(lo + opts.timesteps as i64)),
        None => op.clone(),
    };
    let mut timings = Vec::with_capacity(candidates.len());
    for plan in &candidates {
        let mut trial = short.clone().blocking(plan.clone());
        trial.build()?;
        let mut runs = Vec::with_capacity(opts.repeats.max(1));
        for _ in 0..opts.repeats.max(1) {
            let mut copies: Vec<GridFunction> = functions.iter().map(|f| (*f).clone()).collect();
            let mut refs: Vec<&mut GridFunction> = copies.iter_mut().collect();
            let start = Instant::now();
            trial.apply(&mut refs)?;
            runs.push(start.elapsed());
        }
        runs.sort();
        timings.push((plan.clone(), runs[runs.len() / 2]));
    }
    let best = timings
        .iter()
        .min_by_key(|(_, t)| *t)
        .map(|(p, _)| p.clone())
        .unwrap();
    Ok(AutotuneReport { timings, best })
}
