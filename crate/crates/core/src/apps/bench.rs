//! Timing harness: interpreter, native loops and compiled kernels on the
//! diffusion and acoustic problems.

use std::time::{Duration, Instant};

use super::acoustic::{problem, AcousticModel};
use super::diffusion::{diffusion_operator, diffusion_reference, DiffusionConfig};
use super::{AppError, RunOptions};
use crate::codegen::{CodegenConfig, OperatorHandle};
use crate::grid::{ElementType, GridFunction};
use crate::optimizer::BlockingPlan;

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Diffusion { n: usize, nt: usize },
    Acoustic { shape: Vec<usize>, nt: usize, order: usize },
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::Diffusion { n, nt } => write!(f, "diffusion {n}x{n} nt={nt}"),
            Scenario::Acoustic { shape, nt, order } => {
                let s: Vec<String> = shape.iter().map(|n| n.to_string()).collect();
                write!(f, "acoustic {} nt={nt} order={order}", s.join("x"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BenchVariant {
    /// The loop-nest interpreter.
    Interpreter,
    /// Hand-written f64 loops (diffusion only).
    Reference,
    Jit,
    JitBlocked(BlockingPlan),
}

impl std::fmt::Display for BenchVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BenchVariant::Interpreter => f.write_str("interpreter"),
            BenchVariant::Reference => f.write_str("reference"),
            BenchVariant::Jit => f.write_str("jit"),
            BenchVariant::JitBlocked(p) => write!(f, "jit[{p}]"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub variants: Vec<BenchVariant>,
    /// Timed runs per variant, after one untimed warmup.
    pub repeats: usize,
    pub threads: usize,
    pub dtype: ElementType,
    pub codegen: CodegenConfig,
    /// Overrides the available-memory probe, in bytes.
    pub memory_limit: Option<u64>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            variants: vec![
                BenchVariant::Interpreter,
                BenchVariant::Reference,
                BenchVariant::Jit,
                BenchVariant::JitBlocked(BlockingPlan::new(&[("x", 16), ("y", 16)])),
            ],
            repeats: 3,
            threads: 1,
            dtype: ElementType::F32,
            codegen: CodegenConfig::default(),
            memory_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantTiming {
    pub variant: BenchVariant,
    pub runs: Vec<Duration>,
}

impl VariantTiming {
    pub fn median(&self) -> Duration {
        let mut r = self.runs.clone();
        r.sort();
        r[r.len() / 2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BenchStatus {
    Completed,
    SkippedTooLarge { required: u64, available: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub scenario: Scenario,
    pub threads: usize,
    pub status: BenchStatus,
    pub timings: Vec<VariantTiming>,
}

impl BenchReport {
    pub fn timing(&self, variant: &BenchVariant) -> Option<&VariantTiming> {
        self.timings.iter().find(|t| &t.variant == variant)
    }

    /// Median of `slow` over median of `fast`.
    pub fn speedup(&self, slow: &BenchVariant, fast: &BenchVariant) -> Option<f64> {
        let a = self.timing(slow)?.median().as_secs_f64();
        let b = self.timing(fast)?.median().as_secs_f64();
        (b > 0.0).then(|| a / b)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let status = match &self.status {
            BenchStatus::Completed => serde_json::json!("completed"),
            BenchStatus::SkippedTooLarge { required, available } => serde_json::json!({
                "skipped_too_large": { "required_bytes": required, "available_bytes": available }
            }),
        };
        let timings: Vec<_> = self
            .timings
            .iter()
            .map(|t| {
                serde_json::json!({
                    "variant": t.variant.to_string(),
                    "median_s": t.median().as_secs_f64(),
                    "runs_s": t.runs.iter().map(Duration::as_secs_f64).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "scenario": self.scenario.to_string(),
            "threads": self.threads,
            "status": status,
            "timings": timings,
        })
    }
}

/// `MemAvailable` from `/proc/meminfo`, in bytes.
pub fn available_memory() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn time_runs(repeats: usize, mut run: impl FnMut() -> Result<Duration, AppError>) -> Result<Vec<Duration>, AppError> {
    run()?;
    (0..repeats.max(1)).map(|_| run()).collect()
}

fn time_operator(
    op: &mut OperatorHandle,
    fresh: &[GridFunction],
    interpreted: bool,
    repeats: usize,
) -> Result<Vec<Duration>, AppError> {
    time_runs(repeats, || {
        let mut fs = fresh.to_vec();
        let mut refs: Vec<&mut GridFunction> = fs.iter_mut().collect();
        if interpreted {
            let nest = op.lower()?;
            let start = Instant::now();
            crate::ir::interpret(&nest, &mut refs, None)?;
            Ok(start.elapsed())
        } else {
            op.build()?;
            let start = Instant::now();
            op.apply(&mut refs)?;
            Ok(start.elapsed())
        }
    })
}

fn setup(scenario: &Scenario, opts: &BenchOptions) -> Result<(OperatorHandle, Vec<GridFunction>), AppError> {
    let run = RunOptions {
        codegen: opts.codegen.clone().with_element_type(opts.dtype),
        threads: Some(opts.threads),
        ..RunOptions::default()
    };
    match scenario {
        Scenario::Diffusion { n, nt } => {
            let cfg = DiffusionConfig::new(*n, *n, *nt).with_dtype(opts.dtype);
            let (mut u, op) = diffusion_operator(&cfg)?;
            let init = diffusion_initial(*n);
            u.set_slot(0, &init)?;
            u.set_slot(1, &init)?;
            Ok((run.configure(op), vec![u]))
        }
        Scenario::Acoustic { shape, nt, order } => {
            let model = AcousticModel::two_layer(shape, *order, opts.dtype)?.with_nt(*nt);
            problem(&model, false, &model.ricker_source(), &run)
        }
    }
}

/// Bytes held by the acoustic buffers: three time levels, `m` and `eta`.
fn acoustic_bytes(shape: &[usize], dtype: ElementType) -> u64 {
    5 * shape.iter().map(|&n| n as u64).product::<u64>() * dtype.size() as u64
}

/// A centred square of ones on zeros, the usual diffusion start.
pub fn diffusion_initial(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n * n];
    for i in n / 4..n / 2 {
        for j in n / 4..n / 2 {
            v[i * n + j] = 1.0;
        }
    }
    v
}

/// Times each requested variant with a warmup run excluded. Compilation
/// happens during warmup and is not part of the timings.
pub fn bench(scenario: &Scenario, opts: &BenchOptions) -> Result<BenchReport, AppError> {
    let mut report = BenchReport {
        scenario: scenario.clone(),
        threads: opts.threads,
        status: BenchStatus::Completed,
        timings: Vec::new(),
    };
    if let Scenario::Acoustic { shape, .. } = scenario {
        let required = acoustic_bytes(shape, opts.dtype);
        let available = opts.memory_limit.or_else(available_memory).unwrap_or(u64::MAX);
        if required > available {
            report.status = BenchStatus::SkippedTooLarge { required, available };
            return Ok(report);
        }
    }
    let (op, fresh) = setup(scenario, opts)?;
    for variant in &opts.variants {
        let runs = match variant {
            BenchVariant::Interpreter => time_operator(&mut op.clone(), &fresh, true, opts.repeats)?,
            BenchVariant::Jit => time_operator(&mut op.clone(), &fresh, false, opts.repeats)?,
            BenchVariant::JitBlocked(plan) => {
                time_operator(&mut op.clone().blocking(plan.clone()), &fresh, false, opts.repeats)?
            }
            BenchVariant::Reference => match scenario {
                Scenario::Diffusion { n, nt } => {
                    let cfg = DiffusionConfig::new(*n, *n, *nt).with_dtype(ElementType::F64);
                    let init = diffusion_initial(*n);
                    time_runs(opts.repeats, || {
                        let start = Instant::now();
                        std::hint::black_box(diffusion_reference(&cfg, &init)?);
                        Ok(start.elapsed())
                    })?
                }
                Scenario::Acoustic { .. } => continue,
            },
        };
        report.timings.push(VariantTiming {
            variant: variant.clone(),
            runs,
        });
    }
    Ok(report)
}
