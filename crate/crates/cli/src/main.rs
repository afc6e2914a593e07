use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use stencilforge::apps::acoustic::acoustic_source;
use stencilforge::apps::bench::diffusion_initial;
use stencilforge::apps::{
    acoustic_forward, adjoint_test, bench, diffusion_compiled, diffusion_operator, diffusion_reference,
    max_relative_error, AcousticModel, BenchOptions, BenchStatus, BenchVariant, DiffusionConfig, Scenario,
};
use stencilforge::grid::{write_array, write_csv, ArrayFile, SPACE_DIMS};
use stencilforge::{BlockingPlan, CodegenConfig, ElementType, RunOptions, Toolchain};

#[derive(Parser)]
#[command(name = "stencilforge", version, about = "Finite-difference stencils compiled at runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explicit heat diffusion on a 2D grid
    Diffusion {
        #[command(flatten)]
        common: Common,
        /// Also run the plain-loop reference and report the difference
        #[arg(long)]
        check: bool,
        /// Final field (`.csv` for text, anything else for the binary format)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Acoustic forward modelling on the two-layer model
    AcousticForward {
        #[command(flatten)]
        common: Common,
        /// Final wavefield
        #[arg(long)]
        out: Option<PathBuf>,
        /// Receiver samples, one row per timestep
        #[arg(long)]
        rec: Option<PathBuf>,
    },
    /// Dot-product test of the forward and adjoint operators
    AdjointTest {
        #[command(flatten)]
        common: Common,
        /// Space orders to test; defaults to 2 through 12
        #[arg(long = "orders", value_delimiter = ',')]
        orders: Vec<usize>,
    },
    /// Time the interpreter, reference loops and compiled kernels
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "diffusion")]
        scenario: ScenarioKind,
        /// Timed runs per variant
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Write the JSON report here instead of stdout
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the generated C source
    DumpCode {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "diffusion")]
        problem: Problem,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioKind {
    Diffusion,
    Acoustic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Diffusion,
    AcousticForward,
    AcousticAdjoint,
}

#[derive(Args)]
struct Common {
    /// Grid extents, comma separated
    #[arg(long, value_delimiter = ',')]
    shape: Vec<usize>,
    /// Timesteps; acoustic runs default to 0.5 s of propagation
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value = "f32")]
    dtype: ElementType,
    /// Block sizes per dimension (`16,16`), `auto` or `off`
    #[arg(long, default_value = "off")]
    block: String,
    /// Compiler preset (gcc, clang, vendor) or a compiler path
    #[arg(long)]
    cc: Option<String>,
    /// Write the generated source here
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl Common {
    fn codegen(&self) -> CodegenConfig {
        let mut cfg = match self.cc.as_deref() {
            None => CodegenConfig::default(),
            Some(cc) => match Toolchain::parse(cc) {
                Some(t) => CodegenConfig::preset(t),
                None => CodegenConfig::default().with_compiler(cc),
            },
        };
        cfg = cfg.with_element_type(self.dtype);
        if let Some(p) = &self.dump {
            cfg = cfg.with_dump_path(p);
        }
        cfg
    }

    fn run_options(&self) -> Result<RunOptions> {
        let (blocking, autotune) = parse_block(&self.block, self.shape.len())?;
        Ok(RunOptions {
            codegen: self.codegen(),
            blocking,
            autotune,
            threads: self.threads,
            cse: true,
        })
    }

    fn shape_or(&self, default: &[usize]) -> Vec<usize> {
        if self.shape.is_empty() {
            default.to_vec()
        } else {
            self.shape.clone()
        }
    }

    fn diffusion(&self) -> Result<DiffusionConfig> {
        let shape = self.shape_or(&[1000, 1000]);
        let [nx, ny] = shape[..] else {
            bail!("diffusion needs a 2D shape, got {shape:?}");
        };
        Ok(DiffusionConfig::new(nx, ny, self.nt.unwrap_or(500))
            .with_order(self.order)
            .with_dtype(self.dtype))
    }

    fn acoustic(&self) -> Result<AcousticModel> {
        let shape = self.shape_or(&[60, 60]);
        let m = AcousticModel::two_layer(&shape, self.order, self.dtype)?;
        Ok(match self.nt {
            Some(nt) => m.with_nt(nt),
            None => m,
        })
    }
}

fn parse_block(s: &str, dims: usize) -> Result<(BlockingPlan, bool)> {
    match s {
        "off" => Ok((BlockingPlan::unblocked(), false)),
        "auto" => Ok((BlockingPlan::unblocked(), true)),
        _ => {
            let sizes: Vec<usize> = s
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("bad block specification `{s}`"))?;
            if sizes.is_empty() || sizes.len() > dims.max(2) || sizes.contains(&0) {
                bail!("bad block specification `{s}`");
            }
            let blocks: Vec<(&str, usize)> = SPACE_DIMS.iter().copied().zip(sizes).collect();
            Ok((BlockingPlan::new(&blocks), false))
        }
    }
}

fn save(path: &Path, name: &str, dtype: ElementType, shape: &[usize], data: Vec<f64>) -> Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        write_csv(path, shape, &data)?;
    } else {
        write_array(
            path,
            &ArrayFile {
                name: name.to_string(),
                dtype,
                shape: shape.to_vec(),
                data,
            },
        )?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Diffusion { common, check, out } => {
            let cfg = common.diffusion()?;
            let init = if cfg.nx == cfg.ny {
                diffusion_initial(cfg.nx)
            } else {
                bail!("diffusion uses square grids")
            };
            let start = std::time::Instant::now();
            let (field, tuned) = diffusion_compiled(&cfg, &init, &common.run_options()?)?;
            println!("diffusion {}x{} nt={} in {:.3?}", cfg.nx, cfg.ny, cfg.nt, start.elapsed());
            if let Some(r) = tuned {
                println!("autotuned blocking: {}", r.best);
            }
            if check {
                let reference = diffusion_reference(&cfg, &init)?;
                println!("max relative difference to reference: {:e}", max_relative_error(&field, &reference));
            }
            if let Some(p) = out {
                save(&p, "u", cfg.dtype, &[cfg.nx, cfg.ny], field)?;
            }
        }
        Command::AcousticForward { common, out, rec } => {
            let model = common.acoustic()?;
            let start = std::time::Instant::now();
            let r = acoustic_forward(&model, &model.ricker_source(), &common.run_options()?)?;
            println!(
                "acoustic {:?} order {} nt={} dt={:.4e}s in {:.3?}",
                model.shape,
                model.space_order,
                model.nt,
                model.dt,
                start.elapsed()
            );
            if let Some(p) = out {
                save(&p, "u", model.dtype, &model.shape, r.wavefield.slot(r.last_slot))?;
            }
            if let Some(p) = rec {
                save(&p, "rec", model.dtype, &[model.nt, model.rec.num_points()], r.rec)?;
            }
        }
        Command::AdjointTest { common, orders } => {
            let orders = if orders.is_empty() {
                vec![2, 4, 6, 8, 10, 12]
            } else {
                orders
            };
            let tol = match common.dtype {
                ElementType::F32 => 1e-5,
                ElementType::F64 => 1e-10,
            };
            let shape = common.shape_or(&[60, 60]);
            let opts = common.run_options()?;
            println!("order dim <Ax,y> <x,A^Ty> difference ratio");
            let mut failed = false;
            for order in orders {
                let mut model = AcousticModel::two_layer(&shape, order, common.dtype)?;
                if let Some(nt) = common.nt {
                    model = model.with_nt(nt);
                }
                let r = adjoint_test(&model, common.seed, &opts)?;
                println!("{r}");
                failed |= !r.passes(tol);
            }
            if failed {
                bail!("adjoint test outside tolerance {tol:e}");
            }
        }
        Command::Bench {
            common,
            scenario,
            repeats,
            json,
        } => {
            let scenario = match scenario {
                ScenarioKind::Diffusion => {
                    let cfg = common.diffusion()?;
                    if cfg.nx != cfg.ny {
                        bail!("the diffusion benchmark uses square grids");
                    }
                    Scenario::Diffusion { n: cfg.nx, nt: cfg.nt }
                }
                ScenarioKind::Acoustic => Scenario::Acoustic {
                    shape: common.shape_or(&[281, 281, 150]),
                    nt: common.nt.unwrap_or(100),
                    order: common.order,
                },
            };
            let (plan, _) = parse_block(&common.block, 3)?;
            let mut variants = vec![BenchVariant::Interpreter, BenchVariant::Reference, BenchVariant::Jit];
            variants.push(BenchVariant::JitBlocked(if plan.is_unblocked() {
                BlockingPlan::new(&[("x", 16), ("y", 16)])
            } else {
                plan
            }));
            let opts = BenchOptions {
                variants,
                repeats,
                threads: common.threads.unwrap_or(1),
                dtype: common.dtype,
                codegen: common.codegen(),
                memory_limit: None,
            };
            let report = bench(&scenario, &opts)?;
            if let BenchStatus::SkippedTooLarge { required, available } = report.status {
                eprintln!("skipped: needs {required} bytes, {available} available");
            }
            let text = format!("{:#}\n", report.to_json());
            match json {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => println!("{text}"),
            }
        }
        Command::DumpCode { common, problem } => {
            let opts = common.run_options()?;
            let src = match problem {
                Problem::Diffusion => {
                    let (_, op) = diffusion_operator(&common.diffusion()?)?;
                    opts_apply(op, &opts).emit()?
                }
                Problem::AcousticForward => acoustic_source(&common.acoustic()?, false, &opts)?,
                Problem::AcousticAdjoint => acoustic_source(&common.acoustic()?, true, &opts)?,
            };
            match &common.dump {
                Some(p) => std::fs::write(p, &src).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{src}"),
            }
        }
    }
    Ok(())
}

fn opts_apply(op: stencilforge::OperatorHandle, opts: &RunOptions) -> stencilforge::OperatorHandle {
    op.config(opts.codegen.clone()).blocking(opts.blocking.clone())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
