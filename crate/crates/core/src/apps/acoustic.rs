//! Acoustic wave propagation with an absorbing sponge, Ricker source
//! injection and receiver sampling, plus the adjoint dot test.

use rand::{Rng, SeedableRng};

use super::{AppError, RunOptions};
use crate::codegen::OperatorHandle;
use crate::fd::{derivative, fd_weights, int_offsets, laplace, time_accessor, Derivative, TimeAccess};
use crate::grid::{ElementType, GridFunction, SymbolRegistry, SPACE_DIMS};
use crate::ir::{Direction, Placement};
use crate::optimizer::{autotune, default_candidates, AutotuneOptions};
use crate::sparse::{build_inject, build_sample, SparsePointSet};
use crate::symbolic::{number::ratio_to_f64, solve_linear, Eqn, Expr, Num};

/// Ricker wavelet with peak frequency `f0` centred at `t0`.
pub fn ricker_wavelet(f0: f64, t: f64, t0: f64) -> f64 {
    let a = (std::f64::consts::PI * f0 * (t - t0)).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

fn flat_index(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (i, n)| acc * n + i)
}

fn unflatten(mut k: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for d in (0..shape.len()).rev() {
        idx[d] = k % shape[d];
        k /= shape[d];
    }
    idx
}

/// Sponge damping: `c (1 - d/w)^2` within `width` cells of the outer edge
/// (`d` = distance to the edge in cells), zero inside, with
/// `c = 1.5 ln(1000) sqrt(max m) / (width * spacing)`.
pub fn damping_profile(shape: &[usize], spacing: f64, max_m: f64, width: usize) -> Vec<f64> {
    let n: usize = shape.iter().product();
    if width == 0 {
        return vec![0.0; n];
    }
    let c = 1.5 * 1000f64.ln() * max_m.sqrt() / (width as f64 * spacing);
    (0..n)
        .map(|k| {
            let idx = unflatten(k, shape);
            let d = idx
                .iter()
                .zip(shape)
                .map(|(&i, &len)| i.min(len - 1 - i))
                .min()
                .unwrap_or(0);
            if d >= width {
                0.0
            } else {
                let r = 1.0 - d as f64 / width as f64;
                c * r * r
            }
        })
        .collect()
}

/// Medium, discretisation and acquisition geometry of one acoustic problem.
#[derive(Debug, Clone)]
pub struct AcousticModel {
    pub shape: Vec<usize>,
    /// Grid spacing in metres.
    pub spacing: f64,
    /// Square slowness in s^2/m^2, row-major over `shape`.
    pub m: Vec<f64>,
    /// Damping in s/m^2.
    pub eta: Vec<f64>,
    pub damping_width: usize,
    pub nt: usize,
    /// Timestep in seconds.
    pub dt: f64,
    pub space_order: usize,
    pub src: SparsePointSet,
    pub rec: SparsePointSet,
    /// Source peak frequency in Hz.
    pub f0: f64,
    pub dtype: ElementType,
}

impl AcousticModel {
    /// Two layers split at half depth (the last axis): 1500 m/s above and
    /// 2500 m/s below, 15 m spacing, a centred source just below the sponge
    /// and a line of off-grid receivers in the lower layer.
    pub fn two_layer(shape: &[usize], space_order: usize, dtype: ElementType) -> Result<Self, AppError> {
        let depth = *shape.last().ok_or_else(|| AppError::InvalidConfig("empty shape".into()))?;
        let m = (0..shape.iter().product::<usize>())
            .map(|k| {
                let z = unflatten(k, shape)[shape.len() - 1];
                if z < depth / 2 {
                    1.0 / (1500.0f64 * 1500.0)
                } else {
                    1.0 / (2500.0f64 * 2500.0)
                }
            })
            .collect();
        Self::from_slowness(shape, m, space_order, dtype)
    }

    pub fn homogeneous(shape: &[usize], velocity: f64, space_order: usize, dtype: ElementType) -> Result<Self, AppError> {
        let n = shape.iter().product();
        Self::from_slowness(shape, vec![1.0 / (velocity * velocity); n], space_order, dtype)
    }

    /// Defaults: 15 m spacing, a sponge of `min_extent / 6` cells (at most
    /// 40), a 10 Hz source, 0.5 s of propagation at 0.9 of the stable step.
    pub fn from_slowness(shape: &[usize], m: Vec<f64>, space_order: usize, dtype: ElementType) -> Result<Self, AppError> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(AppError::InvalidConfig(format!("{}D models are not supported", shape.len())));
        }
        let spacing = 15.0;
        let min_extent = *shape.iter().min().unwrap();
        let width = (min_extent / 6).min(40);
        let max_m = m.iter().cloned().fold(0.0, f64::max);
        let eta = damping_profile(shape, spacing, max_m, width);
        let d = shape.len();
        let center = |k: usize| (shape[k] / 2) as f64 * spacing;
        let mut src = vec![0.0; d];
        for (k, s) in src.iter_mut().enumerate().take(d - 1) {
            *s = center(k);
        }
        src[d - 1] = (width + 2) as f64 * spacing;
        let rec_depth = (shape[d - 1] - width - 3) as f64 * spacing;
        let lo = width + 1;
        let hi = shape[0] - width - 2;
        let nrec = ((hi - lo) / 2).max(1);
        let rec: Vec<Vec<f64>> = (0..nrec)
            .map(|r| {
                let mut c: Vec<f64> = (0..d - 1).map(center).collect();
                c[0] = (lo as f64 + 0.37 + 2.0 * r as f64) * spacing;
                if d == 1 {
                    c.clear();
                }
                c.push(rec_depth);
                c
            })
            .collect();
        let mut model = AcousticModel {
            shape: shape.to_vec(),
            spacing,
            m,
            eta,
            damping_width: width,
            nt: 0,
            dt: 0.0,
            space_order,
            src: SparsePointSet::new(vec![src])?,
            rec: SparsePointSet::new(rec)?,
            f0: 10.0,
            dtype,
        };
        model.dt = 0.9 * model.max_stable_dt()?;
        model.nt = (0.5 / model.dt).ceil() as usize + 1;
        Ok(model)
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    /// Largest stable step of the leapfrog scheme for this order:
    /// `2 h / (v_max sqrt(d * sum|w|))`, `w` the second-derivative weights.
    /// At order 2 this is `h sqrt(min m) / sqrt(d)`.
    pub fn max_stable_dt(&self) -> Result<f64, AppError> {
        let p = (self.space_order / 2) as i64;
        let total: f64 = fd_weights(2, &int_offsets(-p, p))?
            .iter()
            .map(|w| ratio_to_f64(w).abs())
            .sum();
        let min_m = self.m.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_m > 0.0) {
            return Err(AppError::InvalidConfig("square slowness must be positive".into()));
        }
        let v_max = 1.0 / min_m.sqrt();
        Ok(2.0 * self.spacing / (v_max * (self.dims() as f64 * total).sqrt()))
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let n: usize = self.shape.iter().product();
        if self.m.len() != n || self.eta.len() != n {
            return Err(AppError::InvalidConfig("model arrays do not match the shape".into()));
        }
        if self.m.iter().any(|&v| !(v > 0.0)) {
            return Err(AppError::InvalidConfig("square slowness must be positive".into()));
        }
        if self.eta.iter().any(|&v| !(v >= 0.0)) {
            return Err(AppError::InvalidConfig("damping must be non-negative".into()));
        }
        if self.nt < 4 {
            return Err(AppError::InvalidConfig("at least 4 timesteps are needed".into()));
        }
        let limit = 0.9 * self.max_stable_dt()?;
        if !(self.dt > 0.0) || self.dt > limit * (1.0 + 1e-12) {
            return Err(AppError::CflViolation { dt: self.dt, limit });
        }
        if self.src.dims() != self.dims() || self.rec.dims() != self.dims() {
            return Err(AppError::InvalidConfig("point dimensionality does not match the model".into()));
        }
        Ok(())
    }

    pub fn with_nt(mut self, nt: usize) -> Self {
        self.nt = nt;
        self
    }

    /// The Ricker wavelet at `t0 = 1/f0` sampled on the time axis, one
    /// column per source.
    pub fn ricker_source(&self) -> Vec<f64> {
        let ns = self.src.num_points();
        let t0 = 1.0 / self.f0;
        (0..self.nt)
            .flat_map(|k| std::iter::repeat(ricker_wavelet(self.f0, k as f64 * self.dt, t0)).take(ns))
            .collect()
    }
}

pub struct ForwardResult {
    /// Wavefield with its three time buffers.
    pub wavefield: GridFunction,
    /// `nt x nrec` receiver samples.
    pub rec: Vec<f64>,
    /// Buffer slot of the last written timestep.
    pub last_slot: usize,
    pub source: Option<String>,
}

pub struct AdjointResult {
    pub wavefield: GridFunction,
    /// `nt x nsrc` samples at the source positions.
    pub src: Vec<f64>,
    pub last_slot: usize,
}

struct Problem {
    m: GridFunction,
    eta: GridFunction,
    field: GridFunction,
    inject: GridFunction,
    sample: GridFunction,
    op: OperatorHandle,
}

/// `m u.dt2 - laplace(u) + sign * eta u.dt = 0`, solved for `u.forward`
/// (sign +1) or `u.backward` (sign -1).
fn build(model: &AcousticModel, adjoint: bool, opts: &RunOptions) -> Result<Problem, AppError> {
    model.validate()?;
    let order = model.space_order;
    let mut reg = SymbolRegistry::new();
    let mut m = reg.create_dense("m", &model.shape, order, model.dtype)?;
    let mut eta = reg.create_dense("eta", &model.shape, order, model.dtype)?;
    m.fill_from(&model.m)?;
    eta.fill_from(&model.eta)?;
    let (fname, iname, sname, ipts, spts) = if adjoint {
        ("v", "y", "xs", &model.rec, &model.src)
    } else {
        ("u", "q", "rec", &model.src, &model.rec)
    };
    let field = reg.create_time(fname, &model.shape, 2, order, model.dtype)?;
    let inject = reg.create_sparse(iname, model.nt, ipts.num_points(), model.dtype)?;
    let sample = reg.create_sparse(sname, model.nt, spts.num_points(), model.dtype)?;

    let sign = if adjoint { Expr::int(-1) } else { Expr::one() };
    let pde = m.symbolic() * derivative(field.meta(), Derivative::Dt2)? - laplace(field.meta())?
        + sign * eta.symbolic() * derivative(field.meta(), Derivative::Dt)?;
    let which = if adjoint { TimeAccess::Backward } else { TimeAccess::Forward };
    let target = time_accessor(field.meta(), which)?;
    let stencil = solve_linear(&Eqn::new(pde, Expr::zero()), &target)?;

    let dims: Vec<Expr> = SPACE_DIMS[..model.dims()].iter().map(|d| Expr::symbol(d)).collect();
    let s = Expr::symbol("s");
    let scale = s.clone() * s / Expr::indexed("m", dims);
    // forward: u[t+1] += q[t], rec[t+1] = u[t+1]; adjoint mirrors it backwards
    let (fo, io, so) = if adjoint { (-1, -1, -2) } else { (1, 0, 1) };
    let inj = build_inject(field.meta(), ipts, inject.meta(), model.spacing, &scale, fo, io)?;
    let smp = build_sample(field.meta(), spts, sample.meta(), model.spacing, &Expr::one(), fo, so)?;
    let nt = model.nt as i64;
    let (lo, hi, dir) = if adjoint {
        (3, nt + 1, Direction::Backward)
    } else {
        (1, nt - 1, Direction::Forward)
    };
    let op = OperatorHandle::new(&reg, vec![Eqn::new(target, stencil)])
        .subs("h", Num::Float(model.spacing))
        .subs("s", Num::Float(model.dt))
        .time_range(lo, hi)
        .direction(dir)
        .custom(inj, Placement::AfterStencil)
        .custom(smp, Placement::AfterStencil);
    Ok(Problem {
        m,
        eta,
        field,
        inject,
        sample,
        op: opts.configure(op),
    })
}

fn run(p: &mut Problem, opts: &RunOptions) -> Result<(), AppError> {
    if opts.autotune {
        let candidates = default_candidates(&p.op.lower()?, &[8, 16, 32, 64]);
        let fs = [&p.m, &p.eta, &p.field, &p.inject, &p.sample];
        let r = autotune(&p.op, &fs, &candidates, &AutotuneOptions::default())?;
        p.op = p.op.clone().blocking(r.best);
    }
    p.op.apply(&mut [&mut p.m, &mut p.eta, &mut p.field, &mut p.inject, &mut p.sample])?;
    Ok(())
}

/// Forward modelling: propagates `src_data` (`nt x nsrc`) and records the
/// wavefield at the receivers.
pub fn acoustic_forward(model: &AcousticModel, src_data: &[f64], opts: &RunOptions) -> Result<ForwardResult, AppError> {
    let mut p = build(model, false, opts)?;
    p.inject.fill_from(src_data)?;
    let source = if opts.codegen.dump_path.is_some() { Some(p.op.emit()?) } else { None };
    run(&mut p, opts)?;
    Ok(ForwardResult {
        rec: p.sample.to_vec(),
        wavefield: p.field,
        last_slot: (model.nt - 1) % 3,
        source,
    })
}

/// Adjoint modelling: injects `rec_data` (`nt x nrec`) at the receivers,
/// runs backwards in time and samples at the sources.
pub fn acoustic_adjoint(model: &AcousticModel, rec_data: &[f64], opts: &RunOptions) -> Result<AdjointResult, AppError> {
    let mut p = build(model, true, opts)?;
    p.inject.fill_from(rec_data)?;
    run(&mut p, opts)?;
    Ok(AdjointResult {
        src: p.sample.to_vec(),
        wavefield: p.field,
        last_slot: 2 % 3,
    })
}

/// The operator and its buffers (`m`, `eta`, field, injected, sampled)
/// with `data` loaded into the injected series.
pub(crate) fn problem(
    model: &AcousticModel,
    adjoint: bool,
    data: &[f64],
    opts: &RunOptions,
) -> Result<(OperatorHandle, Vec<GridFunction>), AppError> {
    let mut p = build(model, adjoint, opts)?;
    p.inject.fill_from(data)?;
    Ok((p.op, vec![p.m, p.eta, p.field, p.inject, p.sample]))
}

/// The generated source of the forward (or adjoint) operator.
pub fn acoustic_source(model: &AcousticModel, adjoint: bool, opts: &RunOptions) -> Result<String, AppError> {
    Ok(build(model, adjoint, opts)?.op.emit()?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointReport {
    pub order: usize,
    pub dims: usize,
    pub ax_y: f64,
    pub x_aty: f64,
    pub difference: f64,
    /// `None` when both products vanish.
    pub ratio: Option<f64>,
}

impl AdjointReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        match self.ratio {
            Some(r) => (r - 1.0).abs() <= tolerance,
            None => self.ax_y == 0.0 && self.x_aty == 0.0,
        }
    }
}

impl std::fmt::Display for AdjointReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ratio = self.ratio.map_or("undefined".to_string(), |r| format!("{r:.10}"));
        write!(
            f,
            "{} {}D {:.10e} {:.10e} {:.4e} {}",
            self.order, self.dims, self.ax_y, self.x_aty, self.difference, ratio
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `<A x, y>` against `<x, A^T y>` with `x` the Ricker source and `y`
/// random receiver data drawn from `seed`.
pub fn adjoint_test(model: &AcousticModel, seed: u64, opts: &RunOptions) -> Result<AdjointReport, AppError> {
    let x = model.ricker_source();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..model.nt * model.rec.num_points())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    adjoint_test_with(model, &x, &y, opts)
}

pub fn adjoint_test_with(model: &AcousticModel, x: &[f64], y: &[f64], opts: &RunOptions) -> Result<AdjointReport, AppError> {
    let fwd = acoustic_forward(model, x, opts)?;
    let adj = acoustic_adjoint(model, y, opts)?;
    let ax_y = dot(&fwd.rec, y);
    let x_aty = dot(x, &adj.src);
    let ratio = if ax_y == 0.0 && x_aty == 0.0 { None } else { Some(ax_y / x_aty) };
    Ok(AdjointReport {
        order: model.space_order,
        dims: model.dims(),
        ax_y,
        x_aty,
        difference: ax_y - x_aty,
        ratio,
    })
}

/// Index of the grid point at physical position `coords`.
pub fn node_at(model: &AcousticModel, coords: &[f64]) -> usize {
    let idx: Vec<usize> = coords.iter().map(|c| (c / model.spacing).round() as usize).collect();
    flat_index(&idx, &model.shape)
}
