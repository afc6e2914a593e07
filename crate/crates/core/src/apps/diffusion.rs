//! Explicit heat diffusion on a 2D grid with alternating time buffers.

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::{AppError, RunOptions};
use crate::codegen::OperatorHandle;
use crate::fd::{derivative, fd_weights, int_offsets, laplace, time_accessor, Derivative, TimeAccess};
use crate::grid::{ElementType, GridFunction, SymbolRegistry};
use crate::optimizer::{autotune, default_candidates, AutotuneOptions, AutotuneReport};
use crate::symbolic::{number::ratio_to_f64, solve_linear, Eqn, Expr, Num};

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionConfig {
    pub nx: usize,
    pub ny: usize,
    pub alpha: BigRational,
    pub dx: BigRational,
    pub dy: BigRational,
    pub nt: usize,
    pub space_order: usize,
    pub dtype: ElementType,
    /// Overrides the derived timestep.
    pub dt: Option<BigRational>,
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

impl DiffusionConfig {
    /// Spacing 0.001 in both directions and alpha = 0.5.
    pub fn new(nx: usize, ny: usize, nt: usize) -> Self {
        DiffusionConfig {
            nx,
            ny,
            alpha: ratio(1, 2),
            dx: ratio(1, 1000),
            dy: ratio(1, 1000),
            nt,
            space_order: 2,
            dtype: ElementType::F32,
            dt: None,
        }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.space_order = order;
        self
    }

    pub fn with_dtype(mut self, dtype: ElementType) -> Self {
        self.dtype = dtype;
        self
    }

    fn second_derivative_weights(&self) -> Result<Vec<BigRational>, AppError> {
        let p = (self.space_order / 2) as i64;
        Ok(fd_weights(2, &int_offsets(-p, p))?)
    }

    /// `dx^2 dy^2 / (2 alpha (dx^2 + dy^2))`. Wider stencils have a larger
    /// spectral radius, so above order 2 the step is scaled by `2 / sum|w|`
    /// of the second-derivative weights to stay stable.
    pub fn dt(&self) -> Result<BigRational, AppError> {
        if let Some(dt) = &self.dt {
            return Ok(dt.clone());
        }
        let dx2 = &self.dx * &self.dx;
        let dy2 = &self.dy * &self.dy;
        let base = &dx2 * &dy2 / (ratio(2, 1) * &self.alpha * (&dx2 + &dy2));
        if self.space_order <= 2 {
            return Ok(base);
        }
        let total: BigRational = self.second_derivative_weights()?.iter().map(|w| w.abs()).sum();
        Ok(base * ratio(2, 1) / total)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.dx != self.dy {
            return Err(AppError::InvalidConfig(
                "grid functions share one spacing symbol, so dx must equal dy".into(),
            ));
        }
        if !self.alpha.is_positive() || !self.dx.is_positive() {
            return Err(AppError::InvalidConfig("alpha and spacing must be positive".into()));
        }
        if self.space_order < 2 || self.space_order % 2 != 0 {
            return Err(AppError::InvalidConfig(format!("space order {} is not even", self.space_order)));
        }
        let reach = self.space_order;
        if self.nx <= reach || self.ny <= reach {
            return Err(AppError::InvalidConfig(format!(
                "grid {}x{} is too small for order {}",
                self.nx, self.ny, self.space_order
            )));
        }
        if self.dt()?.is_zero() {
            return Err(AppError::InvalidConfig("timestep is zero".into()));
        }
        Ok(())
    }

    /// `alpha * dt / dx^2`, the neighbour weight at order 2.
    pub fn courant(&self) -> Result<BigRational, AppError> {
        Ok(&self.alpha * self.dt()? / (&self.dx * &self.dx))
    }
}

/// Plain nested loops in double precision: the oracle for every diffusion
/// comparison. `init` fills both time buffers; the result is the last
/// written buffer.
pub fn diffusion_reference(cfg: &DiffusionConfig, init: &[f64]) -> Result<Vec<f64>, AppError> {
    cfg.validate()?;
    let (nx, ny) = (cfg.nx, cfg.ny);
    if init.len() != nx * ny {
        return Err(AppError::InvalidConfig(format!("initial field has {} values, expected {}", init.len(), nx * ny)));
    }
    let w: Vec<f64> = cfg.second_derivative_weights()?.iter().map(ratio_to_f64).collect();
    let p = cfg.space_order / 2;
    let dx2 = ratio_to_f64(&(&cfg.dx * &cfg.dx));
    let dy2 = ratio_to_f64(&(&cfg.dy * &cfg.dy));
    let a = ratio_to_f64(&cfg.alpha);
    let dt = ratio_to_f64(&cfg.dt()?);
    let mut src = init.to_vec();
    let mut dst = init.to_vec();
    for _ in 0..cfg.nt {
        for i in p..nx - p {
            for j in p..ny - p {
                let mut uxx = 0.0;
                let mut uyy = 0.0;
                for (k, wk) in w.iter().enumerate() {
                    uxx += wk * src[(i + k - p) * ny + j];
                    uyy += wk * src[i * ny + j + k - p];
                }
                dst[i * ny + j] = src[i * ny + j] + dt * a * (uxx / dx2 + uyy / dy2);
            }
        }
        std::mem::swap(&mut src, &mut dst);
    }
    Ok(src)
}

/// The diffusion operator: solve `u.dt = a * laplace(u)` for `u.forward`,
/// substitute `h`, `s` and `a`, and run `nt` steps.
pub fn diffusion_operator(cfg: &DiffusionConfig) -> Result<(GridFunction, OperatorHandle), AppError> {
    cfg.validate()?;
    let mut reg = SymbolRegistry::new();
    let u = reg.create_time("u", &[cfg.nx, cfg.ny], 1, cfg.space_order, cfg.dtype)?;
    let eqn = Eqn::new(
        derivative(u.meta(), Derivative::Dt)?,
        Expr::symbol("a") * laplace(u.meta())?,
    );
    let fwd = time_accessor(u.meta(), TimeAccess::Forward)?;
    let stencil = solve_linear(&eqn, &fwd)?;
    let op = OperatorHandle::new(&reg, vec![Eqn::new(fwd, stencil)])
        .subs("h", Num::Exact(cfg.dx.clone()))
        .subs("s", Num::Exact(cfg.dt()?))
        .subs("a", Num::Exact(cfg.alpha.clone()))
        .timesteps(cfg.nt);
    Ok((u, op))
}

/// Runs the compiled diffusion operator from `init` and returns the final
/// field, plus the auto-tuning report when tuning was requested.
pub fn diffusion_compiled(
    cfg: &DiffusionConfig,
    init: &[f64],
    opts: &RunOptions,
) -> Result<(Vec<f64>, Option<AutotuneReport>), AppError> {
    let (mut u, op) = diffusion_operator(cfg)?;
    let n = cfg.nx * cfg.ny;
    if init.len() != n {
        return Err(AppError::InvalidConfig(format!("initial field has {} values, expected {n}", init.len())));
    }
    u.set_slot(0, init)?;
    u.set_slot(1, init)?;
    let mut op = opts.configure(op);
    let mut report = None;
    if opts.autotune {
        let candidates = default_candidates(&op.lower()?, &[8, 16, 32, 64]);
        let r = autotune(&op, &[&u], &candidates, &AutotuneOptions::default())?;
        op = op.blocking(r.best.clone());
        report = Some(r);
    }
    op.apply(&mut [&mut u])?;
    Ok((u.slot(cfg.nt % 2), report))
}
