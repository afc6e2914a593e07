//! Symbolic functions bound to aligned, zero-initialized data buffers.

mod buffer;
mod io;

use std::collections::HashMap;

pub use buffer::{AlignedVec, Buffer, ElementType};
pub use io::{read_array, write_array, write_csv, ArrayFile};

use crate::symbolic::Expr;

/// Spatial dimension names in declaration order.
pub const SPACE_DIMS: [&str; 3] = ["x", "y", "z"];
pub const TIME_DIM: &str = "t";
/// Index over the points of a sparse point set.
pub const POINT_DIM: &str = "p";
/// Spacing symbol shared by all spatial dimensions.
pub const SPACE_SPACING: &str = "h";
pub const TIME_SPACING: &str = "s";
pub const DEFAULT_ALIGNMENT: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("a function named `{0}` already exists")]
    DuplicateName(String),
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("index {index:?} out of bounds for shape {shape:?}")]
    OutOfBounds { index: Vec<usize>, shape: Vec<usize> },
    #[error("data length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed array file: {0}")]
    Format(String),
}

/// What kind of storage a function carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunctionKind {
    /// Spatial grid without a time axis.
    Dense,
    /// Spatial grid with `time_order + 1` rotating time buffers.
    Time { time_order: usize },
    /// Per-point time series: `nt` rows of `npoints` values.
    Sparse { nt: usize, npoints: usize },
}

/// Shape, order and type information recoverable from any symbolic reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunctionMeta {
    pub name: String,
    pub kind: FunctionKind,
    pub space_shape: Vec<usize>,
    pub space_order: usize,
    pub dtype: ElementType,
}

impl FunctionMeta {
    pub fn time_order(&self) -> Option<usize> {
        match self.kind {
            FunctionKind::Time { time_order } => Some(time_order),
            _ => None,
        }
    }

    pub fn is_time_varying(&self) -> bool {
        matches!(self.kind, FunctionKind::Time { .. })
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.kind, FunctionKind::Sparse { .. })
    }

    pub fn space_dims(&self) -> &'static [&'static str] {
        match self.kind {
            FunctionKind::Sparse { .. } => &[],
            _ => &SPACE_DIMS[..self.space_shape.len()],
        }
    }

    /// Dimension names in index order.
    pub fn dims(&self) -> Vec<&'static str> {
        match self.kind {
            FunctionKind::Dense => self.space_dims().to_vec(),
            FunctionKind::Time { .. } => {
                let mut d = vec![TIME_DIM];
                d.extend_from_slice(self.space_dims());
                d
            }
            FunctionKind::Sparse { .. } => vec![TIME_DIM, POINT_DIM],
        }
    }

    /// Full buffer shape, slowest-varying index first.
    pub fn buffer_shape(&self) -> Vec<usize> {
        match self.kind {
            FunctionKind::Dense => self.space_shape.clone(),
            FunctionKind::Time { time_order } => {
                let mut s = vec![time_order + 1];
                s.extend_from_slice(&self.space_shape);
                s
            }
            FunctionKind::Sparse { nt, npoints } => vec![nt, npoints],
        }
    }

    pub fn len(&self) -> usize {
        self.buffer_shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Symbolic view such as `f(x, y)` or `u(t, x, y)`.
    pub fn symbolic(&self) -> Expr {
        let args = self.dims().into_iter().map(Expr::symbol).collect();
        match self.kind {
            FunctionKind::Sparse { .. } => Expr::indexed(&self.name, args),
            _ => Expr::func(&self.name, args),
        }
    }

    /// Spacing symbol paired with a dimension name.
    pub fn spacing_of(dim: &str) -> Option<&'static str> {
        match dim {
            TIME_DIM => Some(TIME_SPACING),
            "x" | "y" | "z" => Some(SPACE_SPACING),
            _ => None,
        }
    }
}

/// A symbolic function together with its owned data.
#[derive(Debug, Clone)]
pub struct GridFunction {
    meta: FunctionMeta,
    data: Buffer,
}

impl GridFunction {
    pub fn meta(&self) -> &FunctionMeta {
        &self.meta
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn dtype(&self) -> ElementType {
        self.meta.dtype
    }

    pub fn shape(&self) -> Vec<usize> {
        self.meta.buffer_shape()
    }

    pub fn symbolic(&self) -> Expr {
        self.meta.symbolic()
    }

    pub fn data(&self) -> &Buffer {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Buffer {
        &mut self.data
    }

    fn flat_index(&self, index: &[usize]) -> Result<usize, GridError> {
        let shape = self.shape();
        if index.len() != shape.len() || index.iter().zip(&shape).any(|(i, n)| i >= n) {
            return Err(GridError::OutOfBounds {
                index: index.to_vec(),
                shape,
            });
        }
        Ok(index.iter().zip(&shape).fold(0, |acc, (i, n)| acc * n + i))
    }

    pub fn get(&self, index: &[usize]) -> Result<f64, GridError> {
        Ok(self.data.get(self.flat_index(index)?))
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<(), GridError> {
        let i = self.flat_index(index)?;
        self.data.set(i, value);
        Ok(())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_f64_vec()
    }

    /// Overwrites the whole buffer.
    pub fn fill_from(&mut self, values: &[f64]) -> Result<(), GridError> {
        if values.len() != self.data.len() {
            return Err(GridError::LengthMismatch {
                expected: self.data.len(),
                got: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            self.data.set(i, v);
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        for i in 0..self.data.len() {
            self.data.set(i, value);
        }
    }

    fn slot_len(&self) -> usize {
        self.meta.space_shape.iter().product()
    }

    /// One time buffer of a time-varying function (the whole grid otherwise).
    pub fn slot(&self, t: usize) -> Vec<f64> {
        let n = self.slot_len();
        (t * n..(t + 1) * n).map(|i| self.data.get(i)).collect()
    }

    pub fn set_slot(&mut self, t: usize, values: &[f64]) -> Result<(), GridError> {
        let n = self.slot_len();
        if values.len() != n {
            return Err(GridError::LengthMismatch {
                expected: n,
                got: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            self.data.set(t * n + i, v);
        }
        Ok(())
    }
}

/// Registry of declared functions in declaration order.
#[derive(Debug, Clone)]
pub struct SymbolRegistry {
    entries: Vec<FunctionMeta>,
    index: HashMap<String, usize>,
    alignment: usize,
}

impl Default for SymbolRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolRegistry {
    pub fn new() -> Self {
        Self::with_alignment(DEFAULT_ALIGNMENT)
    }

    pub fn with_alignment(alignment: usize) -> Self {
        assert!(alignment.is_power_of_two() && alignment >= 8);
        SymbolRegistry {
            entries: Vec::new(),
            index: HashMap::new(),
            alignment,
        }
    }

    pub fn alignment(&self) -> usize {
        self.alignment
    }

    pub fn entries(&self) -> &[FunctionMeta] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&FunctionMeta> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    /// Declaration position, used to order kernel arguments.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Metadata of the function referenced by a function application or
    /// indexed access, whatever its argument shifts.
    pub fn metadata_of(&self, e: &Expr) -> Result<&FunctionMeta, GridError> {
        let name = e
            .base_name()
            .ok_or_else(|| GridError::UnknownSymbol(e.to_string()))?;
        self.get(name)
            .ok_or_else(|| GridError::UnknownSymbol(name.to_string()))
    }

    fn check_space(shape: &[usize], space_order: usize) -> Result<(), GridError> {
        if space_order < 2 || space_order % 2 != 0 {
            return Err(GridError::InvalidOrder(format!(
                "space_order must be even and >= 2, got {space_order}"
            )));
        }
        if shape.is_empty() || shape.len() > 3 {
            return Err(GridError::InvalidShape {
                shape: shape.to_vec(),
                reason: "expected 1 to 3 spatial dimensions".into(),
            });
        }
        if let Some(&n) = shape.iter().find(|&&n| n < space_order + 1) {
            return Err(GridError::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("extent {n} is smaller than space_order + 1 = {}", space_order + 1),
            });
        }
        Ok(())
    }

    fn register(&mut self, meta: FunctionMeta) -> Result<GridFunction, GridError> {
        if self.index.contains_key(&meta.name) {
            return Err(GridError::DuplicateName(meta.name));
        }
        let data = Buffer::zeroed(meta.dtype, meta.len(), self.alignment);
        self.index.insert(meta.name.clone(), self.entries.len());
        self.entries.push(meta.clone());
        Ok(GridFunction { meta, data })
    }

    pub fn create_dense(
        &mut self,
        name: &str,
        space_shape: &[usize],
        space_order: usize,
        dtype: ElementType,
    ) -> Result<GridFunction, GridError> {
        Self::check_space(space_shape, space_order)?;
        self.register(FunctionMeta {
            name: name.to_string(),
            kind: FunctionKind::Dense,
            space_shape: space_shape.to_vec(),
            space_order,
            dtype,
        })
    }

    pub fn create_time(
        &mut self,
        name: &str,
        space_shape: &[usize],
        time_order: usize,
        space_order: usize,
        dtype: ElementType,
    ) -> Result<GridFunction, GridError> {
        if time_order < 1 {
            return Err(GridError::InvalidOrder(format!(
                "time_order must be >= 1, got {time_order}"
            )));
        }
        Self::check_space(space_shape, space_order)?;
        self.register(FunctionMeta {
            name: name.to_string(),
            kind: FunctionKind::Time { time_order },
            space_shape: space_shape.to_vec(),
            space_order,
            dtype,
        })
    }

    /// Per-point time series of `nt` samples for `npoints` points.
    pub fn create_sparse(
        &mut self,
        name: &str,
        nt: usize,
        npoints: usize,
        dtype: ElementType,
    ) -> Result<GridFunction, GridError> {
        if nt == 0 || npoints == 0 {
            return Err(GridError::InvalidShape {
                shape: vec![nt, npoints],
                reason: "sparse data needs at least one sample and one point".into(),
            });
        }
        self.register(FunctionMeta {
            name: name.to_string(),
            kind: FunctionKind::Sparse { nt, npoints },
            space_shape: Vec::new(),
            space_order: 0,
            dtype,
        })
    }
}
