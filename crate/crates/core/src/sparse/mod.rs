//! Off-grid points: multilinear injection into and sampling from grids,
//! built as custom iterations over the point index.

use std::path::Path;

use crate::grid::{FunctionMeta, GridError, POINT_DIM, TIME_DIM};
use crate::ir::{ConstTable, CustomIteration, Dimension, TableData};
use crate::symbolic::{substitute, Eqn, Expr, SymbolicError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SparseError {
    #[error("point {point} at {coords:?} lies outside the interpolation domain")]
    OutOfDomain { point: usize, coords: Vec<f64> },
    #[error("point set is empty")]
    Empty,
    #[error("point {point} has {got} coordinates, expected {expected}")]
    DimensionMismatch { point: usize, expected: usize, got: usize },
    #[error("`{0}` is not a time-varying grid function")]
    NotTimeVarying(String),
    #[error("`{name}` holds {got} points but the set has {expected}")]
    DataMismatch { name: String, expected: usize, got: usize },
    #[error("malformed point file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}

/// Physical point coordinates, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePointSet {
    coords: Vec<Vec<f64>>,
}

impl SparsePointSet {
    pub fn new(coords: Vec<Vec<f64>>) -> Result<Self, SparseError> {
        let Some(first) = coords.first() else {
            return Err(SparseError::Empty);
        };
        let d = first.len();
        for (i, c) in coords.iter().enumerate() {
            if c.len() != d || d == 0 {
                return Err(SparseError::DimensionMismatch {
                    point: i,
                    expected: d.max(1),
                    got: c.len(),
                });
            }
        }
        Ok(SparsePointSet { coords })
    }

    pub fn num_points(&self) -> usize {
        self.coords.len()
    }

    pub fn dims(&self) -> usize {
        self.coords[0].len()
    }

    pub fn coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    /// Cell indices `[npoints][d]` and corner weights `[npoints][2^d]`.
    pub fn weights(&self, spacing: f64, shape: &[usize]) -> Result<(Vec<Vec<usize>>, Vec<Vec<f64>>), SparseError> {
        let mut cells = Vec::with_capacity(self.coords.len());
        let mut weights = Vec::with_capacity(self.coords.len());
        for (i, c) in self.coords.iter().enumerate() {
            let (cell, w) = interpolation_weights(c, spacing, shape).map_err(|_| SparseError::OutOfDomain {
                point: i,
                coords: c.clone(),
            })?;
            cells.push(cell);
            weights.push(w);
        }
        Ok((cells, weights))
    }
}

/// Offset (0 or 1) of `corner` along dimension `d`; the first dimension
/// varies fastest.
pub fn corner_offset(corner: usize, d: usize) -> usize {
    (corner >> d) & 1
}

/// Enclosing cell and multilinear corner weights of one point.
pub fn interpolation_weights(coord: &[f64], spacing: f64, shape: &[usize]) -> Result<(Vec<usize>, Vec<f64>), SparseError> {
    let out = || SparseError::OutOfDomain {
        point: 0,
        coords: coord.to_vec(),
    };
    if coord.len() != shape.len() || !(spacing > 0.0) {
        return Err(out());
    }
    let mut cell = Vec::with_capacity(coord.len());
    let mut frac = Vec::with_capacity(coord.len());
    for (&x, &n) in coord.iter().zip(shape) {
        let mut r = x / spacing;
        // coordinates given as node multiples may divide to just below the node
        if (r - r.round()).abs() <= 1e-12 * r.abs().max(1.0) {
            r = r.round();
        }
        if !r.is_finite() || r < 0.0 || n < 2 {
            return Err(out());
        }
        let c = r.floor();
        if c as usize > n - 2 {
            return Err(out());
        }
        cell.push(c as usize);
        frac.push(r - c);
    }
    let d = coord.len();
    let weights = (0..1usize << d)
        .map(|k| {
            (0..d)
                .map(|j| if corner_offset(k, j) == 1 { frac[j] } else { 1.0 - frac[j] })
                .product()
        })
        .collect();
    Ok((cell, weights))
}

/// Names of the constant tables generated for a point data function.
pub fn table_names(data: &str) -> (String, String) {
    (format!("{data}_cell"), format!("{data}_w"))
}

fn tables(data: &FunctionMeta, cells: &[Vec<usize>], weights: &[Vec<f64>]) -> Vec<ConstTable> {
    let (cname, wname) = table_names(&data.name);
    let d = cells[0].len();
    vec![
        ConstTable {
            name: cname,
            shape: vec![cells.len(), d],
            data: TableData::Int(cells.iter().flatten().map(|&c| c as i64).collect()),
        },
        ConstTable {
            name: wname,
            shape: vec![cells.len(), 1 << d],
            data: TableData::Float(weights.iter().flatten().copied().collect()),
        },
    ]
}

struct Setup {
    dims: Vec<&'static str>,
    tables: Vec<ConstTable>,
    npoints: usize,
}

fn setup(field: &FunctionMeta, pts: &SparsePointSet, data: &FunctionMeta, spacing: f64) -> Result<Setup, SparseError> {
    if !field.is_time_varying() {
        return Err(SparseError::NotTimeVarying(field.name.clone()));
    }
    let dims = field.space_dims().to_vec();
    if pts.dims() != dims.len() {
        return Err(SparseError::DimensionMismatch {
            point: 0,
            expected: dims.len(),
            got: pts.dims(),
        });
    }
    let npoints = data.buffer_shape().get(1).copied().unwrap_or(0);
    if !data.is_sparse() || npoints != pts.num_points() {
        return Err(SparseError::DataMismatch {
            name: data.name.clone(),
            expected: pts.num_points(),
            got: npoints,
        });
    }
    let (cells, weights) = pts.weights(spacing, &field.space_shape)?;
    Ok(Setup {
        dims,
        tables: tables(data, &cells, &weights),
        npoints,
    })
}

fn p() -> Expr {
    Expr::symbol(POINT_DIM)
}

fn t_plus(k: i64) -> Expr {
    Expr::symbol(TIME_DIM) + Expr::int(k)
}

/// Grid indices of `corner` of each point's cell, as table lookups.
fn corner_indices(data: &str, ndim: usize, corner: usize) -> Vec<Expr> {
    let (cname, _) = table_names(data);
    (0..ndim)
        .map(|j| {
            let base = Expr::indexed(&cname, vec![p(), Expr::int(j as i64)]);
            match corner_offset(corner, j) {
                0 => base,
                o => base + Expr::int(o as i64),
            }
        })
        .collect()
}

fn corner_weight(data: &str, corner: usize) -> Expr {
    Expr::indexed(&table_names(data).1, vec![p(), Expr::int(corner as i64)])
}

/// `scale` may refer to the corner through the spatial symbols `x, y, z`,
/// e.g. `s**2 * m[x, y]**-1`.
fn scale_at(scale: &Expr, dims: &[&str], corner: &[Expr]) -> Result<Expr, SparseError> {
    let map: Vec<(Expr, Expr)> = dims
        .iter()
        .zip(corner)
        .map(|(d, c)| (Expr::symbol(d), c.clone()))
        .collect();
    Ok(substitute(scale, &map)?)
}

/// Accumulates `weight * scale * data[t + data_offset, p]` into the `2^d`
/// corners of each point's cell in `field[t + field_offset]`.
pub fn build_inject(
    field: &FunctionMeta,
    pts: &SparsePointSet,
    data: &FunctionMeta,
    spacing: f64,
    scale: &Expr,
    field_offset: i64,
    data_offset: i64,
) -> Result<CustomIteration, SparseError> {
    let s = setup(field, pts, data, spacing)?;
    let sample = Expr::indexed(&data.name, vec![t_plus(data_offset), p()]);
    let mut eqs = Vec::new();
    for k in 0..1usize << s.dims.len() {
        let idx = corner_indices(&data.name, s.dims.len(), k);
        let mut full = vec![t_plus(field_offset)];
        full.extend(idx.iter().cloned());
        let target = Expr::indexed(&field.name, full);
        let add = corner_weight(&data.name, k) * scale_at(scale, &s.dims, &idx)? * sample.clone();
        eqs.push(Eqn::new(target.clone(), target + add));
    }
    Ok(CustomIteration {
        index: Dimension::custom(POINT_DIM, s.npoints),
        limits: (0, s.npoints as i64),
        eqs,
        tables: s.tables,
    })
}

/// Writes `scale * sum_k weight_k * field[t + field_offset, corner_k]` into
/// `data[t + data_offset, p]`.
pub fn build_sample(
    field: &FunctionMeta,
    pts: &SparsePointSet,
    data: &FunctionMeta,
    spacing: f64,
    scale: &Expr,
    field_offset: i64,
    data_offset: i64,
) -> Result<CustomIteration, SparseError> {
    let s = setup(field, pts, data, spacing)?;
    let mut terms = Vec::new();
    for k in 0..1usize << s.dims.len() {
        let idx = corner_indices(&data.name, s.dims.len(), k);
        let mut full = vec![t_plus(field_offset)];
        full.extend(idx.iter().cloned());
        terms.push(corner_weight(&data.name, k) * scale_at(scale, &s.dims, &idx)? * Expr::indexed(&field.name, full));
    }
    let target = Expr::indexed(&data.name, vec![t_plus(data_offset), p()]);
    Ok(CustomIteration {
        index: Dimension::custom(POINT_DIM, s.npoints),
        limits: (0, s.npoints as i64),
        eqs: vec![Eqn::new(target, Expr::add(terms))],
        tables: s.tables,
    })
}

/// A point file entry: coordinates and an optional series file reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEntry {
    pub coords: Vec<f64>,
    pub series: Option<String>,
}

/// Parses one point per line: whitespace-separated coordinates, optionally
/// followed by a file reference. Blank lines and `#` comments are skipped.
pub fn parse_points(text: &str) -> Result<Vec<PointEntry>, SparseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut coords = Vec::new();
        let mut series = None;
        for tok in line.split_whitespace() {
            match tok.parse::<f64>() {
                Ok(v) if series.is_none() => coords.push(v),
                _ if series.is_none() && !coords.is_empty() => series = Some(tok.to_string()),
                _ => {
                    return Err(SparseError::Parse {
                        line: i + 1,
                        reason: format!("unexpected token `{tok}`"),
                    })
                }
            }
        }
        out.push(PointEntry { coords, series });
    }
    Ok(out)
}

pub fn read_points(path: &Path) -> Result<Vec<PointEntry>, SparseError> {
    let text = std::fs::read_to_string(path).map_err(|e| GridError::Io(e.to_string()))?;
    parse_points(&text)
}

pub fn write_points(path: &Path, points: &[PointEntry]) -> Result<(), SparseError> {
    let mut text = String::new();
    for p in points {
        let mut parts: Vec<String> = p.coords.iter().map(|c| c.to_string()).collect();
        parts.extend(p.series.clone());
        text.push_str(&parts.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| GridError::Io(e.to_string()))?;
    Ok(())
}
