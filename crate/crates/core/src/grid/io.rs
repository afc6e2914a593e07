//! Array files: a small header followed by flat little-endian data.
//!
//! Layout: `b"SFGD"`, `u32` version, `u32` name length, name bytes (UTF-8),
//! `u8` element type (0 = f32, 1 = f64), `u32` rank, `rank` x `u64` extents,
//! then the elements in row-major order. All integers little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::{ElementType, GridError};

const MAGIC: &[u8; 4] = b"SFGD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFile {
    pub name: String,
    pub dtype: ElementType,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

fn io_err(e: std::io::Error) -> GridError {
    GridError::Io(e.to_string())
}

pub fn write_array(path: &Path, array: &ArrayFile) -> Result<(), GridError> {
    let expected: usize = array.shape.iter().product();
    if expected != array.data.len() {
        return Err(GridError::LengthMismatch {
            expected,
            got: array.data.len(),
        });
    }
    let mut out = Vec::with_capacity(32 + array.data.len() * array.dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(array.name.len() as u32).to_le_bytes());
    out.extend_from_slice(array.name.as_bytes());
    out.push(match array.dtype {
        ElementType::F32 => 0,
        ElementType::F64 => 1,
    });
    out.extend_from_slice(&(array.shape.len() as u32).to_le_bytes());
    for &n in &array.shape {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for &v in &array.data {
        match array.dtype {
            ElementType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            ElementType::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(io_err)
}

pub fn read_array(path: &Path) -> Result<ArrayFile, GridError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err)?;
    let mut cur = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8], GridError> {
        if cur.len() < n {
            return Err(GridError::Format("truncated file".into()));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    if take(4)? != MAGIC {
        return Err(GridError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(GridError::Format(format!("unsupported version {version}")));
    }
    let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let name = String::from_utf8(take(name_len)?.to_vec())
        .map_err(|_| GridError::Format("name is not UTF-8".into()))?;
    let dtype = match take(1)?[0] {
        0 => ElementType::F32,
        1 => ElementType::F64,
        t => return Err(GridError::Format(format!("unknown element type tag {t}"))),
    };
    let rank = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
    }
    let n: usize = shape.iter().product();
    let raw = take(n * dtype.size())?;
    let data = match dtype {
        ElementType::F32 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        ElementType::F64 => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(ArrayFile {
        name,
        dtype,
        shape,
        data,
    })
}

/// Writes a 1D or 2D array as comma-separated rows; higher ranks are
/// flattened to rows of the last extent.
pub fn write_csv(path: &Path, shape: &[usize], data: &[f64]) -> Result<(), GridError> {
    let cols = *shape.last().unwrap_or(&1);
    let mut out = String::new();
    for row in data.chunks(cols.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err)
}
