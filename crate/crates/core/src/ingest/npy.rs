//! Minimal `.npy` reader and writer for the arrays this crate exchanges:
//! little-endian floats and integers, booleans, C order, format versions
//! 1.0 and 2.0.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("missing .npy magic string")]
    BadMagic,
    #[error("unsupported .npy format version {0}.{1}")]
    UnsupportedVersion(u8, u8),
    #[error("unsupported dtype '{0}'")]
    UnsupportedDtype(String),
    #[error("Fortran-ordered arrays are not supported")]
    FortranOrderUnsupported,
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("payload has {actual} bytes, shape needs {expected}")]
    Truncated { expected: usize, actual: usize },
    #[error("shape {shape:?} needs {expected} values, got {actual}")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("arrays must have at least one dimension")]
    ScalarUnsupported,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
    I4,
    I8,
    U1,
    Bool,
}

impl Dtype {
    fn parse(descr: &str) -> Result<Self, NpyError> {
        Ok(match descr {
            "<f4" => Dtype::F4,
            "<f8" => Dtype::F8,
            "<i4" => Dtype::I4,
            "<i8" => Dtype::I8,
            "|u1" | "<u1" => Dtype::U1,
            "|b1" | "<b1" => Dtype::Bool,
            other => return Err(NpyError::UnsupportedDtype(other.to_string())),
        })
    }

    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
            Dtype::I4 => "<i4",
            Dtype::I8 => "<i8",
            Dtype::U1 => "|u1",
            Dtype::Bool => "|b1",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 | Dtype::I4 => 4,
            Dtype::F8 | Dtype::I8 => 8,
            Dtype::U1 | Dtype::Bool => 1,
        }
    }
}

/// A parsed array; every dtype is widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub data: Vec<f64>,
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<NpyArray, NpyError> {
    parse_npy(&fs::read(path)?)
}

pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray, NpyError> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, offset) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 => {
            if bytes.len() < 12 {
                return Err(NpyError::BadHeader("truncated length field".into()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        _ => return Err(NpyError::UnsupportedVersion(major, minor)),
    };
    let end = offset + header_len;
    if bytes.len() < end {
        return Err(NpyError::BadHeader("header runs past end of file".into()));
    }
    let header = std::str::from_utf8(&bytes[offset..end])
        .map_err(|_| NpyError::BadHeader("header is not ASCII".into()))?;
    let (descr, fortran, shape) = parse_header(header)?;
    if descr.starts_with('>') {
        return Err(NpyError::UnsupportedDtype(descr));
    }
    let dtype = Dtype::parse(&descr)?;
    if fortran {
        return Err(NpyError::FortranOrderUnsupported);
    }
    let count: usize = shape.iter().product();
    let payload = &bytes[end..];
    let expected = count * dtype.size();
    if payload.len() < expected {
        return Err(NpyError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    let data = decode(&payload[..expected], dtype);
    Ok(NpyArray { shape, dtype, data })
}

fn decode(payload: &[u8], dtype: Dtype) -> Vec<f64> {
    match dtype {
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        Dtype::I4 => payload
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::I8 => payload
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")) as f64)
            .collect(),
        Dtype::U1 => payload.iter().map(|&b| b as f64).collect(),
        Dtype::Bool => payload.iter().map(|&b| if b != 0 { 1.0 } else { 0.0 }).collect(),
    }
}

/// Pulls `descr`, `fortran_order` and `shape` out of the Python dict literal.
fn parse_header(header: &str) -> Result<(String, bool, Vec<usize>), NpyError> {
    let bad = |m: &str| NpyError::BadHeader(m.to_string());
    let body = header.trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.trim_end().strip_suffix('}'))
        .ok_or_else(|| bad("header is not a dict"))?;

    let value_after = |key: &str| -> Result<&str, NpyError> {
        let pos = body
            .find(&format!("'{key}'"))
            .or_else(|| body.find(&format!("\"{key}\"")))
            .ok_or_else(|| bad(&format!("missing key {key}")))?;
        let rest = &body[pos + key.len() + 2..];
        let rest = rest.trim_start();
        rest.strip_prefix(':')
            .map(str::trim_start)
            .ok_or_else(|| bad("expected ':'"))
    };

    let descr_raw = value_after("descr")?;
    let quote = descr_raw.chars().next().ok_or_else(|| bad("empty descr"))?;
    if quote != '\'' && quote != '"' {
        return Err(bad("descr is not a string"));
    }
    let close = descr_raw[1..]
        .find(quote)
        .ok_or_else(|| bad("unterminated descr"))?;
    let descr = descr_raw[1..1 + close].to_string();

    let fortran_raw = value_after("fortran_order")?;
    let fortran = if fortran_raw.starts_with("True") {
        true
    } else if fortran_raw.starts_with("False") {
        false
    } else {
        return Err(bad("fortran_order is not a bool"));
    };

    let shape_raw = value_after("shape")?;
    let shape_raw = shape_raw
        .strip_prefix('(')
        .ok_or_else(|| bad("shape is not a tuple"))?;
    let close = shape_raw.find(')').ok_or_else(|| bad("unterminated shape"))?;
    let shape = shape_raw[..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| bad("shape entry is not an integer"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((descr, fortran, shape))
}

fn header_bytes(dtype: Dtype, shape: &[usize]) -> Vec<u8> {
    let shape_str = match shape {
        [single] => format!("({single},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_str
    );
    // Version 1.0 prefix is 10 bytes; pad so the payload starts 64-aligned.
    let unpadded = 10 + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', padding));
    dict.push('\n');
    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

fn check_shape(shape: &[usize], len: usize) -> Result<(), NpyError> {
    if shape.is_empty() {
        return Err(NpyError::ScalarUnsupported);
    }
    let expected: usize = shape.iter().product();
    if expected != len {
        return Err(NpyError::LengthMismatch {
            shape: shape.to_vec(),
            expected,
            actual: len,
        });
    }
    Ok(())
}

/// Serializes `data` as a version 1.0 `'<f8'` C-order array.
pub fn encode_npy(shape: &[usize], data: &[f64]) -> Result<Vec<u8>, NpyError> {
    check_shape(shape, data.len())?;
    let mut out = header_bytes(Dtype::F8, shape);
    out.reserve(data.len() * 8);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn write_npy(path: impl AsRef<Path>, shape: &[usize], data: &[f64]) -> Result<(), NpyError> {
    let bytes = encode_npy(shape, data)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn write_npy_bool(path: impl AsRef<Path>, data: &[bool]) -> Result<(), NpyError> {
    let mut out = header_bytes(Dtype::Bool, &[data.len()]);
    out.extend(data.iter().map(|&b| b as u8));
    fs::write(path, out)?;
    Ok(())
}
