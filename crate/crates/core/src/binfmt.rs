//! Binary matrix files: an 8-byte magic, a little-endian `u64` header length,
//! a UTF-8 JSON header and then the row-major little-endian payload.
//!
//! ```text
//! b"KINVLAP1" | u64 len | {"dtype": "complex128", "rows": R, "cols": C, "meta": {...}} | data
//! ```
//!
//! `dtype` is one of `float64`, `complex64` (two `f32` per entry) or
//! `complex128` (two `f64` per entry, real part first).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KINVLAP1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Float64,
    Complex64,
    Complex128,
}

impl Dtype {
    fn entry_bytes(self) -> usize {
        match self {
            Dtype::Float64 => 8,
            Dtype::Complex64 => 8,
            Dtype::Complex128 => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dtype: Dtype,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn write_header(w: &mut impl Write, header: &Header) -> std::io::Result<()> {
    let json = serde_json::to_vec(header).expect("header serializes");
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)
}

pub fn write_complex(path: &Path, m: &DMatrix<Complex64>, dtype: Dtype, meta: serde_json::Value) -> Result<()> {
    assert!(dtype != Dtype::Float64, "complex payload needs a complex dtype");
    let header = Header {
        dtype,
        rows: m.nrows(),
        cols: m.ncols(),
        meta,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write_header(&mut w, &header).map_err(io)?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            match dtype {
                Dtype::Complex64 => {
                    w.write_all(&(z.re as f32).to_le_bytes()).map_err(io)?;
                    w.write_all(&(z.im as f32).to_le_bytes()).map_err(io)?;
                }
                _ => {
                    w.write_all(&z.re.to_le_bytes()).map_err(io)?;
                    w.write_all(&z.im.to_le_bytes()).map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}

pub fn write_real(path: &Path, m: &DMatrix<f64>, meta: serde_json::Value) -> Result<()> {
    let header = Header {
        dtype: Dtype::Float64,
        rows: m.nrows(),
        cols: m.ncols(),
        meta,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write_header(&mut w, &header).map_err(io)?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            w.write_all(&m[(r, c)].to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn corrupt(path: &Path, what: impl std::fmt::Display) -> Error {
    Error::io(
        path,
        std::io::Error::new(std::io::ErrorKind::InvalidData, format!("corrupted matrix file: {what}")),
    )
}

fn read_all(path: &Path) -> Result<(Header, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| corrupt(path, "truncated before magic"))?;
    if &magic != MAGIC {
        return Err(corrupt(path, "bad magic"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| corrupt(path, "truncated header length"))?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(corrupt(path, "implausible header length"));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| corrupt(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| corrupt(path, e))?;
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(|e| Error::io(path, e))?;
    let expect = header.rows * header.cols * header.dtype.entry_bytes();
    if data.len() != expect {
        return Err(corrupt(
            path,
            format!("payload has {} bytes, header implies {expect}", data.len()),
        ));
    }
    Ok((header, data))
}

pub fn read_complex(path: &Path) -> Result<(Header, DMatrix<Complex64>)> {
    let (header, data) = read_all(path)?;
    let (rows, cols) = (header.rows, header.cols);
    let f64_at = |k: usize| f64::from_le_bytes(data[k..k + 8].try_into().unwrap());
    let f32_at = |k: usize| f32::from_le_bytes(data[k..k + 4].try_into().unwrap()) as f64;
    let m = match header.dtype {
        Dtype::Complex128 => DMatrix::from_fn(rows, cols, |r, c| {
            let k = 16 * (r * cols + c);
            Complex64::new(f64_at(k), f64_at(k + 8))
        }),
        Dtype::Complex64 => DMatrix::from_fn(rows, cols, |r, c| {
            let k = 8 * (r * cols + c);
            Complex64::new(f32_at(k), f32_at(k + 4))
        }),
        Dtype::Float64 => DMatrix::from_fn(rows, cols, |r, c| Complex64::new(f64_at(8 * (r * cols + c)), 0.0)),
    };
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(corrupt(path, "non-finite entries"));
    }
    Ok((header, m))
}

pub fn read_real(path: &Path) -> Result<(Header, DMatrix<f64>)> {
    let (header, data) = read_all(path)?;
    if header.dtype != Dtype::Float64 {
        return Err(corrupt(path, "expected float64 payload"));
    }
    let cols = header.cols;
    let m = DMatrix::from_fn(header.rows, cols, |r, c| {
        let k = 8 * (r * cols + c);
        f64::from_le_bytes(data[k..k + 8].try_into().unwrap())
    });
    Ok((header, m))
}
