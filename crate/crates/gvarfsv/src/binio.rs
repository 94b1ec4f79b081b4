//! Little-endian binary encoding for draw files and checkpoints.
//!
//! The on-disk draw format is deliberately primitive — length-prefixed flat
//! `f64` arrays — so that external tools can read it with nothing more than
//! the manifest's layout description. Matrices are stored column-major.

use nalgebra::{DMatrix, DVector};
use std::io::{Read, Write};

/// Errors raised while encoding or decoding binary payloads.
#[derive(Debug, thiserror::Error)]
pub enum BinIoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("length mismatch: expected {expected} values, header says {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("payload digest mismatch (file corrupted or truncated)")]
    DigestMismatch,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
}

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<(), BinIoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<(), BinIoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<(), BinIoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R) -> Result<u32, BinIoError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64, BinIoError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_f64<R: Read>(r: &mut R) -> Result<f64, BinIoError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Writes `len` then the raw values.
pub fn write_f64_slice<W: Write>(w: &mut W, data: &[f64]) -> Result<(), BinIoError> {
    write_u64(w, data.len() as u64)?;
    for &v in data {
        write_f64(w, v)?;
    }
    Ok(())
}

/// Reads a length-prefixed array, validating the expected length when given.
pub fn read_f64_vec<R: Read>(r: &mut R, expected: Option<usize>) -> Result<Vec<f64>, BinIoError> {
    let len = read_u64(r)? as usize;
    if let Some(expected) = expected {
        if len != expected {
            return Err(BinIoError::LengthMismatch { expected, found: len });
        }
    }
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

/// Writes `(rows, cols)` then the column-major data.
pub fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<(), BinIoError> {
    write_u64(w, m.nrows() as u64)?;
    write_u64(w, m.ncols() as u64)?;
    for &v in m.as_slice() {
        write_f64(w, v)?;
    }
    Ok(())
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<DMatrix<f64>, BinIoError> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f64(r)?);
    }
    Ok(DMatrix::from_column_slice(rows, cols, &data))
}

pub fn write_vector<W: Write>(w: &mut W, v: &DVector<f64>) -> Result<(), BinIoError> {
    write_f64_slice(w, v.as_slice())
}

pub fn read_vector<R: Read>(r: &mut R, expected: Option<usize>) -> Result<DVector<f64>, BinIoError> {
    Ok(DVector::from_vec(read_f64_vec(r, expected)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_fn(3, 4, |i, j| (i * 10 + j) as f64 / 7.0);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let back = read_matrix(&mut buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn vector_round_trip_checks_length() {
        let v = DVector::from_vec(vec![1.0, -2.5, 3.25]);
        let mut buf = Vec::new();
        write_vector(&mut buf, &v).unwrap();
        assert!(read_vector(&mut buf.as_slice(), Some(4)).is_err());
        let back = read_vector(&mut buf.as_slice(), Some(3)).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn truncated_stream_is_an_error() {
        let mut buf = Vec::new();
        write_f64_slice(&mut buf, &[1.0, 2.0, 3.0]).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_f64_vec(&mut buf.as_slice(), None).is_err());
    }
}
