//! On-disk formats.
//!
//! Matrix file (binary, little-endian): magic `GSPRMAT1`, then `m`, `n` as
//! u64, then `m·n` f64 values in row-major order.
//! Vector file (binary, little-endian): magic `GSPRVEC1`, then length as u64,
//! then f64 values.
//! A text matrix variant is also readable: first line `m n`, then
//! whitespace-separated values in row-major order.
//!
//! History CSV: header `k,phi_bar,sol_norm,gcv,rel_error`; floats printed via
//! Rust's shortest round-trip formatting, so files are bit-identical across
//! runs with the same inputs. Unknown `rel_error`/`gcv` cells are blank.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spr::IterRecord;

const MAT_MAGIC: &[u8; 8] = b"GSPRMAT1";
const VEC_MAGIC: &[u8; 8] = b"GSPRVEC1";

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAT_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic == MAT_MAGIC {
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut data = vec![0.0f64; rows * cols];
        for v in &mut data {
            *v = read_f64(&mut r)?;
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    } else {
        read_matrix_text(path)
    }
}

/// Text fallback: `m n` on the first line, then row-major values.
fn read_matrix_text(path: &Path) -> Result<DMatrix<f64>> {
    let r = BufReader::new(File::open(path)?);
    let mut tokens = Vec::new();
    for line in r.lines() {
        for t in line?.split_whitespace() {
            tokens.push(
                t.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad matrix token '{t}'")))?,
            );
        }
    }
    if tokens.len() < 2 {
        return Err(Error::invalid("matrix file too short"));
    }
    let rows = tokens[0] as usize;
    let cols = tokens[1] as usize;
    if tokens.len() != 2 + rows * cols {
        return Err(Error::invalid(format!(
            "matrix file has {} values, expected {}",
            tokens.len() - 2,
            rows * cols
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &tokens[2..]))
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(VEC_MAGIC)?;
    w.write_all(&(v.len() as u64).to_le_bytes())?;
    for x in v.iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != VEC_MAGIC {
        return Err(Error::invalid("not a vector file (bad magic)"));
    }
    let len = read_u64(&mut r)? as usize;
    let mut data = vec![0.0f64; len];
    for v in &mut data {
        *v = read_f64(&mut r)?;
    }
    Ok(DVector::from_vec(data))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn write_history_csv(path: &Path, history: &[IterRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "k,phi_bar,sol_norm,gcv,rel_error")?;
    for r in history {
        let gcv = r.gcv.map(fmt_f64).unwrap_or_default();
        let rel = r.rel_error.map(fmt_f64).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", r.k, fmt_f64(r.phi_bar), fmt_f64(r.sol_norm), gcv, rel)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    // shortest round-trip representation; deterministic
    format!("{v}")
}
