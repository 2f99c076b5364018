//! Flat binary files for parameter vectors and datasets.
//!
//! Every file starts with a 16-byte header: a 4-byte magic, a little-endian
//! `u32` format version and a little-endian `u64` count of the `f64`
//! values in the payload. Payload values are little-endian IEEE-754
//! doubles. Dataset files put a 24-byte shape block (`domain`, `rows`,
//! `cols` as little-endian `u64`) between the header and the payload,
//! which holds the inputs followed by the labels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ParamVector;
use crate::synthetic::Dataset;
use crate::tensor::Matrix;
use crate::{Error, Result};

pub const PARAMS_MAGIC: [u8; 4] = *b"MDLP";
pub const DATASET_MAGIC: [u8; 4] = *b"MDLD";
pub const FORMAT_VERSION: u32 = 1;

fn write_header<W: Write>(w: &mut W, magic: [u8; 4], len: usize) -> Result<()> {
    w.write_all(&magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(len as u64).to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_header<R: Read>(r: &mut R, magic: [u8; 4]) -> Result<usize> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if head[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            &head[..4],
            magic
        )));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    usize::try_from(read_u64(r)?).map_err(|_| Error::Format("length overflows usize".into()))
}

fn write_values<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_values<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len.min(1 << 24));
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
        out.push(f64::from_le_bytes(buf));
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(out)
}

pub fn write_params<W: Write>(w: &mut W, params: &ParamVector) -> Result<()> {
    write_header(w, PARAMS_MAGIC, params.len())?;
    write_values(w, params.as_slice())
}

pub fn read_params<R: Read>(r: &mut R) -> Result<ParamVector> {
    let len = read_header(r, PARAMS_MAGIC)?;
    Ok(ParamVector::new(read_values(r, len)?))
}

pub fn save_params(path: impl AsRef<Path>, params: &ParamVector) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParamVector> {
    read_params(&mut BufReader::new(File::open(path)?))
}

pub fn write_dataset<W: Write>(w: &mut W, data: &Dataset) -> Result<()> {
    let (rows, cols) = (data.inputs.rows(), data.inputs.cols());
    write_header(w, DATASET_MAGIC, 2 * rows * cols)?;
    for v in [data.domain, rows, cols] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    write_values(w, data.inputs.as_slice())?;
    write_values(w, data.labels.as_slice())
}

pub fn read_dataset<R: Read>(r: &mut R) -> Result<Dataset> {
    let len = read_header(r, DATASET_MAGIC)?;
    let domain = read_u64(r)? as usize;
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(2)) != Some(len) {
        return Err(Error::Format(format!(
            "shape {rows}x{cols} disagrees with payload length {len}"
        )));
    }
    let mut values = read_values(r, len)?;
    let labels = values.split_off(rows * cols);
    Dataset::new(
        domain,
        Matrix::new(rows, cols, values)?,
        Matrix::new(rows, cols, labels)?,
    )
}

pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, data)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(&mut BufReader::new(File::open(path)?))
}
