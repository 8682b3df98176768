//! Little-endian raw array files.
//!
//! Every multi-byte value is little-endian. Matrix files (`centroids.bin`,
//! `embeddings.bin`) carry an 8-byte header `(rows: u32, cols: u32)` followed
//! by `rows * cols` row-major `f32` values.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub fn encode_f32(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

pub fn encode_u32(values: impl IntoIterator<Item = u32>) -> Vec<u8> {
    values.into_iter().flat_map(u32::to_le_bytes).collect()
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

fn check_len(path: &Path, bytes: &[u8], count: usize, width: usize) -> Result<()> {
    let expected = count * width;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "size mismatch: expected {expected} bytes for {count} values, found {}",
                bytes.len()
            ),
        ));
    }
    Ok(())
}

pub fn decode_f32(path: &Path, bytes: &[u8], count: usize) -> Result<Vec<f32>> {
    check_len(path, bytes, count, 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn decode_u32(path: &Path, bytes: &[u8], count: usize) -> Result<Vec<u32>> {
    check_len(path, bytes, count, 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn read_u32_file(path: &Path, count: usize) -> Result<Vec<u32>> {
    let bytes = read_bytes(path)?;
    decode_u32(path, &bytes, count)
}

/// Reads a u32 file whose length is not known in advance.
pub fn read_u32_file_any(path: &Path) -> Result<Vec<u32>> {
    let bytes = read_bytes(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(path, "length is not a multiple of 4"));
    }
    decode_u32(path, &bytes, bytes.len() / 4)
}

pub fn write_matrix(path: &Path, m: &Array2<f32>) -> Result<()> {
    let (rows, cols) = m.dim();
    let mut bytes = encode_u32([rows as u32, cols as u32]);
    bytes.extend(encode_f32(m.iter().copied()));
    write_bytes(path, &bytes)
}

pub fn read_matrix(path: &Path) -> Result<Array2<f32>> {
    let bytes = read_bytes(path)?;
    if bytes.len() < 8 {
        return Err(Error::format(path, "truncated header"));
    }
    let header = decode_u32(path, &bytes[..8], 2)?;
    let (rows, cols) = (header[0] as usize, header[1] as usize);
    let data = decode_f32(path, &bytes[8..], rows * cols)?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::format(path, e.to_string()))
}
