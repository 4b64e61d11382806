//! Binary map container: magic `TWRMAP1\0`, kind `u8`, rows and cols as
//! `u32` LE, then `f32` LE data in row-major order.

use std::io::{Read, Write};
use std::path::PathBuf;

use crate::{Error, Matrix, Result};

pub const MAP_MAGIC: &[u8; 8] = b"TWRMAP1\0";
pub const HEADER_LEN: usize = 8 + 1 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ContainerKind {
    R2tm = 0,
    D2tm = 1,
    Pcrd = 2,
    /// Concatenated R²TM and D²TM flatten, 1×8192.
    FullFeature = 3,
    /// Flattened point cloud, 1×180.
    ReducedFeature = 4,
}

impl ContainerKind {
    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Self::R2tm,
            1 => Self::D2tm,
            2 => Self::Pcrd,
            3 => Self::FullFeature,
            4 => Self::ReducedFeature,
            other => {
                return Err(Error::Format {
                    path: PathBuf::new(),
                    reason: format!("unknown map kind {other}"),
                })
            }
        })
    }
}

pub fn encoded_len(rows: usize, cols: usize) -> usize {
    HEADER_LEN + 4 * rows * cols
}

pub fn write_map<W: Write>(out: &mut W, kind: ContainerKind, map: &Matrix) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(encoded_len(map.rows(), map.cols()));
    buf.extend_from_slice(MAP_MAGIC);
    buf.push(kind as u8);
    buf.extend_from_slice(&(map.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(map.cols() as u32).to_le_bytes());
    for v in map.as_slice() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&buf)
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        path: PathBuf::new(),
        reason: reason.into(),
    }
}

pub fn read_map<R: Read>(input: &mut R) -> Result<(ContainerKind, Matrix)> {
    let mut header = [0u8; HEADER_LEN];
    input
        .read_exact(&mut header)
        .map_err(|e| format_err(format!("truncated map header: {e}")))?;
    if &header[..8] != MAP_MAGIC {
        return Err(format_err("bad map magic"));
    }
    let kind = ContainerKind::from_code(header[8])?;
    let rows = u32::from_le_bytes(header[9..13].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[13..17].try_into().unwrap()) as usize;
    let mut raw = vec![0u8; 4 * rows * cols];
    input
        .read_exact(&mut raw)
        .map_err(|e| format_err(format!("truncated map data: {e}")))?;
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok((kind, Matrix::from_vec(rows, cols, data)?))
}

/// Reads the container starting at `offset` of an in-memory file.
pub fn read_map_at(bytes: &[u8], offset: u64) -> Result<(ContainerKind, Matrix)> {
    let start = usize::try_from(offset).map_err(|_| format_err("offset overflow"))?;
    let slice = bytes
        .get(start..)
        .ok_or_else(|| format_err(format!("offset {offset} past end of file")))?;
    read_map(&mut &slice[..])
}
