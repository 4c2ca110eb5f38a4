//! PGRID v1 grid files.
//!
//! Layout: 16-byte magic ("PGRIDv1\n" padded with NUL bytes), u32 N, u32
//! flags (bit 0: mask present), N*N little-endian f64 values in row-major
//! order, then N*N mask bytes (0 or 1) when bit 0 is set.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{DwfsError, Result};
use crate::grid::PhaseGrid;

pub const MAGIC: [u8; 16] = *b"PGRIDv1\n\0\0\0\0\0\0\0\0";
const FLAG_MASK: u32 = 1;

pub fn encode(g: &PhaseGrid) -> Vec<u8> {
    let n = g.n();
    let has_mask = g.mask.iter().any(|&m| !m);
    let mut out = Vec::with_capacity(24 + n * n * 9);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(if has_mask { FLAG_MASK } else { 0 }).to_le_bytes());
    for v in g.values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if has_mask {
        out.extend(g.mask.iter().map(|&m| m as u8));
    }
    out
}

fn fmt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(DwfsError::Format(msg.into()))
}

pub fn decode(bytes: &[u8]) -> Result<PhaseGrid> {
    if bytes.len() < 24 {
        return fmt_err("file too short for a PGRID header");
    }
    if bytes[..16] != MAGIC {
        return fmt_err("bad magic, not a PGRIDv1 file");
    }
    let n = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let flags = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    if flags & !FLAG_MASK != 0 {
        return fmt_err(format!("unknown flag bits {flags:#x}"));
    }
    let has_mask = flags & FLAG_MASK != 0;
    let want = n.checked_mul(n).and_then(|nn| nn.checked_mul(if has_mask { 9 } else { 8 })).and_then(|b| b.checked_add(24));
    if want != Some(bytes.len()) {
        return fmt_err(format!("size mismatch: header says N = {n}, file has {} bytes", bytes.len()));
    }
    let body = &bytes[24..];
    let values: Vec<f64> = body[..8 * n * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mask: Vec<bool> = if has_mask {
        let raw = &body[8 * n * n..];
        if raw.iter().any(|&b| b > 1) {
            return fmt_err("mask bytes must be 0 or 1");
        }
        raw.iter().map(|&b| b == 1).collect()
    } else {
        vec![true; n * n]
    };
    let values = Array2::from_shape_vec((n, n), values).map_err(|e| DwfsError::Format(e.to_string()))?;
    let mask = Array2::from_shape_vec((n, n), mask).map_err(|e| DwfsError::Format(e.to_string()))?;
    PhaseGrid::new(values, mask)
}

pub fn read_grid(path: &Path) -> Result<PhaseGrid> {
    decode(&fs::read(path)?)
}

/// Write through a temporary sibling file and rename, so readers never see
/// a partial grid.
pub fn write_grid(path: &Path, g: &PhaseGrid) -> Result<()> {
    write_atomic(path, &encode(g))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
