//! The `STRZ` field file: magic, `u32` version, `u32` dimension, `u32` points
//! per axis, `f64` half width, `u8` space tag, then `(re, im)` pairs in row
//! major order. Everything little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::field::{ComplexField2D, Space};
use crate::grid::Grid2D;

pub const MAGIC: [u8; 4] = *b"STRZ";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 1;

pub fn encode(f: &ComplexField2D) -> Vec<u8> {
    let grid = f.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * grid.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&grid.half_width().to_le_bytes());
    out.push(match f.space() {
        Space::Physical => 0,
        Space::Frequency => 1,
    });
    for z in f.samples() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

fn take<const K: usize>(bytes: &[u8], at: &mut usize) -> Result<[u8; K]> {
    let end = *at + K;
    let chunk = bytes
        .get(*at..end)
        .ok_or_else(|| LabError::Format(format!("truncated at byte {}", *at)))?;
    *at = end;
    Ok(chunk.try_into().expect("slice has length K"))
}

pub fn decode(bytes: &[u8]) -> Result<ComplexField2D> {
    let mut at = 0;
    if take::<4>(bytes, &mut at)? != MAGIC {
        return Err(LabError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at)?);
    if version != VERSION {
        return Err(LabError::Format(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(take(bytes, &mut at)?);
    if dim != 2 {
        return Err(LabError::Format(format!("unsupported dimension {dim}")));
    }
    let n = u32::from_le_bytes(take(bytes, &mut at)?) as usize;
    let half_width = f64::from_le_bytes(take(bytes, &mut at)?);
    let space = match take::<1>(bytes, &mut at)?[0] {
        0 => Space::Physical,
        1 => Space::Frequency,
        t => return Err(LabError::Format(format!("unknown space tag {t}"))),
    };
    let grid = Grid2D::new(n, half_width).map_err(|e| LabError::Format(e.to_string()))?;
    let expected = HEADER_LEN + 16 * grid.len();
    if bytes.len() != expected {
        return Err(LabError::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let samples = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    ComplexField2D::new(grid, space, samples)
}

pub fn write_field(path: &Path, f: &ComplexField2D) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode(f))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ComplexField2D> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
