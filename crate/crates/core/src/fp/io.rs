//! Flat binary field snapshots: n as u64, L and t as f64 (all little-endian),
//! then n² f64 values in row-major order (p₁ fastest).

use super::{DensityField, VelocityGrid};
use crate::error::{Error, Result};
use std::io::{Read, Write};

pub fn write_snapshot(w: &mut impl Write, field: &DensityField, t: f64) -> Result<()> {
    w.write_all(&(field.grid.n as u64).to_le_bytes())?;
    w.write_all(&field.grid.half_extent.to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot(r: &mut impl Read) -> Result<(DensityField, f64)> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let n = u64::from_le_bytes(b) as usize;
    r.read_exact(&mut b)?;
    let l = f64::from_le_bytes(b);
    r.read_exact(&mut b)?;
    let t = f64::from_le_bytes(b);
    let grid = VelocityGrid::new(n, l)?;
    let mut values = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        r.read_exact(&mut b).map_err(|e| Error::Io(format!("truncated snapshot: {e}")))?;
        values.push(f64::from_le_bytes(b));
    }
    Ok((DensityField { grid, values }, t))
}
