//! Flat binary field checkpoints and CSV energy traces.
//!
//! Layout: `b"QOBS"`, version `u32`, `n` `u32`, then `n³ × 5` little-endian
//! `f64` interior coefficients in `(i, j, k, c)` row-major order.

use std::io::{self, Read, Write};

use super::{Grid, QField, TraceRow};
use crate::qtensor::QTensor;

pub const MAGIC: &[u8; 4] = b"QOBS";
pub const VERSION: u32 = 1;

pub fn write_field<W: Write>(mut w: W, field: &QField) -> io::Result<()> {
    let n = u32::try_from(field.grid.n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "grid too large"))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    for q in field.interior() {
        for c in q.coeffs {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(field: &QField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 40 * field.grid.interior_count());
    write_field(&mut out, field).expect("writing to a Vec cannot fail");
    out
}

/// Reads a checkpoint into `template`, whose boundary layer is kept.
pub fn read_into<R: Read>(mut r: R, template: &QField) -> io::Result<QField> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut header = [0u8; 12];
    r.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(bad("not a QOBS checkpoint"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if n != template.grid.n {
        return Err(bad(&format!("checkpoint grid n = {n}, expected {}", template.grid.n)));
    }
    let grid = Grid { n };
    let mut interior = Vec::with_capacity(grid.interior_count());
    let mut buf = [0u8; 8];
    for _ in 0..grid.interior_count() {
        let mut c = [0.0; 5];
        for v in &mut c {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        interior.push(QTensor::new(c));
    }
    let mut field = template.clone();
    field.set_interior(&interior);
    Ok(field)
}

pub fn write_trace<W: Write>(mut w: W, trace: &[TraceRow]) -> io::Result<()> {
    writeln!(w, "iter,total,elastic,bulk,grad_norm")?;
    for r in trace {
        writeln!(w, "{},{:e},{:e},{:e},{:e}", r.iter, r.total, r.elastic, r.bulk, r.grad_norm)?;
    }
    Ok(())
}
