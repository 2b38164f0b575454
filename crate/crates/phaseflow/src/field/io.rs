//! Self-describing binary layout for grid fields, plus CSV export for
//! one-degree-of-freedom fields.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic    4 bytes  "PFLD"
//! version  u16      1
//! kind     u8       0 density, 1 action, 2 classical state,
//!                   3 wavefunction, 4 wigner
//! complex  u8       0 real payload, 1 complex payload
//! boundary u8       0 periodic, 1 truncated
//! reserved u8       0
//! n_axes   u16
//! per axis:         f64 min, f64 max, u64 count
//! payload:          row-major f64 values (re, im pairs when complex)
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;
use thiserror::Error;

use super::{Axis, Boundary, FieldError, FieldKind, FieldValues, GridField, PhaseGrid};

const MAGIC: &[u8; 4] = b"PFLD";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes, not a grid field file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("corrupt header field `{0}`")]
    BadHeader(&'static str),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn kind_code(kind: FieldKind) -> u8 {
    match kind {
        FieldKind::Density => 0,
        FieldKind::Action => 1,
        FieldKind::ClassicalState => 2,
        FieldKind::WaveFunction => 3,
        FieldKind::Wigner => 4,
    }
}

fn kind_from(code: u8) -> Result<FieldKind, FieldIoError> {
    Ok(match code {
        0 => FieldKind::Density,
        1 => FieldKind::Action,
        2 => FieldKind::ClassicalState,
        3 => FieldKind::WaveFunction,
        4 => FieldKind::Wigner,
        _ => return Err(FieldIoError::BadHeader("kind")),
    })
}

impl GridField {
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), FieldIoError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[kind_code(self.kind())])?;
        w.write_all(&[u8::from(self.is_complex())])?;
        w.write_all(&[match self.grid().boundary() {
            Boundary::Periodic => 0u8,
            Boundary::Truncated => 1u8,
        }])?;
        w.write_all(&[0u8])?;
        let axes = self.grid().axes();
        w.write_all(&(axes.len() as u16).to_le_bytes())?;
        for a in axes {
            w.write_all(&a.min.to_le_bytes())?;
            w.write_all(&a.max.to_le_bytes())?;
            w.write_all(&(a.count as u64).to_le_bytes())?;
        }
        match self.values() {
            FieldValues::Real(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            FieldValues::Complex(v) => {
                for c in v {
                    w.write_all(&c.re.to_le_bytes())?;
                    w.write_all(&c.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, FieldIoError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(FieldIoError::BadMagic);
        }
        let version = read_u16(&mut r)?;
        if version != VERSION {
            return Err(FieldIoError::BadVersion(version));
        }
        let mut head = [0u8; 4];
        r.read_exact(&mut head)?;
        let kind = kind_from(head[0])?;
        let complex = match head[1] {
            0 => false,
            1 => true,
            _ => return Err(FieldIoError::BadHeader("complex flag")),
        };
        let boundary = match head[2] {
            0 => Boundary::Periodic,
            1 => Boundary::Truncated,
            _ => return Err(FieldIoError::BadHeader("boundary")),
        };
        let n_axes = read_u16(&mut r)? as usize;
        let mut axes = Vec::with_capacity(n_axes);
        for _ in 0..n_axes {
            let min = read_f64(&mut r)?;
            let max = read_f64(&mut r)?;
            let count = read_u64(&mut r)? as usize;
            axes.push(Axis::new(min, max, count));
        }
        let grid = PhaseGrid::new(axes, boundary)?;
        let len = grid.len();
        let values = if complex {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                v.push(Complex64::new(re, im));
            }
            FieldValues::Complex(v)
        } else {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                v.push(read_f64(&mut r)?);
            }
            FieldValues::Real(v)
        };
        Ok(GridField::new(grid, kind, values)?)
    }

    /// CSV export for one degree of freedom: columns `q1,p1,value`
    /// (`re,im` for complex fields).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FieldIoError> {
        let grid = self.grid();
        if grid.dof() != 1 {
            return Err(FieldIoError::BadHeader("csv export needs one degree of freedom"));
        }
        match self.values() {
            FieldValues::Real(v) => {
                writeln!(w, "q1,p1,value")?;
                let mut z = [0.0; 2];
                for (idx, x) in v.iter().enumerate() {
                    grid.coords_into(idx, &mut z);
                    writeln!(w, "{},{},{}", z[0], z[1], x)?;
                }
            }
            FieldValues::Complex(v) => {
                writeln!(w, "q1,p1,re,im")?;
                let mut z = [0.0; 2];
                for (idx, c) in v.iter().enumerate() {
                    grid.coords_into(idx, &mut z);
                    writeln!(w, "{},{},{},{}", z[0], z[1], c.re, c.im)?;
                }
            }
        }
        Ok(())
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, FieldIoError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, FieldIoError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, FieldIoError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
