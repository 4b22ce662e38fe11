//! Binary field snapshots and CSV conversion.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   4 bytes  "HQHD"
//! version u32      currently 1
//! axes    u32      1 to 3
//! dims    u32 * axes
//! extents f64 * axes
//! ncomp   u32      component count
//! payload f64 values, one row-major block per component; complex fields
//!         store interleaved (re, im) pairs per value
//! ```
//!
//! Whether the payload is real or complex is inferred from its byte length.
//! Decoding validates the header and sizes everything with checked arithmetic
//! before allocating, so arbitrary untrusted bytes fail cleanly.

use num_complex::Complex64;

use crate::{Error, Result};

use super::field::{ComplexField, ScalarField, VectorField};
use super::grid::Grid;

/// File magic for field snapshots.
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"HQHD";
/// Current snapshot format version.
pub const SNAPSHOT_VERSION: u32 = 1;

/// Payload of a snapshot: real or complex values, component-major.
#[derive(Clone, Debug)]
pub enum FieldData {
    /// Real field with `ncomp` row-major blocks.
    Real { ncomp: usize, values: Vec<f64> },
    /// Complex field with `ncomp` row-major blocks.
    Complex {
        ncomp: usize,
        values: Vec<Complex64>,
    },
}

impl FieldData {
    /// Component count.
    pub fn ncomp(&self) -> usize {
        match self {
            FieldData::Real { ncomp, .. } | FieldData::Complex { ncomp, .. } => *ncomp,
        }
    }
}

/// A grid together with one stored field.
#[derive(Clone, Debug)]
pub struct Snapshot {
    /// Grid the payload lives on.
    pub grid: Grid,
    /// Stored field values.
    pub data: FieldData,
}

impl Snapshot {
    /// Snapshot of a real scalar field.
    pub fn from_scalar(f: &ScalarField) -> Snapshot {
        Snapshot {
            grid: f.grid().clone(),
            data: FieldData::Real {
                ncomp: 1,
                values: f.values().to_vec(),
            },
        }
    }

    /// Snapshot of a real vector field.
    pub fn from_vector(v: &VectorField) -> Snapshot {
        Snapshot {
            grid: v.grid().clone(),
            data: FieldData::Real {
                ncomp: v.ncomp(),
                values: v.values().to_vec(),
            },
        }
    }

    /// Snapshot of a complex field.
    pub fn from_complex(c: &ComplexField) -> Snapshot {
        Snapshot {
            grid: c.grid().clone(),
            data: FieldData::Complex {
                ncomp: c.ncomp(),
                values: c.values().to_vec(),
            },
        }
    }

    /// Reinterprets the payload as a scalar field.
    pub fn to_scalar(&self) -> Result<ScalarField> {
        match &self.data {
            FieldData::Real { ncomp: 1, values } => {
                Ok(ScalarField::from_values(&self.grid, values.clone()))
            }
            _ => Err(Error::Format {
                offset: 0,
                message: "snapshot does not hold a single real component".into(),
            }),
        }
    }

    /// Reinterprets the payload as a vector field.
    pub fn to_vector(&self) -> Result<VectorField> {
        match &self.data {
            FieldData::Real { ncomp, values }
                if *ncomp == self.grid.axes() || *ncomp == 3 =>
            {
                let n = self.grid.len();
                let comps = (0..*ncomp)
                    .map(|c| {
                        ScalarField::from_values(&self.grid, values[c * n..(c + 1) * n].to_vec())
                    })
                    .collect();
                Ok(VectorField::from_components(comps))
            }
            _ => Err(Error::Format {
                offset: 0,
                message: "snapshot does not hold a real vector field".into(),
            }),
        }
    }

    /// Reinterprets the payload as a complex (wave) field.
    pub fn to_complex(&self) -> Result<ComplexField> {
        match &self.data {
            FieldData::Complex { ncomp, values } if *ncomp <= 2 => {
                let mut out = ComplexField::zeros(&self.grid, *ncomp);
                out.values_mut().copy_from_slice(values);
                Ok(out)
            }
            _ => Err(Error::Format {
                offset: 0,
                message: "snapshot does not hold a complex field".into(),
            }),
        }
    }
}

/// Serializes a snapshot to bytes.
pub fn encode_snapshot(snap: &Snapshot) -> Vec<u8> {
    let grid = &snap.grid;
    let mut out = Vec::new();
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.axes() as u32).to_le_bytes());
    for &d in grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &e in grid.extents() {
        out.extend_from_slice(&e.to_le_bytes());
    }
    out.extend_from_slice(&(snap.data.ncomp() as u32).to_le_bytes());
    match &snap.data {
        FieldData::Real { values, .. } => {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        FieldData::Complex { values, .. } => {
            for v in values {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
        }
    }
    out
}

/// Writes a snapshot to any writer.
pub fn write_snapshot(w: &mut impl std::io::Write, snap: &Snapshot) -> Result<()> {
    w.write_all(&encode_snapshot(snap))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!(
                "truncated input: needed {n} bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Decodes a snapshot from untrusted bytes.
pub fn read_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, expected \"HQHD\"".into(),
        });
    }
    let version = cur.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let axes_off = cur.pos as u64;
    let axes = cur.u32()? as usize;
    if axes == 0 || axes > 3 {
        return Err(Error::Format {
            offset: axes_off,
            message: format!("axis count {axes} outside 1..=3"),
        });
    }
    let mut dims = Vec::with_capacity(axes);
    for _ in 0..axes {
        dims.push(cur.u32()? as usize);
    }
    let mut extents = Vec::with_capacity(axes);
    for _ in 0..axes {
        extents.push(cur.f64()?);
    }
    let header_end = cur.pos as u64;
    let grid = Grid::new(&dims, &extents).map_err(|e| Error::Format {
        offset: axes_off,
        message: e.to_string(),
    })?;
    let ncomp_off = cur.pos as u64;
    let ncomp = cur.u32()? as usize;
    if ncomp == 0 || ncomp > 4 {
        return Err(Error::Format {
            offset: ncomp_off,
            message: format!("component count {ncomp} outside 1..=4"),
        });
    }
    let scalars = grid
        .len()
        .checked_mul(ncomp)
        .ok_or_else(|| Error::Format {
            offset: ncomp_off,
            message: "payload size overflows".into(),
        })?;
    let real_bytes = scalars.checked_mul(8).ok_or_else(|| Error::Format {
        offset: ncomp_off,
        message: "payload size overflows".into(),
    })?;
    let remaining = bytes.len() - cur.pos;
    let data = if remaining == real_bytes {
        let mut values = Vec::with_capacity(scalars);
        for _ in 0..scalars {
            values.push(cur.f64()?);
        }
        FieldData::Real { ncomp, values }
    } else if Some(remaining) == real_bytes.checked_mul(2) {
        if ncomp > 2 {
            return Err(Error::Format {
                offset: ncomp_off,
                message: format!("complex fields carry 1 or 2 components, got {ncomp}"),
            });
        }
        let mut values = Vec::with_capacity(scalars);
        for _ in 0..scalars {
            let re = cur.f64()?;
            let im = cur.f64()?;
            values.push(Complex64::new(re, im));
        }
        FieldData::Complex { ncomp, values }
    } else {
        return Err(Error::Format {
            offset: header_end,
            message: format!(
                "payload is {remaining} bytes; expected {real_bytes} (real) or {} (complex)",
                real_bytes.saturating_mul(2)
            ),
        });
    };
    Ok(Snapshot { grid, data })
}

/// Formats a float with the shortest representation that round-trips.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Converts a snapshot to CSV: one row per node holding the node coordinates
/// followed by the component values (re/im pairs for complex payloads).
pub fn snapshot_to_csv(snap: &Snapshot) -> String {
    let grid = &snap.grid;
    let axes = grid.axes();
    let mut head: Vec<String> = (0..axes).map(|a| format!("x{a}")).collect();
    match &snap.data {
        FieldData::Real { ncomp, .. } => {
            for c in 0..*ncomp {
                head.push(format!("f{c}"));
            }
        }
        FieldData::Complex { ncomp, .. } => {
            for c in 0..*ncomp {
                head.push(format!("re{c}"));
                head.push(format!("im{c}"));
            }
        }
    }
    let mut out = head.join(",");
    out.push('\n');
    let n = grid.len();
    for flat in 0..n {
        let pos = grid.position(flat);
        let mut row: Vec<String> = (0..axes).map(|a| fmt_f64(pos[a])).collect();
        match &snap.data {
            FieldData::Real { ncomp, values } => {
                for c in 0..*ncomp {
                    row.push(fmt_f64(values[c * n + flat]));
                }
            }
            FieldData::Complex { ncomp, values } => {
                for c in 0..*ncomp {
                    let v = values[c * n + flat];
                    row.push(fmt_f64(v.re));
                    row.push(fmt_f64(v.im));
                }
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_real() {
        let g = Grid::new(&[4, 6], &[1.0, 2.5]).unwrap();
        let v = VectorField::from_fn(&g, 2, |p| [p[0] + 1.0, p[1] * 2.0, 0.0]);
        let snap = Snapshot::from_vector(&v);
        let bytes = encode_snapshot(&snap);
        let back = read_snapshot(&bytes).unwrap();
        assert!(back.grid.same_layout(&g));
        let v2 = back.to_vector().unwrap();
        assert_eq!(v.values(), v2.values());
    }

    #[test]
    fn roundtrip_complex() {
        let g = Grid::new(&[8], &[3.0]).unwrap();
        let c = ComplexField::from_fn(&g, 2, |p, s| {
            Complex64::new(p[0] * (s as f64 + 1.0), -p[0])
        });
        let bytes = encode_snapshot(&Snapshot::from_complex(&c));
        let back = read_snapshot(&bytes).unwrap().to_complex().unwrap();
        assert_eq!(c.values(), back.values());
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_snapshot(b"").is_err());
        assert!(read_snapshot(b"NOPE").is_err());
        let g = Grid::new(&[4], &[1.0]).unwrap();
        let f = ScalarField::zeros(&g);
        let mut bytes = encode_snapshot(&Snapshot::from_scalar(&f));
        // Truncated payload.
        bytes.truncate(bytes.len() - 3);
        assert!(read_snapshot(&bytes).is_err());
        // Corrupt version.
        let mut b2 = encode_snapshot(&Snapshot::from_scalar(&f));
        b2[4] = 99;
        assert!(read_snapshot(&b2).is_err());
        // Odd axis dimension.
        let mut b3 = encode_snapshot(&Snapshot::from_scalar(&f));
        b3[12] = 5;
        assert!(read_snapshot(&b3).is_err());
    }

    #[test]
    fn huge_dims_fail_before_allocating() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(SNAPSHOT_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for _ in 0..3 {
            bytes.extend_from_slice(&0xfffffff0u32.to_le_bytes());
        }
        for _ in 0..3 {
            bytes.extend_from_slice(&1.0f64.to_le_bytes());
        }
        bytes.extend_from_slice(&4u32.to_le_bytes());
        assert!(read_snapshot(&bytes).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = Grid::new(&[4], &[2.0]).unwrap();
        let f = ScalarField::from_fn(&g, |p| p[0]);
        let csv = snapshot_to_csv(&Snapshot::from_scalar(&f));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "x0,f0");
        assert_eq!(lines[1], "-1,-1");
    }
}
