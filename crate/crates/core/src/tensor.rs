//! The `RDT1` binary tensor file format and the [`UnitTensor`] type.
//!
//! File layout, all little-endian:
//!
//! ```text
//! bytes 0..4   magic "RDT1"
//! bytes 4..8   u32 header length H
//! bytes 8..8+H UTF-8 JSON header {"dtype":"f32","shape":[n,d],"order":"row-major"}
//! rest         n*d*4 bytes of IEEE-754 f32 payload, row-major
//! ```
//!
//! Payloads are stored as f32; in memory everything is widened to f64 (the
//! widening is exact) and all downstream arithmetic accumulates in f64.
//! Writing is deterministic: identical input produces byte-identical files
//! on every platform.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::unit::UnitId;
use crate::Mat64;

const MAGIC: &[u8; 4] = b"RDT1";

/// One residual unit's output-space contributions: `n_samples x d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitTensor {
    pub unit: UnitId,
    pub data: Mat64,
    pub sample_ids: Vec<String>,
}

impl UnitTensor {
    /// Builds a tensor, checking that all entries are finite and that there
    /// is one sample id per row.
    pub fn new(unit: UnitId, data: Mat64, sample_ids: Vec<String>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::ShapeMismatch("tensor needs n_samples >= 1".into()));
        }
        if sample_ids.len() != data.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} sample ids for {} rows",
                sample_ids.len(),
                data.nrows()
            )));
        }
        check_finite(&data)?;
        Ok(UnitTensor {
            unit,
            data,
            sample_ids,
        })
    }

    /// Like [`UnitTensor::new`] with positional sample ids (`000000`, ...).
    pub fn with_default_ids(unit: UnitId, data: Mat64) -> Result<Self> {
        let ids = default_ids(data.nrows());
        UnitTensor::new(unit, data, ids)
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

pub fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{i:06}")).collect()
}

fn check_finite(m: &Mat64) -> Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// Writes a matrix as an `RDT1` file. Rejects non-finite entries and values
/// whose f32 narrowing overflows.
pub fn write_matrix(path: &Path, m: &Mat64) -> Result<()> {
    let (n, d) = (m.nrows(), m.ncols());
    let mut payload = Vec::with_capacity(n * d * 4);
    for r in 0..n {
        for c in 0..d {
            let v = m[(r, c)];
            if !v.is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
            let narrow = v as f32;
            if !narrow.is_finite() {
                return Err(Error::F32Overflow { row: r, col: c });
            }
            payload.extend_from_slice(&narrow.to_le_bytes());
        }
    }
    let header = format!(r#"{{"dtype":"f32","shape":[{n},{d}],"order":"row-major"}}"#);

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let put = |w: &mut BufWriter<File>, bytes: &[u8]| {
        w.write_all(bytes).map_err(|e| Error::io(path, e))
    };
    put(&mut w, MAGIC)?;
    put(&mut w, &(header.len() as u32).to_le_bytes())?;
    put(&mut w, header.as_bytes())?;
    put(&mut w, &payload)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dtype: String,
    shape: Vec<usize>,
    order: String,
}

/// Reads an `RDT1` file back into an f64 matrix (exact widening of the f32
/// payload). Checks magic, header consistency, payload length and finiteness.
pub fn read_matrix(path: &Path) -> Result<Mat64> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::UnrecognizedFormat { path: path.into() });
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes).map_err(|e| Error::io(path, e))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)
        .map_err(|e| Error::io(path, e))?;
    let header: Header =
        serde_json::from_slice(&header_bytes).map_err(|e| Error::InvalidHeader {
            path: path.into(),
            reason: e.to_string(),
        })?;
    if header.dtype != "f32" {
        return Err(Error::InvalidHeader {
            path: path.into(),
            reason: format!("unsupported dtype '{}'", header.dtype),
        });
    }
    if header.order != "row-major" {
        return Err(Error::InvalidHeader {
            path: path.into(),
            reason: format!("unsupported order '{}'", header.order),
        });
    }
    if header.shape.len() != 2 {
        return Err(Error::InvalidHeader {
            path: path.into(),
            reason: format!("expected rank-2 shape, got {:?}", header.shape),
        });
    }
    let (n, d) = (header.shape[0], header.shape[1]);

    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    let expected = n * d * 4;
    if payload.len() != expected {
        return Err(Error::PayloadLengthMismatch {
            path: path.into(),
            expected,
            actual: payload.len(),
        });
    }

    let mut m = Mat64::zeros(n, d);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row: i / d,
                col: i % d,
            });
        }
        m[(i / d, i % d)] = v as f64;
    }
    Ok(m)
}

/// Writes a unit tensor's payload. Sample ids are positional metadata and
/// are not part of the file format; they are regenerated on read.
pub fn write_tensor(path: &Path, t: &UnitTensor) -> Result<()> {
    write_matrix(path, &t.data)
}

/// Reads a unit tensor written by [`write_tensor`], attaching the unit id
/// (which the format does not store) and positional sample ids.
pub fn read_tensor(path: &Path, unit: UnitId) -> Result<UnitTensor> {
    let data = read_matrix(path)?;
    UnitTensor::with_default_ids(unit, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn mat(rows: &[&[f64]]) -> Mat64 {
        Mat64::from_row_iterator(rows.len(), rows[0].len(), rows.iter().flat_map(|r| r.iter().copied()))
    }

    #[test]
    fn roundtrip_identity_1x1() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.rdt");
        let t = UnitTensor::with_default_ids(UnitId::embed(), mat(&[&[0.0]])).unwrap();
        write_tensor(&p, &t).unwrap();
        let back = read_tensor(&p, UnitId::embed()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn roundtrip_identity_2x3() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.rdt");
        let t = UnitTensor::with_default_ids(
            UnitId::head(0, 1),
            mat(&[&[1.0, -2.5, 3.25], &[0.125, 7.0, -0.0625]]),
        )
        .unwrap();
        write_tensor(&p, &t).unwrap();
        let back = read_tensor(&p, UnitId::head(0, 1)).unwrap();
        assert_eq!(back.data, t.data);
        assert_eq!(back.data.shape(), (2, 3));
    }

    #[test]
    fn write_rejects_nan() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.rdt");
        let m = mat(&[&[0.0, f64::NAN]]);
        match write_matrix(&p, &m) {
            Err(Error::NonFinite { row: 0, col: 1 }) => {}
            other => panic!("expected NonFinite, got {other:?}"),
        }
        // UnitTensor construction also rejects it.
        assert!(UnitTensor::with_default_ids(UnitId::embed(), m).is_err());
    }

    #[test]
    fn write_rejects_f32_overflow() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.rdt");
        assert!(matches!(
            write_matrix(&p, &mat(&[&[1e300]])),
            Err(Error::F32Overflow { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_length_mismatch() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.rdt");
        write_matrix(&p, &mat(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            read_matrix(&p),
            Err(Error::PayloadLengthMismatch { .. })
        ));
        // Trailing garbage is a mismatch too.
        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0, 0, 0, 0]);
        std::fs::write(&p, &longer).unwrap();
        assert!(matches!(
            read_matrix(&p),
            Err(Error::PayloadLengthMismatch { .. })
        ));
    }

    #[test]
    fn wrong_magic_is_unrecognized() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.rdt");
        write_matrix(&p, &mat(&[&[1.0]])).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            read_matrix(&p),
            Err(Error::UnrecognizedFormat { .. })
        ));
    }

    #[test]
    fn header_is_the_documented_byte_string() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.rdt");
        write_matrix(&p, &mat(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]])).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[0..4], b"RDT1");
        let hlen = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
        let header = std::str::from_utf8(&bytes[8..8 + hlen]).unwrap();
        assert_eq!(header, r#"{"dtype":"f32","shape":[2,3],"order":"row-major"}"#);
        assert_eq!(bytes.len(), 8 + hlen + 2 * 3 * 4);
    }

    #[test]
    fn payload_is_row_major_le_f32() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.rdt");
        write_matrix(&p, &mat(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let hlen = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
        let payload = &bytes[8 + hlen..];
        let vals: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0]);
    }
}
