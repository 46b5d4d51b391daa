//! `.spxf` implicit-feature sidecar files.
//!
//! Little-endian layout: magic `SPXF`, u32 version (1), u32 patch count N,
//! u32 feature dim M, then N records of `(u32 patch_id, M x f32)`, then a
//! u32 CRC32 of every preceding byte.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const SIDECAR_MAGIC: &[u8; 4] = b"SPXF";
pub const SIDECAR_VERSION: u32 = 1;

/// Per-patch implicit feature rows, indexed by patch id.
#[derive(Clone, Debug, PartialEq)]
pub struct Sidecar {
    dim: usize,
    rows: Vec<Vec<f32>>,
}

impl Sidecar {
    /// Rows must cover ids `0..rows.len()` exactly once and share one length.
    pub fn from_rows(rows: Vec<(u32, Vec<f32>)>) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, |r| r.1.len());
        let mut slots: Vec<Option<Vec<f32>>> = vec![None; n];
        for (id, row) in rows {
            if row.len() != dim {
                return Err(Error::Sidecar(format!(
                    "patch {id} has {} values, expected {dim}",
                    row.len()
                )));
            }
            let slot = slots
                .get_mut(id as usize)
                .ok_or_else(|| Error::Sidecar(format!("patch id {id} out of range 0..{n}")))?;
            if slot.replace(row).is_some() {
                return Err(Error::Sidecar(format!("patch id {id} appears twice")));
            }
        }
        let rows = slots.into_iter().map(|s| s.unwrap()).collect();
        Ok(Sidecar { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn patch_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, patch: usize) -> Option<&[f32]> {
        self.rows.get(patch).map(Vec::as_slice)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.rows.len() * (4 + 4 * self.dim) + 4);
        out.extend_from_slice(SIDECAR_MAGIC);
        out.extend_from_slice(&SIDECAR_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (id, row) in self.rows.iter().enumerate() {
            out.extend_from_slice(&(id as u32).to_le_bytes());
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 {
            return Err(Error::Sidecar(format!("{} bytes is shorter than a header", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if &body[..4] != SIDECAR_MAGIC {
            return Err(Error::Sidecar("bad magic".into()));
        }
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let word = |i: usize| u32::from_le_bytes(body[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != SIDECAR_VERSION {
            return Err(Error::Sidecar(format!("unsupported version {version}")));
        }
        let (n, m) = (word(8) as usize, word(12) as usize);
        let record = 4 + 4 * m;
        if body.len() != 16 + n * record {
            return Err(Error::Sidecar(format!(
                "header declares {n} records of {m} features but payload is {} bytes",
                body.len() - 16
            )));
        }
        let rows = body[16..]
            .chunks_exact(record)
            .map(|rec| {
                let id = u32::from_le_bytes(rec[..4].try_into().unwrap());
                let values = rec[4..]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                (id, values)
            })
            .collect();
        let sidecar = Self::from_rows(rows)?;
        Ok(Sidecar { dim: m, ..sidecar })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Sidecar(msg) => Error::Sidecar(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}
