//! Bimodal feature matrices and the CFM binary container.
//!
//! A CFM file is little-endian throughout:
//!
//! | bytes            | field                                   |
//! |------------------|-----------------------------------------|
//! | 8                | magic `CASTFEAT`                        |
//! | 4                | `u32` version, currently 1              |
//! | 8                | `u64` sample count `N`                  |
//! | 4                | `u32` dimension `D`                     |
//! | 4                | `u32` id table length in bytes          |
//! | id table length  | UTF-8 ids separated by `\n`             |
//! | `4 * N * D`      | `f32` payload, row-major                |
//!
//! Values are widened to `f64` on load so that every downstream loss and
//! gradient is evaluated in double precision. Writing narrows back to `f32`,
//! which makes `read(write(m))` bit-exact for any matrix that was itself read
//! from disk.

use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use thiserror::Error;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CASTFEAT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 4 + 4;

/// Decoding and validation failures of a feature file, one variant per cause.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic {0:?}, expected \"CASTFEAT\"")]
    BadMagic([u8; 8]),
    #[error("unsupported CFM version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("id table: {0}")]
    IdTable(String),
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("data has {found} entries, expected {expected}")]
    Shape { expected: usize, found: usize },
}

/// `N x D` features for one modality plus the sample ids that key each row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, data: Array2<f64>) -> Result<Self, FormatError> {
        if ids.len() != data.nrows() {
            return Err(FormatError::IdTable(format!(
                "{} ids for {} rows",
                ids.len(),
                data.nrows()
            )));
        }
        for ((row, col), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(FormatError::NonFinite { row, col });
            }
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if id.contains('\n') {
                return Err(FormatError::IdTable(format!(
                    "id {id:?} contains a newline"
                )));
            }
            if !seen.insert(id.as_str()) {
                return Err(FormatError::DuplicateId(id.clone()));
            }
        }
        Ok(FeatureMatrix { ids, data })
    }

    /// Matrix with ids `"0"`, `"1"`, ... .
    pub fn with_index_ids(data: Array2<f64>) -> Result<Self, FormatError> {
        let ids = (0..data.nrows()).map(|i| i.to_string()).collect();
        Self::new(ids, data)
    }

    pub fn from_rows(ids: Vec<String>, dim: usize, rows: Vec<f64>) -> Result<Self, FormatError> {
        let n = ids.len();
        if rows.len() != n * dim {
            return Err(FormatError::Shape {
                expected: n * dim,
                found: rows.len(),
            });
        }
        let data = Array2::from_shape_vec((n, dim), rows).expect("shape checked");
        Self::new(ids, data)
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    /// Same ids, new values. Used by ablations that blank out a modality.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self, FormatError> {
        Self::new(self.ids.clone(), data)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < 8 {
            return Err(FormatError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let magic: [u8; 8] = bytes[..8].try_into().unwrap();
        if &magic != MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        if bytes.len() < HEADER_LEN {
            return Err(FormatError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
        let id_len = u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize;

        let payload_len = n
            .checked_mul(dim)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| FormatError::IdTable("declared shape overflows".into()))?;
        let expected = HEADER_LEN + id_len + payload_len;
        if bytes.len() < expected {
            return Err(FormatError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(FormatError::TrailingBytes(bytes.len() - expected));
        }

        let table = &bytes[HEADER_LEN..HEADER_LEN + id_len];
        let ids = decode_ids(table, n)?;

        let payload = &bytes[HEADER_LEN + id_len..];
        let mut rows = Vec::with_capacity(n * dim);
        for (idx, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError::NonFinite {
                    row: idx / dim,
                    col: idx % dim,
                });
            }
            rows.push(v as f64);
        }
        FeatureMatrix::from_rows(ids, dim, rows)
    }

    pub fn encode(&self) -> Result<Vec<u8>, FormatError> {
        let table = self.ids.join("\n");
        let n = self.n_samples();
        let dim = self.dim();
        let mut out = Vec::with_capacity(HEADER_LEN + table.len() + 4 * n * dim);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        out.extend_from_slice(&(table.len() as u32).to_le_bytes());
        out.extend_from_slice(table.as_bytes());
        for ((row, col), &v) in self.data.indexed_iter() {
            let narrow = v as f32;
            if !narrow.is_finite() {
                return Err(FormatError::NonFinite { row, col });
            }
            out.extend_from_slice(&narrow.to_le_bytes());
        }
        Ok(out)
    }

    pub fn read_from(mut reader: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        reader
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io("<reader>", e))?;
        Ok(Self::decode(&bytes)?)
    }

    pub fn write_to(&self, mut writer: impl Write) -> Result<()> {
        let bytes = self.encode()?;
        writer
            .write_all(&bytes)
            .map_err(|e| Error::io("<writer>", e))
    }
}

fn decode_ids(table: &[u8], n: usize) -> Result<Vec<String>, FormatError> {
    let text = std::str::from_utf8(table)
        .map_err(|e| FormatError::IdTable(format!("invalid UTF-8: {e}")))?;
    if text.is_empty() {
        // An empty table stands for positional ids.
        return Ok((0..n).map(|i| i.to_string()).collect());
    }
    let text = text.strip_suffix('\n').unwrap_or(text);
    let ids: Vec<String> = text.split('\n').map(str::to_owned).collect();
    if ids.len() != n {
        return Err(FormatError::IdTable(format!(
            "{} ids for {} samples",
            ids.len(),
            n
        )));
    }
    Ok(ids)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FeatureMatrix::decode(&bytes)?)
}

pub fn write_feature_file(path: impl AsRef<Path>, m: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = m.encode()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Checks that the two modalities describe the same samples in the same order
/// and returns the shared sample count. Dimensions may differ.
pub fn pair_check(img: &FeatureMatrix, txt: &FeatureMatrix) -> Result<usize> {
    if img.n_samples() != txt.n_samples() {
        return Err(Error::SampleCountMismatch {
            img: img.n_samples(),
            txt: txt.n_samples(),
        });
    }
    for (row, (a, b)) in img.ids().iter().zip(txt.ids()).enumerate() {
        if a != b {
            return Err(Error::IdMismatch {
                row,
                img: a.clone(),
                txt: b.clone(),
            });
        }
    }
    Ok(img.n_samples())
}

/// Scales every nonzero row to unit Euclidean norm. Zero rows stay zero.
pub fn row_normalize(m: &FeatureMatrix) -> FeatureMatrix {
    FeatureMatrix {
        ids: m.ids.clone(),
        data: normalize_rows(m.data.clone()),
    }
}

pub(crate) fn normalize_rows(mut data: Array2<f64>) -> Array2<f64> {
    for mut row in data.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    data
}
