//! Dense embedding matrices and their binary container.
//!
//! Layout (little-endian, 20-byte header):
//!
//! | offset | size | field                                            |
//! |--------|------|--------------------------------------------------|
//! | 0      | 4    | magic `FAEM`                                     |
//! | 4      | 4    | version, u32 = 1                                 |
//! | 8      | 1    | kind: 0 candidate_image, 1 text_t1, 2 text_t2    |
//! | 9      | 3    | zero padding                                     |
//! | 12     | 4    | rows, u32                                        |
//! | 16     | 4    | cols, u32                                        |
//! | 20     | ...  | rows * cols f32, row-major                       |
//!
//! Row `i` of a candidate file is pair_id `i` of the crop spec it came from;
//! row `j` of a text file is hoi_id `j`.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"FAEM";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    CandidateImage,
    TextT1,
    TextT2,
}

impl EmbeddingKind {
    pub fn code(self) -> u8 {
        match self {
            EmbeddingKind::CandidateImage => 0,
            EmbeddingKind::TextT1 => 1,
            EmbeddingKind::TextT2 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(EmbeddingKind::CandidateImage),
            1 => Ok(EmbeddingKind::TextT1),
            2 => Ok(EmbeddingKind::TextT2),
            other => Err(Error::Format(format!("unknown embedding kind {other}"))),
        }
    }

    pub fn is_text(self) -> bool {
        !matches!(self, EmbeddingKind::CandidateImage)
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingKind::CandidateImage => "candidate_image",
            EmbeddingKind::TextT1 => "text_t1",
            EmbeddingKind::TextT2 => "text_t2",
        })
    }
}

/// Row-major `rows x cols` matrix of finite feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    kind: EmbeddingKind,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn new(kind: EmbeddingKind, rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::alignment(
                format!("{kind} embedding data length"),
                format!("{rows} x {cols}"),
                data.len(),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite value in {kind} embeddings at row {}, col {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(EmbeddingMatrix {
            rows,
            cols,
            data,
            kind,
        })
    }

    pub fn from_rows(kind: EmbeddingKind, rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::alignment(
                format!("{kind} row {bad} width"),
                cols,
                rows[bad].len(),
            ));
        }
        Self::new(kind, rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn expect_rows(&self, expected: usize, what: &str) -> Result<()> {
        if self.rows == expected {
            Ok(())
        } else {
            Err(Error::alignment(
                format!("{what} ({} rows)", self.kind),
                expected,
                self.rows,
            ))
        }
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            kind: self.kind,
        }
    }
}

impl EmbeddingMatrix<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(&[0, 0, 0]);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "embedding file truncated: {} bytes, header needs {HEADER_LEN}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"FAEM\"",
                &bytes[0..4]
            )));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported embedding format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let kind = EmbeddingKind::from_code(bytes[8])?;
        if bytes[9..12] != [0, 0, 0] {
            return Err(Error::Format("non-zero header padding".into()));
        }
        let rows = u32_at(12) as usize;
        let cols = u32_at(16) as usize;
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Format(format!("{rows} x {cols} overflows")))?;
        if bytes.len() != expected {
            return Err(Error::alignment(
                format!("{kind} file size for {rows} x {cols}"),
                expected,
                bytes.len(),
            ));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(kind, rows, cols, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&io_util::read_bytes(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io_util::write_atomic(path.as_ref(), &self.to_bytes())
    }
}
