//! Binary embedding file (`.llme`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "LLME"
//! version    u32      1
//! name_len   u16
//! name       name_len bytes, UTF-8
//! n_rows     u64
//! n_depths   u32
//! dim        u32
//! dtype      u8       0 = f32
//! payload    n_rows * n_depths * dim f32, [row][depth][dim]
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"LLME";
pub const EMBEDDING_VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

/// One backbone's embeddings for a dataset: `n_rows × n_depths × dim`.
///
/// Depth index 0 is the last block of the backbone, index 1 the one before
/// it, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    source_name: String,
    n_rows: usize,
    n_depths: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(
        source_name: impl Into<String>,
        n_rows: usize,
        n_depths: usize,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let m = EmbeddingMatrix {
            source_name: source_name.into(),
            n_rows,
            n_depths,
            dim,
            data,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_depths(&self) -> usize {
        self.n_depths
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// The `n_depths × dim` block for one row.
    pub fn row(&self, i: usize) -> &[f32] {
        let width = self.n_depths * self.dim;
        &self.data[i * width..(i + 1) * width]
    }

    pub fn depth(&self, row: usize, depth: usize) -> &[f32] {
        let start = (row * self.n_depths + depth) * self.dim;
        &self.data[start..start + self.dim]
    }

    fn validate(&self) -> Result<()> {
        validate_source_name(&self.source_name)?;
        if self.n_rows == 0 || self.n_depths == 0 || self.dim == 0 {
            return Err(Error::Validation(format!(
                "`{}`: n_rows, n_depths and dim must all be at least 1 (got {}, {}, {})",
                self.source_name, self.n_rows, self.n_depths, self.dim
            )));
        }
        if self.n_depths > u32::MAX as usize || self.dim > u32::MAX as usize {
            return Err(Error::Validation(format!(
                "`{}`: n_depths and dim must fit in 32 bits",
                self.source_name
            )));
        }
        let expected = self
            .n_rows
            .checked_mul(self.n_depths)
            .and_then(|v| v.checked_mul(self.dim))
            .ok_or_else(|| Error::Validation("embedding dimensions overflow".into()))?;
        if self.data.len() != expected {
            return Err(Error::Validation(format!(
                "`{}`: data holds {} values but {}x{}x{} = {expected} are required",
                self.source_name,
                self.data.len(),
                self.n_rows,
                self.n_depths,
                self.dim
            )));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            let width = self.n_depths * self.dim;
            return Err(Error::Validation(format!(
                "`{}`: non-finite value {} at row {}, depth {}, index {}",
                self.source_name,
                self.data[pos],
                pos / width,
                (pos % width) / self.dim,
                pos % self.dim
            )));
        }
        Ok(())
    }
}

/// Source names are restricted to `[A-Za-z0-9_.-]`, 1 to 255 bytes.
pub fn validate_source_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.len() <= 255
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "invalid source name {name:?}: expected 1-255 characters from [A-Za-z0-9_.-]"
        )))
    }
}

pub fn encode_embeddings(matrix: &EmbeddingMatrix) -> Result<Vec<u8>> {
    matrix.validate()?;
    let name = matrix.source_name.as_bytes();
    let mut out = Vec::with_capacity(27 + name.len() + matrix.data.len() * 4);
    out.extend_from_slice(&EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&(matrix.n_rows as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.n_depths as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.dim as u32).to_le_bytes());
    out.push(DTYPE_F32);
    for v in &matrix.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != EMBEDDING_MAGIC {
        return Err(Error::Format(format!(
            "bad magic: expected {:?}, found {:?}",
            EMBEDDING_MAGIC, magic
        )));
    }
    let version = cur.u32("version")?;
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version} (expected {EMBEDDING_VERSION})"
        )));
    }
    let name_len = cur.u16("name length")? as usize;
    let name = std::str::from_utf8(cur.take(name_len, "source name")?)
        .map_err(|e| Error::Format(format!("source name is not UTF-8: {e}")))?
        .to_owned();
    validate_source_name(&name).map_err(|e| Error::Format(e.to_string()))?;
    let n_rows = cur.u64("n_rows")?;
    let n_depths = cur.u32("n_depths")? as usize;
    let dim = cur.u32("dim")? as usize;
    let dtype = cur.take(1, "dtype")?[0];
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {dtype}")));
    }
    if n_rows == 0 || n_depths == 0 || dim == 0 {
        return Err(Error::Corrupt(format!(
            "header declares an empty tensor ({n_rows}x{n_depths}x{dim})"
        )));
    }
    let payload = &bytes[cur.pos..];
    let expected = usize::try_from(n_rows)
        .ok()
        .and_then(|n| n.checked_mul(n_depths))
        .and_then(|n| n.checked_mul(dim))
        .and_then(|n| n.checked_mul(4));
    if expected != Some(payload.len()) {
        return Err(Error::Corrupt(format!(
            "header declares {n_rows}x{n_depths}x{dim} f32 values but payload is {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingMatrix::new(name, n_rows as usize, n_depths, dim, data)
}

/// Writes `matrix` to `path`. Nothing is written if the matrix is invalid.
pub fn write_embeddings(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let bytes = encode_embeddings(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Corrupt(format!(
                "file ends inside the {what} field (offset {})",
                self.pos
            ))),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}
