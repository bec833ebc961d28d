//! Binary and text formats read and written by the CLI.
//!
//! * Embedding file: `"EMB1"`, `n: u32`, `D: u32`, then `n * D` `f32` values, row-major.
//! * Array file: `"ARR1"`, `ndim: u32`, `ndim` dimensions as `u32`, then the `f32` payload.
//! * Label file: one non-negative integer per line; blank lines are skipped.
//!
//! All integers and floats are little-endian.

use pathssl_core::regularizers::EmbeddingBatch;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMB1";
pub const ARRAY_MAGIC: [u8; 4] = *b"ARR1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("truncated: need {expected} bytes, have {got}")]
    Truncated { expected: usize, got: usize },
    #[error("{extra} trailing bytes after the payload")]
    TrailingBytes { extra: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("empty payload: shape {0:?}")]
    Empty(Vec<u32>),
    #[error("value {value} at index {index} does not fit in f32")]
    Overflow { index: usize, value: f64 },
    #[error("array has too many dimensions ({0})")]
    TooManyDimensions(u32),
    #[error("line {line}: {text:?} is not a class label")]
    BadLabel { line: usize, text: String },
    #[error(transparent)]
    Core(#[from] pathssl_core::Error),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(FormatError::Truncated {
            expected: self.pos.saturating_add(len),
            got: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found = &self.bytes[..self.bytes.len().min(4)];
        if found != expected {
            return Err(FormatError::BadMagic {
                expected,
                found: found.to_vec(),
            });
        }
        self.pos = 4;
        Ok(())
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32_payload(&mut self, count: usize) -> Result<Vec<f32>, FormatError> {
        let len = count.checked_mul(4).ok_or(FormatError::Truncated {
            expected: usize::MAX,
            got: self.bytes.len(),
        })?;
        let raw = self.take(len)?;
        let extra = self.bytes.len() - self.pos;
        if extra > 0 {
            return Err(FormatError::TrailingBytes { extra });
        }
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite(i));
        }
        Ok(values)
    }
}

fn to_f32(values: &[f64]) -> Result<Vec<f32>, FormatError> {
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            let v = value as f32;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(FormatError::Overflow { index, value })
            }
        })
        .collect()
}

fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Raw embedding payload: `(n, dim, values)`.
pub fn parse_embedding_payload(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>), FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(EMBEDDING_MAGIC)?;
    let n = r.u32()?;
    let dim = r.u32()?;
    if n == 0 || dim == 0 {
        return Err(FormatError::Empty(vec![n, dim]));
    }
    let count = (n as usize).checked_mul(dim as usize).ok_or(FormatError::Truncated {
        expected: usize::MAX,
        got: bytes.len(),
    })?;
    Ok((n as usize, dim as usize, r.f32_payload(count)?))
}

pub fn parse_embedding_file(bytes: &[u8]) -> Result<EmbeddingBatch, FormatError> {
    let (n, dim, values) = parse_embedding_payload(bytes)?;
    Ok(EmbeddingBatch::new(
        values.into_iter().map(f64::from).collect(),
        n,
        dim,
    )?)
}

pub fn encode_embedding_payload(n: usize, dim: usize, values: &[f32]) -> Result<Vec<u8>, FormatError> {
    if n == 0 || dim == 0 {
        return Err(FormatError::Empty(vec![n as u32, dim as u32]));
    }
    if values.len() != n * dim {
        return Err(FormatError::Truncated {
            expected: n * dim,
            got: values.len(),
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFinite(i));
    }
    let mut out = Vec::with_capacity(12 + 4 * values.len());
    out.extend_from_slice(&EMBEDDING_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    push_f32s(&mut out, values);
    Ok(out)
}

/// Rounds each value to `f32`. Values read from a file come back bit-exact.
pub fn write_embedding_file(batch: &EmbeddingBatch) -> Result<Vec<u8>, FormatError> {
    encode_embedding_payload(batch.n(), batch.dim(), &to_f32(batch.as_slice())?)
}

/// Row-major `f64` data of shape `n x dim`, rounded to `f32`.
pub fn write_embedding_rows(n: usize, dim: usize, values: &[f64]) -> Result<Vec<u8>, FormatError> {
    encode_embedding_payload(n, dim, &to_f32(values)?)
}

/// Dimensions and `f32` values of an array file.
pub fn parse_array_file(bytes: &[u8]) -> Result<(Vec<u32>, Vec<f32>), FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(ARRAY_MAGIC)?;
    let ndim = r.u32()?;
    if ndim > 16 {
        return Err(FormatError::TooManyDimensions(ndim));
    }
    let dims = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(FormatError::Empty(dims));
    }
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
    let count = count.ok_or(FormatError::Truncated {
        expected: usize::MAX,
        got: bytes.len(),
    })?;
    Ok((dims, r.f32_payload(count)?))
}

pub fn write_array_file(dims: &[u32], values: &[f64]) -> Result<Vec<u8>, FormatError> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(FormatError::Empty(dims.to_vec()));
    }
    let count: usize = dims.iter().map(|&d| d as usize).product();
    if values.len() != count {
        return Err(FormatError::Truncated {
            expected: count,
            got: values.len(),
        });
    }
    let values = to_f32(values)?;
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + 4 * values.len());
    out.extend_from_slice(&ARRAY_MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    push_f32s(&mut out, &values);
    Ok(out)
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>, FormatError> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let label = line.parse().map_err(|_| FormatError::BadLabel {
            line: i + 1,
            text: line.to_string(),
        })?;
        labels.push(label);
    }
    Ok(labels)
}
