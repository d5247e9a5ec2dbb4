use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{MixError, Result};

/// Magic bytes opening a binary embedding file.
pub const MAGIC: &[u8; 4] = b"MDX1";
const HEADER_LEN: usize = 16;

/// Sample embeddings for one dataset and one modality, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    values: DMatrix<f64>,
}

impl EmbeddingMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(MixError::validation(format!(
                "embedding matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MixError::validation("embedding matrix contains a non-finite value"));
        }
        Ok(EmbeddingMatrix { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(MixError::validation("embedding rows have unequal lengths"));
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.values
    }
}

/// Read an embedding file. Files opening with [`MAGIC`] are parsed as the
/// binary float32 format; anything else is parsed as headerless CSV.
pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| MixError::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes).map_err(|message| MixError::EmbeddingFormat {
            path: path.to_path_buf(),
            message,
        })
    } else {
        decode_csv(&bytes).map_err(|message| MixError::EmbeddingFormat {
            path: path.to_path_buf(),
            message,
        })
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4-byte slice"))
}

fn decode_binary(bytes: &[u8]) -> std::result::Result<EmbeddingMatrix, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!(
            "truncated header: {} bytes, expected {HEADER_LEN}",
            bytes.len()
        ));
    }
    let n = read_u32(bytes, 4) as usize;
    let d = read_u32(bytes, 8) as usize;
    let reserved = read_u32(bytes, 12);
    if reserved != 0 {
        return Err(format!("reserved header field must be 0, found {reserved}"));
    }
    if n == 0 || d == 0 {
        return Err(format!("header declares an empty matrix ({n}x{d})"));
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| format!("header shape {n}x{d} overflows"))?;
    if payload.len() != expected {
        return Err(format!(
            "length mismatch: header declares {n}x{d} ({} values) but payload holds {} bytes ({} values)",
            n * d,
            payload.len(),
            payload.len() as f64 / 4.0
        ));
    }
    let mut values = DMatrix::zeros(n, d);
    for (idx, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(format!("non-finite value at row {}, column {}", idx / d, idx % d));
        }
        values[(idx / d, idx % d)] = f64::from(v);
    }
    EmbeddingMatrix::new(values).map_err(|e| e.to_string())
}

fn decode_csv(bytes: &[u8]) -> std::result::Result<EmbeddingMatrix, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("csv row {}: {e}", line + 1))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                let v: f64 = field
                    .parse()
                    .map_err(|_| format!("csv row {}, column {}: '{field}' is not a number", line + 1, col + 1))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format!("non-finite value at csv row {}, column {}", line + 1, col + 1))
                }
            })
            .collect::<std::result::Result<Vec<f64>, String>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("csv file holds no rows".to_string());
    }
    EmbeddingMatrix::from_rows(&rows).map_err(|e| e.to_string())
}

/// Write the binary format. Values are narrowed to float32.
pub fn write_embedding_file(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * m.rows() * m.dim());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for i in 0..m.rows() {
        for j in 0..m.dim() {
            buf.extend_from_slice(&(m.values[(i, j)] as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| MixError::io(path, e))?;
    file.write_all(&buf).map_err(|e| MixError::io(path, e))
}
