//! FLM1 binary container and JSON sidecar manifests.
//!
//! Layout (little-endian):
//!
//! | offset | type | field |
//! |-------:|------|-------|
//! | 0  | `[u8; 4]` | magic `FLM1` |
//! | 4  | u32 | version (1) |
//! | 8  | u32 | task: 0 scalar, 1 line, 2 image, 3 matrix dump |
//! | 12 | u32 | Q (dataset) / rows (matrix) |
//! | 16 | u32 | nx (dataset) / cols (matrix) |
//! | 20 | u32 | ny (dataset only) |
//! | 24 | u32 | out_n (dataset only) |
//!
//! Dataset records follow the header: `nx*ny` input values then `out_n`
//! output values per sample, all `f64`. A matrix dump has a 20-byte header
//! followed by the row-major payload.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FlmError, Result};
use crate::fields::{Dataset, Field1D, Field2D, Grid2D, NormStats, Output, Sample, TaskKind};

pub const MAGIC: [u8; 4] = *b"FLM1";
pub const VERSION: u32 = 1;
pub const MATRIX_TASK_CODE: u32 = 3;

const DATASET_HEADER: usize = 28;
const MATRIX_HEADER: usize = 20;

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| FlmError::InvalidArgument(format!("{what} {v} exceeds u32")))
}

/// Serializes a dataset to FLM1 bytes.
pub fn encode_dataset(dataset: &Dataset) -> Result<Vec<u8>> {
    let grid = dataset.grid();
    let out_n = dataset.output_len();
    let per_record = grid.len() + out_n;
    let mut buf = Vec::with_capacity(DATASET_HEADER + dataset.len() * per_record * 8);
    buf.extend_from_slice(&MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, dataset.task().code());
    push_u32(&mut buf, to_u32(dataset.len(), "sample count")?);
    push_u32(&mut buf, to_u32(grid.nx(), "nx")?);
    push_u32(&mut buf, to_u32(grid.ny(), "ny")?);
    push_u32(&mut buf, to_u32(out_n, "out_n")?);
    for s in dataset.samples() {
        for v in s.input.values().iter().chain(s.output.values()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or(FlmError::Truncated {
            needed: end,
            found: self.bytes.len(),
        })?;
        self.pos = end;
        Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize, context: &str) -> Result<Vec<f64>> {
        let end = self.pos + n * 8;
        let chunk = self.bytes.get(self.pos..end).ok_or(FlmError::Truncated {
            needed: end,
            found: self.bytes.len(),
        })?;
        self.pos = end;
        let values: Vec<f64> = chunk
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(FlmError::Malformed(format!(
                "non-finite value {} in {context}, value {k}",
                values[k]
            )));
        }
        Ok(values)
    }
}

fn check_preamble(bytes: &[u8]) -> Result<(Reader<'_>, u32)> {
    if bytes.len() < 4 {
        return Err(FlmError::Truncated {
            needed: 4,
            found: bytes.len(),
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if found != MAGIC {
        return Err(FlmError::BadMagic { found });
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(FlmError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let task = r.u32()?;
    Ok((r, task))
}

/// Parses FLM1 bytes into a dataset (never normalized; see the manifest).
pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let (mut r, code) = check_preamble(bytes)?;
    let task = TaskKind::from_code(code).ok_or_else(|| {
        FlmError::Malformed(format!("task code {code} is not a dataset task"))
    })?;
    let q = r.u32()? as usize;
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let out_n = r.u32()? as usize;
    let grid = Grid2D::new(nx, ny).map_err(|e| FlmError::Malformed(e.to_string()))?;
    let expected_out = match task {
        TaskKind::ImageToScalar => Some(1),
        TaskKind::ImageToImage => Some(grid.len()),
        TaskKind::ImageToLine => None,
    };
    if q == 0 || out_n == 0 || expected_out.is_some_and(|e| e != out_n) {
        return Err(FlmError::Malformed(format!(
            "inconsistent header: task {task}, Q={q}, grid {nx}x{ny}, out_n={out_n}"
        )));
    }
    let needed = DATASET_HEADER + q * (grid.len() + out_n) * 8;
    if bytes.len() < needed {
        return Err(FlmError::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(FlmError::Malformed(format!(
            "{} trailing bytes after {q} records",
            bytes.len() - needed
        )));
    }
    let mut samples = Vec::with_capacity(q);
    for k in 0..q {
        let input = Field2D::new(grid, r.f64s(grid.len(), &format!("record {k} input"))?)?;
        let out = r.f64s(out_n, &format!("record {k} output"))?;
        let output = match task {
            TaskKind::ImageToScalar => Output::Scalar(out[0]),
            TaskKind::ImageToLine => Output::Line(Field1D::new(out)?),
            TaskKind::ImageToImage => Output::Image(Field2D::new(grid, out)?),
        };
        samples.push(Sample { input, output });
    }
    Dataset::new(task, samples)
}

pub fn write_fields(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dataset(dataset)?).map_err(|e| FlmError::io(path, e))
}

pub fn read_fields(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FlmError::io(path, e))?;
    decode_dataset(&bytes)
}

/// Row-major dense matrix dump with task code 3.
pub fn encode_matrix(rows: usize, cols: usize, data: &[f64]) -> Result<Vec<u8>> {
    if data.len() != rows * cols {
        return Err(FlmError::LengthMismatch {
            expected: rows * cols,
            actual: data.len(),
            context: "matrix payload".into(),
        });
    }
    let mut buf = Vec::with_capacity(MATRIX_HEADER + data.len() * 8);
    buf.extend_from_slice(&MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, MATRIX_TASK_CODE);
    push_u32(&mut buf, to_u32(rows, "rows")?);
    push_u32(&mut buf, to_u32(cols, "cols")?);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let (mut r, code) = check_preamble(bytes)?;
    if code != MATRIX_TASK_CODE {
        return Err(FlmError::Malformed(format!(
            "task code {code} is not a matrix dump"
        )));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let needed = MATRIX_HEADER + rows * cols * 8;
    if bytes.len() != needed {
        return Err(if bytes.len() < needed {
            FlmError::Truncated {
                needed,
                found: bytes.len(),
            }
        } else {
            FlmError::Malformed("trailing bytes after matrix payload".into())
        });
    }
    let data = r.f64s(rows * cols, "matrix")?;
    Ok((rows, cols, data))
}

/// Sidecar manifest written next to a generated or probed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: TaskKind,
    pub samples: usize,
    pub grid: GridShape,
    pub split: String,
    pub provenance: String,
    pub generator: serde_json::Value,
    pub seed: u64,
    #[serde(default)]
    pub normalization: Option<NormStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solver_residuals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
}

impl From<Grid2D> for GridShape {
    fn from(g: Grid2D) -> Self {
        GridShape {
            nx: g.nx(),
            ny: g.ny(),
        }
    }
}

/// `data.flm` -> `data.manifest.json`.
pub fn manifest_path(dataset_path: impl AsRef<Path>) -> PathBuf {
    dataset_path.as_ref().with_extension("manifest.json")
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| FlmError::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FlmError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
