//! Evaluation of a term library on a dataset: the system `U = F W`.
//!
//! Row `r` of `F` belongs to sample `r / N'` and output collocation point
//! `r % N'`, where output points run row-major (y-major, x-minor) for images
//! and by ascending `x` for lines. Each row is produced by exactly one
//! worker, so the matrix is bit-identical for any thread count.

use rayon::prelude::*;

use crate::error::{FlmError, Result};
use crate::fields::{Dataset, Output, TaskKind};
use crate::library::{render_term, OutputPoint, PreparedInput, TermSpec};

/// Row-ordering contract recorded in exported models.
pub const ROW_ORDER: &str = "sample-major; outputs row-major (y-major, x-minor) for images, ascending x for lines";

/// Default cap on the dense design matrix: 8 GiB.
pub const DEFAULT_MAX_BYTES: u64 = 8 << 30;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(FlmError::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
                context: "design matrix".into(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(FlmError::NonFinite {
                value: data[k],
                context: format!("design matrix entry ({}, {})", k / cols.max(1), k % cols.max(1)),
            });
        }
        Ok(DesignMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        DesignMatrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    /// `F w`, one dot product per row in column order.
    pub fn matvec(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.cols {
            return Err(FlmError::LengthMismatch {
                expected: self.cols,
                actual: w.len(),
                context: "coefficient vector".into(),
            });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(w).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `Fᵀ v`, accumulated row by row in a fixed order.
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(FlmError::LengthMismatch {
                expected: self.rows,
                actual: v.len(),
                context: "row vector".into(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vr;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub values: Vec<f64>,
}

/// Per-column ℓ2 norms. Zero columns keep scale 1 and are listed separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScaling {
    pub scales: Vec<f64>,
    pub zero_columns: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct AssemblyConfig {
    pub max_bytes: u64,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            max_bytes: DEFAULT_MAX_BYTES,
        }
    }
}

/// Output collocation points of one sample, in row order.
pub fn output_points(output: &Output) -> Vec<OutputPoint> {
    match output {
        Output::Scalar(_) => vec![OutputPoint::Scalar],
        Output::Line(l) => (0..l.len()).map(|i| OutputPoint::Line(l.x(i))).collect(),
        Output::Image(f) => {
            let g = f.grid();
            (0..g.len())
                .map(|k| {
                    let (x, y) = g.node(k);
                    OutputPoint::Image(x, y)
                })
                .collect()
        }
    }
}

pub fn assemble(dataset: &Dataset, library: &[TermSpec]) -> Result<(DesignMatrix, TargetVector)> {
    assemble_with(dataset, library, &AssemblyConfig::default())
}

pub fn assemble_with(
    dataset: &Dataset,
    library: &[TermSpec],
    config: &AssemblyConfig,
) -> Result<(DesignMatrix, TargetVector)> {
    if library.is_empty() {
        return Err(FlmError::InvalidArgument("empty term library".into()));
    }
    for t in library {
        if t.task != dataset.task() {
            return Err(FlmError::TaskMismatch {
                expected: dataset.task(),
                actual: t.task,
            });
        }
        t.validate()?;
    }
    let per_sample = dataset.output_len();
    let rows = dataset.len() * per_sample;
    let cols = library.len();
    let bytes = rows as u128 * cols as u128 * 8;
    if bytes > config.max_bytes as u128 {
        return Err(FlmError::MemoryCap {
            rows,
            cols,
            bytes,
            cap: config.max_bytes,
        });
    }

    let mut data = vec![0.0; rows * cols];
    let results: Vec<Result<()>> = data
        .par_chunks_mut(per_sample * cols)
        .zip(dataset.samples().par_iter())
        .enumerate()
        .map(|(q, (block, sample))| {
            let prepared = PreparedInput::with_midpoint_weights(&sample.input)?;
            for (point, row) in output_points(&sample.output)
                .into_iter()
                .zip(block.chunks_exact_mut(cols))
            {
                for (j, (term, slot)) in library.iter().zip(row.iter_mut()).enumerate() {
                    *slot = prepared.eval(term, point).map_err(|e| FlmError::Feature {
                        sample: q,
                        term: j,
                        rendered: render_term(term),
                        source: Box::new(e),
                    })?;
                }
            }
            Ok(())
        })
        .collect();
    results.into_iter().collect::<Result<Vec<()>>>()?;

    Ok((
        DesignMatrix { rows, cols, data },
        TargetVector {
            values: dataset.target_values(),
        },
    ))
}

/// Scales every non-zero column to unit ℓ2 norm.
pub fn column_normalize(f: &DesignMatrix) -> (DesignMatrix, ColumnScaling) {
    let mut sq = vec![0.0; f.cols];
    for r in 0..f.rows {
        for (s, v) in sq.iter_mut().zip(f.row(r)) {
            *s += v * v;
        }
    }
    let mut zero_columns = Vec::new();
    let scales: Vec<f64> = sq
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            if s > 0.0 {
                s.sqrt()
            } else {
                zero_columns.push(j);
                1.0
            }
        })
        .collect();
    let mut data = f.data.clone();
    for row in data.chunks_exact_mut(f.cols.max(1)) {
        for (v, s) in row.iter_mut().zip(&scales) {
            *v /= s;
        }
    }
    (
        DesignMatrix {
            rows: f.rows,
            cols: f.cols,
            data,
        },
        ColumnScaling {
            scales,
            zero_columns,
        },
    )
}

/// Task of the rows of a dataset, for callers checking library compatibility.
pub fn check_task(dataset: &Dataset, task: TaskKind) -> Result<()> {
    if dataset.task() != task {
        return Err(FlmError::TaskMismatch {
            expected: task,
            actual: dataset.task(),
        });
    }
    Ok(())
}
