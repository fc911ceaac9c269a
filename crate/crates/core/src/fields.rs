//! Uniform grids on the unit square, discretized fields, midpoint quadrature
//! and min-max normalization.
//!
//! Nodes sit at cell centers: column `i` of an `nx`-wide grid has
//! x-coordinate `(i + 0.5) / nx`. Values are stored row-major with `y` as the
//! slow index, so `values[j * nx + i]` is the value at `(x_i, y_j)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FlmError, Result};

/// Shape of the map being learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ImageToScalar,
    ImageToLine,
    ImageToImage,
}

impl TaskKind {
    /// Numeric code used by the FLM1 container.
    pub fn code(self) -> u32 {
        match self {
            TaskKind::ImageToScalar => 0,
            TaskKind::ImageToLine => 1,
            TaskKind::ImageToImage => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(TaskKind::ImageToScalar),
            1 => Some(TaskKind::ImageToLine),
            2 => Some(TaskKind::ImageToImage),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ImageToScalar => "image_to_scalar",
            TaskKind::ImageToLine => "image_to_line",
            TaskKind::ImageToImage => "image_to_image",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "image_to_scalar" | "scalar" => Some(TaskKind::ImageToScalar),
            "image_to_line" | "line" => Some(TaskKind::ImageToLine),
            "image_to_image" | "image" => Some(TaskKind::ImageToImage),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cell-center grid on `[0,1] x [0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(FlmError::InvalidArgument(format!(
                "grid must be at least 2x2, got {nx}x{ny}"
            )));
        }
        Ok(Grid2D { nx, ny })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.nx as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.ny as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y(j)).collect()
    }

    /// Coordinates of the node at flat index `k`.
    pub fn node(&self, k: usize) -> (f64, f64) {
        (self.x(k % self.nx), self.y(k / self.nx))
    }
}

/// Compensated (Neumaier) summation in iteration order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Midpoint-rule weights: every cell carries `1 / (nx * ny)`.
pub fn quadrature_weights(grid: &Grid2D) -> Vec<f64> {
    vec![1.0 / grid.len() as f64; grid.len()]
}

/// Discrete sum `Σ values[k] * weights[k]`. Uniform midpoint weights are
/// applied as a mean.
pub fn integrate(field: &Field2D, weights: &[f64]) -> Result<f64> {
    if field.values.len() != weights.len() {
        return Err(FlmError::LengthMismatch {
            expected: field.values.len(),
            actual: weights.len(),
            context: "quadrature weights".into(),
        });
    }
    let n = weights.len();
    if weights.iter().all(|&w| w == 1.0 / n as f64) {
        return Ok(cell_mean(&field.values));
    }
    Ok(compensated_sum(
        field.values.iter().zip(weights).map(|(v, w)| v * w),
    ))
}

/// Mean with one residual correction pass, so that constants are returned
/// unchanged.
fn cell_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = compensated_sum(values.iter().copied()) / n;
    m + compensated_sum(values.iter().map(|v| v - m)) / n
}

fn check_finite(values: &[f64], context: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(FlmError::NonFinite {
            value: values[k],
            context: format!("{context}[{k}]"),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Field2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FlmError::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
                context: "field values".into(),
            });
        }
        check_finite(&values, "field")?;
        Ok(Field2D { grid, values })
    }

    pub fn constant(grid: Grid2D, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), y));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx() + i]
    }

    /// Piecewise-constant resampling onto another grid (each target node
    /// takes the value of the source cell containing it).
    pub fn resample_nearest(&self, target: Grid2D) -> Field2D {
        let src = self.grid;
        let mut values = Vec::with_capacity(target.len());
        for j in 0..target.ny() {
            let sj = ((target.y(j) * src.ny() as f64) as usize).min(src.ny() - 1);
            for i in 0..target.nx() {
                let si = ((target.x(i) * src.nx() as f64) as usize).min(src.nx() - 1);
                values.push(self.get(si, sj));
            }
        }
        Field2D {
            grid: target,
            values,
        }
    }
}

/// Function sampled on `n` cell centers of `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1D {
    values: Vec<f64>,
}

impl Field1D {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(FlmError::InvalidArgument("line field must be non-empty".into()));
        }
        check_finite(&values, "line field")?;
        Ok(Field1D { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Scalar(f64),
    Line(Field1D),
    Image(Field2D),
}

impl Output {
    pub fn task(&self) -> TaskKind {
        match self {
            Output::Scalar(_) => TaskKind::ImageToScalar,
            Output::Line(_) => TaskKind::ImageToLine,
            Output::Image(_) => TaskKind::ImageToImage,
        }
    }

    /// Flat view of the output values in collocation order.
    pub fn values(&self) -> &[f64] {
        match self {
            Output::Scalar(v) => std::slice::from_ref(v),
            Output::Line(l) => l.values(),
            Output::Image(f) => f.values(),
        }
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Rebuilds an output of the same shape from new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Output> {
        if values.len() != self.len() {
            return Err(FlmError::LengthMismatch {
                expected: self.len(),
                actual: values.len(),
                context: "output values".into(),
            });
        }
        Ok(match self {
            Output::Scalar(_) => {
                check_finite(&values, "scalar output")?;
                Output::Scalar(values[0])
            }
            Output::Line(_) => Output::Line(Field1D::new(values)?),
            Output::Image(f) => Output::Image(Field2D::new(*f.grid(), values)?),
        })
    }

    fn map(&self, g: impl Fn(f64) -> f64) -> Result<Output> {
        self.with_values(self.values().iter().map(|&v| g(v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Field2D,
    pub output: Output,
}

/// Min-max statistics of a training split, plus optional centering offsets
/// subtracted after the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_min: f64,
    pub input_max: f64,
    pub output_min: f64,
    pub output_max: f64,
    #[serde(default)]
    pub input_center: f64,
    #[serde(default)]
    pub output_center: f64,
}

impl NormStats {
    pub fn validate(&self) -> Result<()> {
        for (which, lo, hi) in [
            ("input", self.input_min, self.input_max),
            ("output", self.output_min, self.output_max),
        ] {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(FlmError::NonFinite {
                    value: if lo.is_finite() { hi } else { lo },
                    context: format!("{which} normalization bounds"),
                });
            }
            if hi <= lo {
                return Err(FlmError::DegenerateNormalization { which, value: lo });
            }
        }
        Ok(())
    }

    pub fn normalize_input(&self, v: f64) -> f64 {
        (v - self.input_min) / (self.input_max - self.input_min) - self.input_center
    }

    pub fn normalize_output(&self, v: f64) -> f64 {
        (v - self.output_min) / (self.output_max - self.output_min) - self.output_center
    }

    pub fn denormalize_output(&self, v: f64) -> f64 {
        (v + self.output_center) * (self.output_max - self.output_min) + self.output_min
    }

    pub fn normalize_field(&self, f: &Field2D) -> Result<Field2D> {
        Field2D::new(
            *f.grid(),
            f.values().iter().map(|&v| self.normalize_input(v)).collect(),
        )
    }

    /// Adds centering offsets so that the normalized training data has zero
    /// mean (a global scalar mean for inputs and for outputs).
    pub fn centered(mut self, training: &Dataset) -> Result<NormStats> {
        self.input_center = 0.0;
        self.output_center = 0.0;
        let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
        for s in training.samples() {
            for &v in s.input.values() {
                si += self.normalize_input(v);
                ni += 1;
            }
            for &v in s.output.values() {
                so += self.normalize_output(v);
                no += 1;
            }
        }
        self.input_center = si / ni as f64;
        self.output_center = so / no as f64;
        Ok(self)
    }
}

/// A set of `Q` input/output pairs sharing one input grid and output shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    task: TaskKind,
    samples: Vec<Sample>,
    norm: Option<NormStats>,
}

impl Dataset {
    pub fn new(task: TaskKind, samples: Vec<Sample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| FlmError::InvalidArgument("dataset needs at least one sample".into()))?;
        let grid = *first.input.grid();
        let out_len = first.output.len();
        for (q, s) in samples.iter().enumerate() {
            if s.output.task() != task {
                return Err(FlmError::TaskMismatch {
                    expected: task,
                    actual: s.output.task(),
                });
            }
            if *s.input.grid() != grid {
                return Err(FlmError::InvalidArgument(format!(
                    "sample {q} input grid differs from sample 0"
                )));
            }
            if s.output.len() != out_len {
                return Err(FlmError::LengthMismatch {
                    expected: out_len,
                    actual: s.output.len(),
                    context: format!("output of sample {q}"),
                });
            }
            if let Output::Image(f) = &s.output {
                if *f.grid() != grid {
                    return Err(FlmError::InvalidArgument(format!(
                        "sample {q} output grid differs from input grid"
                    )));
                }
            }
        }
        Ok(Dataset {
            task,
            samples,
            norm: None,
        })
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> Grid2D {
        *self.samples[0].input.grid()
    }

    /// Number of output collocation points per sample.
    pub fn output_len(&self) -> usize {
        self.samples[0].output.len()
    }

    /// Statistics this dataset was normalized with, if any.
    pub fn norm(&self) -> Option<&NormStats> {
        self.norm.as_ref()
    }

    pub fn with_norm(mut self, norm: Option<NormStats>) -> Self {
        self.norm = norm;
        self
    }

    /// All output values, sample-major.
    pub fn target_values(&self) -> Vec<f64> {
        self.samples
            .iter()
            .flat_map(|s| s.output.values().iter().copied())
            .collect()
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Min-max statistics over every input value and every output value.
pub fn fit_normalization(training: &Dataset) -> Result<NormStats> {
    let (input_min, input_max) = min_max(
        training
            .samples()
            .iter()
            .flat_map(|s| s.input.values().iter().copied()),
    );
    let (output_min, output_max) = min_max(
        training
            .samples()
            .iter()
            .flat_map(|s| s.output.values().iter().copied()),
    );
    let stats = NormStats {
        input_min,
        input_max,
        output_min,
        output_max,
        input_center: 0.0,
        output_center: 0.0,
    };
    stats.validate()?;
    Ok(stats)
}

/// Maps a raw dataset through `stats`. Out-of-range values are not clamped.
pub fn apply_normalization(dataset: &Dataset, stats: &NormStats) -> Result<Dataset> {
    stats.validate()?;
    if dataset.norm.is_some() {
        return Err(FlmError::InvalidArgument(
            "dataset is already normalized".into(),
        ));
    }
    let samples = dataset
        .samples()
        .iter()
        .map(|s| {
            Ok(Sample {
                input: stats.normalize_field(&s.input)?,
                output: s.output.map(|v| stats.normalize_output(v))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        task: dataset.task,
        samples,
        norm: Some(*stats),
    })
}

/// Maps a normalized output back to physical units.
pub fn invert_normalization(output: &Output, stats: &NormStats) -> Result<Output> {
    output.map(|v| stats.denormalize_output(v))
}
