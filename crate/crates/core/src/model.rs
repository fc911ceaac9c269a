//! The fitted surrogate: a sparse sum of library terms with its
//! normalization, prediction at any output resolution, rendering and JSON
//! export.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::ROW_ORDER;
use crate::error::{FlmError, Result};
use crate::fields::{Dataset, Field2D, Grid2D, NormStats, Output, TaskKind};
use crate::hexfloat;
use crate::io::GridShape;
use crate::library::{
    family_term, render_term, IndicatorMode, KernelFamily, Lifting, OuterNonlinearity, OutputPoint,
    PreparedInput, TermSpec,
};
use crate::regression::FitReport;
use crate::synth::task_points;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "data-driven")]
    DataDriven,
    #[serde(rename = "nn-driven")]
    NnDriven,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::DataDriven => "data-driven",
            Provenance::NnDriven => "nn-driven",
        }
    }
}

/// How a model was fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub name: String,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub ridge_lambda: Option<f64>,
    #[serde(default)]
    pub normalize_columns: Option<bool>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub library_size: usize,
    #[serde(default)]
    pub report: Option<FitReport>,
}

impl FitMeta {
    pub fn named(name: &str) -> Self {
        FitMeta {
            name: name.into(),
            threshold: None,
            ridge_lambda: None,
            normalize_columns: None,
            preset: None,
            library_size: 0,
            report: None,
        }
    }
}

/// Shape of the output requested from [`FunctionalLinearModel::predict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputSpec {
    Scalar,
    Line { n: usize },
    Image { grid: Grid2D },
}

impl OutputSpec {
    pub fn task(&self) -> TaskKind {
        match self {
            OutputSpec::Scalar => TaskKind::ImageToScalar,
            OutputSpec::Line { .. } => TaskKind::ImageToLine,
            OutputSpec::Image { .. } => TaskKind::ImageToImage,
        }
    }

    /// The shape of an existing output.
    pub fn like(output: &Output) -> Self {
        match output {
            Output::Scalar(_) => OutputSpec::Scalar,
            Output::Line(l) => OutputSpec::Line { n: l.len() },
            Output::Image(f) => OutputSpec::Image { grid: *f.grid() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalLinearModel {
    task: TaskKind,
    terms: Vec<(TermSpec, f64)>,
    norm: Option<NormStats>,
    provenance: Provenance,
    grid: GridShape,
    fit: FitMeta,
}

fn sort_terms(terms: &mut [(TermSpec, f64)]) {
    terms.sort_by(|a, b| {
        b.1.abs()
            .total_cmp(&a.1.abs())
            .then_with(|| a.0.key().cmp(&b.0.key()))
    });
}

impl FunctionalLinearModel {
    /// Builds a model, dropping zero coefficients and ordering terms by
    /// decreasing magnitude.
    pub fn new(
        task: TaskKind,
        terms: Vec<(TermSpec, f64)>,
        norm: Option<NormStats>,
        provenance: Provenance,
        grid: GridShape,
        fit: FitMeta,
    ) -> Result<Self> {
        let mut keys = HashSet::new();
        let mut biases = 0;
        let mut kept = Vec::with_capacity(terms.len());
        for (t, w) in terms {
            if t.task != task {
                return Err(FlmError::TaskMismatch {
                    expected: task,
                    actual: t.task,
                });
            }
            t.validate()?;
            if !w.is_finite() {
                return Err(FlmError::NonFinite {
                    value: w,
                    context: format!("coefficient of `{}`", render_term(&t)),
                });
            }
            if !keys.insert(t.key()) {
                return Err(FlmError::InvalidArgument(format!(
                    "duplicate term `{}`",
                    render_term(&t)
                )));
            }
            if w == 0.0 {
                continue;
            }
            biases += t.is_bias as usize;
            kept.push((t, w));
        }
        if biases > 1 {
            return Err(FlmError::InvalidArgument("more than one bias term".into()));
        }
        if let Some(n) = &norm {
            n.validate()?;
        }
        sort_terms(&mut kept);
        Ok(FunctionalLinearModel {
            task,
            terms: kept,
            norm,
            provenance,
            grid,
            fit,
        })
    }

    /// Pairs a coefficient vector with the library it was solved against.
    pub fn from_coefficients(
        library: &[TermSpec],
        coeffs: &[f64],
        norm: Option<NormStats>,
        provenance: Provenance,
        grid: GridShape,
        fit: FitMeta,
    ) -> Result<Self> {
        if library.len() != coeffs.len() {
            return Err(FlmError::LengthMismatch {
                expected: library.len(),
                actual: coeffs.len(),
                context: "coefficients vs library".into(),
            });
        }
        let task = library
            .first()
            .ok_or_else(|| FlmError::InvalidArgument("empty library".into()))?
            .task;
        let terms = library.iter().copied().zip(coeffs.iter().copied()).collect();
        Self::new(task, terms, norm, provenance, grid, fit)
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn terms(&self) -> &[(TermSpec, f64)] {
        &self.terms
    }

    pub fn norm(&self) -> Option<&NormStats> {
        self.norm.as_ref()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn grid(&self) -> GridShape {
        self.grid
    }

    pub fn fit_meta(&self) -> &FitMeta {
        &self.fit
    }

    /// Coefficient of each library term (zero when absent).
    pub fn coefficients_for(&self, library: &[TermSpec]) -> Vec<f64> {
        library
            .iter()
            .map(|t| {
                self.terms
                    .iter()
                    .find(|(m, _)| m.key() == t.key())
                    .map_or(0.0, |(_, w)| *w)
            })
            .collect()
    }

    /// Model output at explicit points, in the model's output units.
    pub fn predict_points(&self, f: &Field2D, points: &[OutputPoint]) -> Result<Vec<f64>> {
        if let Some(p) = points.iter().find(|p| p.task() != self.task) {
            return Err(FlmError::TaskMismatch {
                expected: self.task,
                actual: p.task(),
            });
        }
        let normalized;
        let input = match &self.norm {
            Some(n) => {
                normalized = n.normalize_field(f)?;
                &normalized
            }
            None => f,
        };
        let prepared = PreparedInput::with_midpoint_weights(input)?;
        points
            .iter()
            .map(|&pt| {
                let mut acc = 0.0;
                for (t, w) in &self.terms {
                    acc += w * prepared.eval(t, pt)?;
                }
                let v = match &self.norm {
                    Some(n) => n.denormalize_output(acc),
                    None => acc,
                };
                if !v.is_finite() {
                    return Err(FlmError::NonFinite {
                        value: v,
                        context: "model prediction".into(),
                    });
                }
                Ok(v)
            })
            .collect()
    }

    pub fn predict(&self, f: &Field2D, spec: OutputSpec) -> Result<Output> {
        if spec.task() != self.task {
            return Err(FlmError::TaskMismatch {
                expected: self.task,
                actual: spec.task(),
            });
        }
        let (grid, line_n) = match spec {
            OutputSpec::Image { grid } => (grid, 0),
            OutputSpec::Line { n } if n == 0 => {
                return Err(FlmError::InvalidArgument("line output needs at least one point".into()))
            }
            OutputSpec::Line { n } => (*f.grid(), n),
            OutputSpec::Scalar => (*f.grid(), 0),
        };
        let values = self.predict_points(f, &task_points(self.task, grid, line_n))?;
        crate::synth::output_from_values(self.task, grid, values)
    }

    /// Predictions for every sample of a dataset, shaped like its outputs.
    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<Output>> {
        dataset
            .samples()
            .par_iter()
            .map(|s| self.predict(&s.input, OutputSpec::like(&s.output)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }

    /// Drops terms with `|w| < tol`; the bias always stays.
    pub fn prune(&self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(FlmError::InvalidArgument(format!(
                "prune tolerance must be positive, got {tol}"
            )));
        }
        let mut out = self.clone();
        out.terms.retain(|(t, w)| t.is_bias || w.abs() >= tol);
        Ok(out)
    }

    pub fn render_equation(&self) -> String {
        render_equation(self)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            flm_version: MODEL_VERSION,
            task: self.task,
            grid: self.grid,
            normalization: self.norm,
            provenance: self.provenance,
            solver: self.fit.clone(),
            row_order: ROW_ORDER.into(),
            terms: self
                .terms
                .iter()
                .map(|(t, w)| TermDoc {
                    family_index: t.family_index,
                    lifting: t.lifting,
                    kernel: t.kernel,
                    outer: t.outer,
                    beta: t.beta,
                    bias: t.is_bias,
                    indicator: t.indicator,
                    coeff_hex: hexfloat::format(*w),
                    coeff: *w,
                    rendered: render_term(t),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| FlmError::Schema(e.to_string()))?;
        match value.get("flm_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_VERSION as u64 => {}
            Some(v) => {
                return Err(FlmError::VersionMismatch {
                    found: v as u32,
                    expected: MODEL_VERSION,
                })
            }
            None => return Err(FlmError::Schema("missing or invalid `flm_version`".into())),
        }
        let doc: ModelDoc = serde_json::from_value(value).map_err(|e| FlmError::Schema(e.to_string()))?;
        let mut terms = Vec::with_capacity(doc.terms.len());
        for (i, td) in doc.terms.iter().enumerate() {
            let family = if td.bias {
                crate::library::family_count(doc.task) as u32
            } else {
                td.family_index
            };
            let t = family_term(doc.task, family, td.beta, td.indicator)
                .map_err(|e| FlmError::Schema(format!("term {i}: {e}")))?;
            if (t.lifting, t.kernel, t.outer) != (td.lifting, td.kernel, td.outer) || family != td.family_index {
                return Err(FlmError::Schema(format!(
                    "term {i}: tags {}/{}/{} do not match family {}",
                    td.lifting.as_str(),
                    td.kernel.as_str(),
                    td.outer.as_str(),
                    td.family_index
                )));
            }
            let w = hexfloat::parse(&td.coeff_hex).ok_or_else(|| {
                FlmError::Schema(format!("term {i}: bad coeff_hex `{}`", td.coeff_hex))
            })?;
            terms.push((t, w));
        }
        Self::new(doc.task, terms, doc.normalization, doc.provenance, doc.grid, doc.solver)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    flm_version: u32,
    task: TaskKind,
    grid: GridShape,
    normalization: Option<NormStats>,
    provenance: Provenance,
    solver: FitMeta,
    #[serde(default)]
    row_order: String,
    terms: Vec<TermDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TermDoc {
    family_index: u32,
    lifting: Lifting,
    kernel: KernelFamily,
    outer: OuterNonlinearity,
    beta: Option<f64>,
    bias: bool,
    #[serde(default)]
    indicator: IndicatorMode,
    coeff_hex: String,
    coeff: f64,
    rendered: String,
}

/// Six significant digits, trailing zeros kept.
fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0.00000".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    }
}

/// One summand per line, largest magnitude first:
/// `u = c₁ · term₁`, then `  + c₂ · term₂` or `  - c₂ · term₂`.
pub fn render_equation(model: &FunctionalLinearModel) -> String {
    let mut out = String::new();
    if model.terms.is_empty() {
        return "u = 0".into();
    }
    for (k, (t, w)) in model.terms.iter().enumerate() {
        let body = |c: f64| {
            if t.is_bias {
                sig6(c)
            } else {
                format!("{} · {}", sig6(c), render_term(t))
            }
        };
        if k == 0 {
            let _ = write!(out, "u = {}", body(*w));
        } else {
            let sign = if *w < 0.0 { '-' } else { '+' };
            let _ = write!(out, "\n  {sign} {}", body(w.abs()));
        }
    }
    out
}

pub fn export_model(model: &FunctionalLinearModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()?).map_err(|e| FlmError::io(path, e))
}

pub fn import_model(path: impl AsRef<Path>) -> Result<FunctionalLinearModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FlmError::io(path, e))?;
    FunctionalLinearModel::from_json(&text)
}
