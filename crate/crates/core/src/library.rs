//! Candidate integral-equation terms.
//!
//! Every term has the shape
//!
//! ```text
//! g( ∬ ψ(x - ζ, y - η; β) · T[f](ζ, η) dζ dη )
//! ```
//!
//! with a lifting `T`, a kernel `ψ` and an outer nonlinearity `g`. The three
//! task shapes share one evaluator: image-to-scalar terms are evaluated at the
//! output point `(0, 0)`, image-to-line terms at `(x, 0)` and image-to-image
//! terms at `(x, y)`. That reproduces the per-task kernel tables, e.g. the
//! scalar Gaussian `exp(-(ζ²+η²)/β)` and the line kernel `exp(-η/β)`.
//!
//! Integrals are discrete sums against the midpoint weights of the input grid.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FlmError, Result};
use crate::fields::{compensated_sum as csum, quadrature_weights, Field2D, Grid2D, TaskKind};

/// Largest exponent accepted by the `exp` lifting and outer nonlinearity.
pub const MAX_EXPONENT: f64 = 700.0;

/// Pointwise transformation of the input applied before integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifting {
    Identity,
    CoordZeta,
    CoordEta,
    CoordZeta2,
    CoordEta2,
    CoordZetaEta,
    SquareF,
    TanhF,
    ExpF,
    ExpNegFOverBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Unit,
    GaussianIso,
    ExpDistance,
    IndicatorDisk,
    SepExpX,
    SepExpY,
    DomainAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterNonlinearity {
    Identity,
    Square,
    Tanh,
    Exp,
}

/// Which side of the disk `D ≤ β/2` an indicator kernel integrates over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndicatorMode {
    /// Integrate where `2D/β ≤ 1` (local truncation).
    #[default]
    #[serde(rename = "local")]
    Local,
    /// Integrate where `2D/β > 1`, the inequality as typeset in the original table.
    #[serde(rename = "as-printed")]
    AsPrinted,
}

impl Lifting {
    pub fn as_str(self) -> &'static str {
        match self {
            Lifting::Identity => "identity",
            Lifting::CoordZeta => "coord_zeta",
            Lifting::CoordEta => "coord_eta",
            Lifting::CoordZeta2 => "coord_zeta2",
            Lifting::CoordEta2 => "coord_eta2",
            Lifting::CoordZetaEta => "coord_zeta_eta",
            Lifting::SquareF => "square_f",
            Lifting::TanhF => "tanh_f",
            Lifting::ExpF => "exp_f",
            Lifting::ExpNegFOverBeta => "exp_neg_f_over_beta",
        }
    }

    pub fn needs_beta(self) -> bool {
        self == Lifting::ExpNegFOverBeta
    }

    /// True when the lifted value is a linear function of `f`.
    pub fn is_linear(self) -> bool {
        matches!(
            self,
            Lifting::Identity
                | Lifting::CoordZeta
                | Lifting::CoordEta
                | Lifting::CoordZeta2
                | Lifting::CoordEta2
                | Lifting::CoordZetaEta
        )
    }
}

impl KernelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Unit => "unit",
            KernelFamily::GaussianIso => "gaussian_iso",
            KernelFamily::ExpDistance => "exp_distance",
            KernelFamily::IndicatorDisk => "indicator_disk",
            KernelFamily::SepExpX => "sep_exp_x",
            KernelFamily::SepExpY => "sep_exp_y",
            KernelFamily::DomainAverage => "domain_average",
        }
    }

    pub fn needs_beta(self) -> bool {
        matches!(
            self,
            KernelFamily::GaussianIso
                | KernelFamily::ExpDistance
                | KernelFamily::IndicatorDisk
                | KernelFamily::SepExpX
                | KernelFamily::SepExpY
        )
    }
}

impl OuterNonlinearity {
    pub fn as_str(self) -> &'static str {
        match self {
            OuterNonlinearity::Identity => "identity",
            OuterNonlinearity::Square => "square",
            OuterNonlinearity::Tanh => "tanh",
            OuterNonlinearity::Exp => "exp",
        }
    }
}

/// One column of the library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub task: TaskKind,
    pub family_index: u32,
    pub lifting: Lifting,
    pub kernel: KernelFamily,
    pub outer: OuterNonlinearity,
    pub beta: Option<f64>,
    pub is_bias: bool,
    #[serde(default)]
    pub indicator: IndicatorMode,
}

/// Identity of a term inside a library: `(task, family_index, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermKey {
    pub task: u32,
    pub family_index: u32,
    pub beta_bits: Option<u64>,
}

impl TermSpec {
    /// Builds a term, checking that `beta` is present exactly when needed.
    pub fn new(
        task: TaskKind,
        family_index: u32,
        lifting: Lifting,
        kernel: KernelFamily,
        outer: OuterNonlinearity,
        beta: Option<f64>,
    ) -> Result<Self> {
        let t = TermSpec {
            task,
            family_index,
            lifting,
            kernel,
            outer,
            beta,
            is_bias: false,
            indicator: IndicatorMode::Local,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn bias(task: TaskKind) -> Self {
        TermSpec {
            task,
            family_index: family_table(task).len() as u32,
            lifting: Lifting::Identity,
            kernel: KernelFamily::Unit,
            outer: OuterNonlinearity::Identity,
            beta: None,
            is_bias: true,
            indicator: IndicatorMode::Local,
        }
    }

    pub fn needs_beta(&self) -> bool {
        !self.is_bias && (self.kernel.needs_beta() || self.lifting.needs_beta())
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_bias {
            if self.beta.is_some() {
                return Err(FlmError::InvalidArgument("bias term takes no bandwidth".into()));
            }
            return Ok(());
        }
        match (self.needs_beta(), self.beta) {
            (true, None) => Err(FlmError::InvalidArgument(format!(
                "{}/{} term requires a bandwidth",
                self.kernel.as_str(),
                self.lifting.as_str()
            ))),
            (false, Some(_)) => Err(FlmError::InvalidArgument(format!(
                "{}/{} term takes no bandwidth",
                self.kernel.as_str(),
                self.lifting.as_str()
            ))),
            (true, Some(b)) if !(b.is_finite() && b > 0.0) => Err(FlmError::InvalidArgument(
                format!("bandwidth must be positive and finite, got {b}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn key(&self) -> TermKey {
        TermKey {
            task: self.task.code(),
            family_index: self.family_index,
            beta_bits: self.beta.map(f64::to_bits),
        }
    }

    /// True when the term is linear in `f` (identity outer, linear lifting,
    /// not the bias).
    pub fn is_linear_in_f(&self) -> bool {
        !self.is_bias && self.lifting.is_linear() && self.outer == OuterNonlinearity::Identity
    }
}

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_term(self))
    }
}

#[derive(Debug, Clone, Copy)]
struct FamilyDef {
    lifting: Lifting,
    kernel: KernelFamily,
    outer: OuterNonlinearity,
}

const fn fam(lifting: Lifting, kernel: KernelFamily, outer: OuterNonlinearity) -> FamilyDef {
    FamilyDef {
        lifting,
        kernel,
        outer,
    }
}

use KernelFamily as K;
use Lifting as L;
use OuterNonlinearity as G;

/// Image-to-scalar families in table reading order. The last entry is the
/// squared Gaussian term, only enabled on request.
const SCALAR_FAMILIES: [FamilyDef; 13] = [
    fam(L::Identity, K::Unit, G::Identity),
    fam(L::CoordZeta, K::Unit, G::Identity),
    fam(L::CoordEta, K::Unit, G::Identity),
    fam(L::CoordZeta2, K::Unit, G::Identity),
    fam(L::CoordEta2, K::Unit, G::Identity),
    fam(L::CoordZetaEta, K::Unit, G::Identity),
    fam(L::SquareF, K::Unit, G::Identity),
    fam(L::Identity, K::GaussianIso, G::Identity),
    fam(L::SquareF, K::GaussianIso, G::Identity),
    fam(L::Identity, K::SepExpX, G::Identity),
    fam(L::Identity, K::SepExpY, G::Identity),
    fam(L::ExpNegFOverBeta, K::Unit, G::Identity),
    fam(L::Identity, K::GaussianIso, G::Square),
];

const SCALAR_SQUARED_GAUSSIAN: u32 = 12;

/// Image-to-image and image-to-line families share one layout; on the line
/// task `SepExpY` evaluated at `y = 0` is the `exp(-η/β)` kernel.
const FIELD_FAMILIES: [FamilyDef; 19] = [
    fam(L::Identity, K::DomainAverage, G::Identity),
    fam(L::Identity, K::GaussianIso, G::Identity),
    fam(L::Identity, K::ExpDistance, G::Identity),
    fam(L::Identity, K::IndicatorDisk, G::Identity),
    fam(L::SquareF, K::IndicatorDisk, G::Identity),
    fam(L::Identity, K::IndicatorDisk, G::Exp),
    fam(L::ExpF, K::IndicatorDisk, G::Identity),
    fam(L::Identity, K::SepExpX, G::Identity),
    fam(L::Identity, K::SepExpY, G::Identity),
    fam(L::Identity, K::SepExpX, G::Tanh),
    fam(L::Identity, K::SepExpY, G::Tanh),
    fam(L::TanhF, K::SepExpX, G::Identity),
    fam(L::TanhF, K::SepExpY, G::Identity),
    fam(L::Identity, K::SepExpX, G::Square),
    fam(L::Identity, K::SepExpY, G::Square),
    fam(L::SquareF, K::SepExpX, G::Identity),
    fam(L::SquareF, K::SepExpY, G::Identity),
    fam(L::Identity, K::GaussianIso, G::Square),
    fam(L::Identity, K::GaussianIso, G::Tanh),
];

fn family_table(task: TaskKind) -> &'static [FamilyDef] {
    match task {
        TaskKind::ImageToScalar => &SCALAR_FAMILIES,
        TaskKind::ImageToLine | TaskKind::ImageToImage => &FIELD_FAMILIES,
    }
}

/// Number of non-bias families defined for a task.
pub fn family_count(task: TaskKind) -> usize {
    family_table(task).len()
}

/// The term of family `family_index` with bandwidth `beta`. The index one
/// past the last family is the bias.
pub fn family_term(
    task: TaskKind,
    family_index: u32,
    beta: Option<f64>,
    indicator: IndicatorMode,
) -> Result<TermSpec> {
    let table = family_table(task);
    if family_index as usize == table.len() {
        let bias = TermSpec::bias(task);
        bias.validate()?;
        return match beta {
            None => Ok(bias),
            Some(_) => Err(FlmError::InvalidArgument("bias term takes no bandwidth".into())),
        };
    }
    let def = table.get(family_index as usize).ok_or_else(|| {
        FlmError::InvalidArgument(format!(
            "family index {family_index} out of range for {task} (0..={})",
            table.len()
        ))
    })?;
    let t = TermSpec {
        task,
        family_index,
        lifting: def.lifting,
        kernel: def.kernel,
        outer: def.outer,
        beta,
        is_bias: false,
        indicator,
    };
    t.validate()?;
    Ok(t)
}

/// `m_beta` uniformly spaced bandwidths covering `[beta_min, beta_max]`
/// inclusively; a single bandwidth is the midpoint.
pub fn bandwidth_grid(beta_min: f64, beta_max: f64, m_beta: usize) -> Result<Vec<f64>> {
    if !(beta_min.is_finite() && beta_max.is_finite() && beta_min > 0.0 && beta_min < beta_max) {
        return Err(FlmError::InvalidArgument(format!(
            "bandwidth range must satisfy 0 < min < max, got [{beta_min}, {beta_max}]"
        )));
    }
    if m_beta == 0 {
        return Err(FlmError::InvalidArgument("m_beta must be at least 1".into()));
    }
    if m_beta == 1 {
        return Ok(vec![0.5 * (beta_min + beta_max)]);
    }
    let step = (beta_max - beta_min) / (m_beta - 1) as f64;
    let mut grid: Vec<f64> = (0..m_beta).map(|j| beta_min + step * j as f64).collect();
    grid[m_beta - 1] = beta_max;
    Ok(grid)
}

/// Plug-in Gaussian bandwidth `n^(-0.3)` for `n` points per direction.
pub fn plugin_bandwidth(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(FlmError::InvalidArgument(format!(
            "plug-in bandwidth needs n >= 2, got {n}"
        )));
    }
    Ok((n as f64).powf(-0.3))
}

/// Library configuration; also the JSON schema of custom libraries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub task: TaskKind,
    pub beta_min: f64,
    pub beta_max: f64,
    pub m_beta: usize,
    /// Family indices to include; `None` selects the full list for the task.
    #[serde(default)]
    pub families: Option<Vec<u32>>,
    /// Adds the squared Gaussian term to the image-to-scalar library.
    #[serde(default)]
    pub squared_gaussian: bool,
    #[serde(default)]
    pub indicator: IndicatorMode,
    #[serde(default = "default_true")]
    pub bias: bool,
}

fn default_true() -> bool {
    true
}

/// Named library configurations matching the six reference problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Case1Mnist,
    Case2PorousScalar,
    Case3PorousImage,
    Case4Superres,
    Case5WssLine,
    Case6Local,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Case1Mnist,
        Preset::Case2PorousScalar,
        Preset::Case3PorousImage,
        Preset::Case4Superres,
        Preset::Case5WssLine,
        Preset::Case6Local,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Case1Mnist => "case1-mnist",
            Preset::Case2PorousScalar => "case2-porous-scalar",
            Preset::Case3PorousImage => "case3-porous-image",
            Preset::Case4Superres => "case4-superres",
            Preset::Case5WssLine => "case5-wss-line",
            Preset::Case6Local => "case6-local",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn spec(self) -> LibrarySpec {
        let (task, beta_min, beta_max, m_beta, squared_gaussian) = match self {
            Preset::Case1Mnist => (TaskKind::ImageToScalar, 0.1, 10.0, 10, false),
            Preset::Case2PorousScalar => (TaskKind::ImageToScalar, 0.1, 10.0, 20, true),
            Preset::Case3PorousImage => (TaskKind::ImageToImage, 0.2, 1.5, 120, false),
            Preset::Case4Superres => (TaskKind::ImageToImage, 0.2, 0.4, 7, false),
            Preset::Case5WssLine => (TaskKind::ImageToLine, 0.1, 1.9, 120, false),
            Preset::Case6Local => (TaskKind::ImageToImage, 0.2, 1.5, 20, false),
        };
        LibrarySpec {
            task,
            beta_min,
            beta_max,
            m_beta,
            families: None,
            squared_gaussian,
            indicator: IndicatorMode::Local,
            bias: true,
        }
    }

    /// Whether the reference problem normalizes its fields.
    pub fn normalizes(self) -> bool {
        self != Preset::Case1Mnist
    }
}

impl LibrarySpec {
    pub fn preset(p: Preset) -> LibrarySpec {
        p.spec()
    }

    fn selected_families(&self) -> Result<Vec<u32>> {
        let table = family_table(self.task);
        let selected: Vec<u32> = match &self.families {
            Some(list) => {
                let mut v = list.clone();
                v.sort_unstable();
                v.dedup();
                if let Some(&bad) = v.iter().find(|&&i| i as usize >= table.len()) {
                    return Err(FlmError::InvalidArgument(format!(
                        "family index {bad} out of range for {} (0..{})",
                        self.task,
                        table.len()
                    )));
                }
                v
            }
            None => (0..table.len() as u32)
                .filter(|&i| {
                    self.task != TaskKind::ImageToScalar
                        || i != SCALAR_SQUARED_GAUSSIAN
                        || self.squared_gaussian
                })
                .collect(),
        };
        if selected.is_empty() {
            return Err(FlmError::InvalidArgument("empty family selection".into()));
        }
        Ok(selected)
    }
}

/// Enumerates the library: β-free families once, β-dependent families once
/// per bandwidth, then the bias term last.
pub fn build_library(spec: &LibrarySpec) -> Result<Vec<TermSpec>> {
    let betas = bandwidth_grid(spec.beta_min, spec.beta_max, spec.m_beta)?;
    let table = family_table(spec.task);
    let mut terms = Vec::new();
    for idx in spec.selected_families()? {
        let def = table[idx as usize];
        let template = TermSpec {
            task: spec.task,
            family_index: idx,
            lifting: def.lifting,
            kernel: def.kernel,
            outer: def.outer,
            beta: None,
            is_bias: false,
            indicator: spec.indicator,
        };
        if template.needs_beta() {
            terms.extend(betas.iter().map(|&b| TermSpec {
                beta: Some(b),
                ..template
            }));
        } else {
            terms.push(template);
        }
    }
    if spec.bias {
        terms.push(TermSpec::bias(spec.task));
    }
    Ok(terms)
}

/// An input field prepared for repeated term evaluation: node coordinates
/// and quadrature-weighted lifted values are computed once.
#[derive(Debug, Clone)]
pub struct PreparedInput<'a> {
    grid: Grid2D,
    xs: Vec<f64>,
    ys: Vec<f64>,
    weights: Cow<'a, [f64]>,
    f: &'a [f64],
    weight_sum: f64,
    f_min: f64,
    f_max: f64,
    w_f: Vec<f64>,
    w_f2: Vec<f64>,
    w_tanh: Vec<f64>,
}

impl<'a> PreparedInput<'a> {
    pub fn new(field: &'a Field2D, weights: &'a [f64]) -> Result<Self> {
        Self::build(field, Cow::Borrowed(weights))
    }

    /// Uses the midpoint weights of the field's own grid.
    pub fn with_midpoint_weights(field: &'a Field2D) -> Result<Self> {
        Self::build(field, Cow::Owned(quadrature_weights(field.grid())))
    }

    fn build(field: &'a Field2D, weights: Cow<'a, [f64]>) -> Result<Self> {
        let f = field.values();
        if weights.len() != f.len() {
            return Err(FlmError::LengthMismatch {
                expected: f.len(),
                actual: weights.len(),
                context: "quadrature weights".into(),
            });
        }
        let grid = *field.grid();
        let (f_min, f_max) = f
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let w_f = f.iter().zip(weights.iter()).map(|(v, w)| w * v).collect();
        let w_f2 = f.iter().zip(weights.iter()).map(|(v, w)| w * v * v).collect();
        let w_tanh = f.iter().zip(weights.iter()).map(|(v, w)| w * v.tanh()).collect();
        Ok(PreparedInput {
            grid,
            xs: grid.xs(),
            ys: grid.ys(),
            weight_sum: csum(weights.iter().copied()),
            weights,
            f,
            f_min,
            f_max,
            w_f,
            w_f2,
            w_tanh,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn lifted(&self, term: &TermSpec) -> Result<Cow<'_, [f64]>> {
        let nx = self.grid.nx();
        let coord = |g: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            self.w_f
                .iter()
                .enumerate()
                .map(|(k, wf)| wf * g(self.xs[k % nx], self.ys[k / nx]))
                .collect()
        };
        Ok(match term.lifting {
            Lifting::Identity => Cow::Borrowed(&self.w_f),
            Lifting::SquareF => Cow::Borrowed(&self.w_f2),
            Lifting::TanhF => Cow::Borrowed(&self.w_tanh),
            Lifting::CoordZeta => Cow::Owned(coord(&|z, _| z)),
            Lifting::CoordEta => Cow::Owned(coord(&|_, e| e)),
            Lifting::CoordZeta2 => Cow::Owned(coord(&|z, _| z * z)),
            Lifting::CoordEta2 => Cow::Owned(coord(&|_, e| e * e)),
            Lifting::CoordZetaEta => Cow::Owned(coord(&|z, e| z * e)),
            Lifting::ExpF => {
                if self.f_max > MAX_EXPONENT {
                    return Err(FlmError::Overflow {
                        term: render_term(term),
                        exponent: self.f_max,
                    });
                }
                Cow::Owned(
                    self.f
                        .iter()
                        .zip(self.weights.iter())
                        .map(|(v, w)| w * v.exp())
                        .collect(),
                )
            }
            Lifting::ExpNegFOverBeta => {
                let beta = term.beta.expect("validated term");
                let exponent = -self.f_min / beta;
                if exponent > MAX_EXPONENT {
                    return Err(FlmError::Overflow {
                        term: render_term(term),
                        exponent,
                    });
                }
                Cow::Owned(
                    self.f
                        .iter()
                        .zip(self.weights.iter())
                        .map(|(v, w)| w * (-v / beta).exp())
                        .collect(),
                )
            }
        })
    }

    fn kernel_sum(&self, term: &TermSpec, lifted: &[f64], x: f64, y: f64) -> f64 {
        let nx = self.grid.nx();
        let rows = lifted.chunks_exact(nx);
        let beta = term.beta.unwrap_or(1.0);
        match term.kernel {
            KernelFamily::Unit => csum(lifted.iter().copied()),
            KernelFamily::DomainAverage => csum(lifted.iter().copied()) / self.weight_sum,
            KernelFamily::GaussianIso => {
                let gx: Vec<f64> = self.xs.iter().map(|z| (-(x - z) * (x - z) / beta).exp()).collect();
                csum(rows.zip(&self.ys).map(|(row, e)| {
                    let gy = (-(y - e) * (y - e) / beta).exp();
                    gy * csum(row.iter().zip(&gx).map(|(l, g)| l * g))
                }))
            }
            KernelFamily::SepExpX => {
                let gx: Vec<f64> = self.xs.iter().map(|z| ((x - z) / beta).exp()).collect();
                csum(rows.map(|row| csum(row.iter().zip(&gx).map(|(l, g)| l * g))))
            }
            KernelFamily::SepExpY => csum(
                rows.zip(&self.ys)
                    .map(|(row, e)| ((y - e) / beta).exp() * csum(row.iter().copied())),
            ),
            KernelFamily::ExpDistance => {
                let dx2: Vec<f64> = self.xs.iter().map(|z| (x - z) * (x - z)).collect();
                csum(rows.zip(&self.ys).map(|(row, e)| {
                    let dy2 = (y - e) * (y - e);
                    csum(
                        row.iter()
                            .zip(&dx2)
                            .map(|(l, d)| l * (-(d + dy2).sqrt() / beta).exp()),
                    )
                }))
            }
            KernelFamily::IndicatorDisk => {
                let r2 = 0.25 * beta * beta;
                let inside = term.indicator == IndicatorMode::Local;
                let dx2: Vec<f64> = self.xs.iter().map(|z| (x - z) * (x - z)).collect();
                csum(rows.zip(&self.ys).map(|(row, e)| {
                    let dy2 = (y - e) * (y - e);
                    csum(
                        row.iter()
                            .zip(&dx2)
                            .filter(|(_, d)| (*d + dy2 <= r2) == inside)
                            .map(|(l, _)| *l),
                    )
                }))
            }
        }
    }

    /// Evaluates `term` at output point `(x, y)`. Scalar terms use `(0, 0)`
    /// and line terms `(x, 0)`; callers should go through
    /// [`eval_term_scalar`], [`eval_term_line`] or [`eval_term_image`] unless
    /// they manage the convention themselves.
    pub fn eval_at(&self, term: &TermSpec, x: f64, y: f64) -> Result<f64> {
        if term.is_bias {
            return Ok(1.0);
        }
        let lifted = self.lifted(term)?;
        let inner = self.kernel_sum(term, &lifted, x, y);
        let value = match term.outer {
            OuterNonlinearity::Identity => inner,
            OuterNonlinearity::Square => inner * inner,
            OuterNonlinearity::Tanh => inner.tanh(),
            OuterNonlinearity::Exp => {
                if inner.abs() > MAX_EXPONENT {
                    return Err(FlmError::Overflow {
                        term: render_term(term),
                        exponent: inner,
                    });
                }
                inner.exp()
            }
        };
        if !value.is_finite() {
            return Err(FlmError::NonFinite {
                value,
                context: format!("term `{}`", render_term(term)),
            });
        }
        Ok(value)
    }

    pub fn eval(&self, term: &TermSpec, point: OutputPoint) -> Result<f64> {
        let (x, y) = point.coords();
        self.eval_at(term, x, y)
    }
}

/// Where an output value is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputPoint {
    Scalar,
    Line(f64),
    Image(f64, f64),
}

impl OutputPoint {
    pub fn coords(self) -> (f64, f64) {
        match self {
            OutputPoint::Scalar => (0.0, 0.0),
            OutputPoint::Line(x) => (x, 0.0),
            OutputPoint::Image(x, y) => (x, y),
        }
    }

    pub fn task(self) -> TaskKind {
        match self {
            OutputPoint::Scalar => TaskKind::ImageToScalar,
            OutputPoint::Line(_) => TaskKind::ImageToLine,
            OutputPoint::Image(..) => TaskKind::ImageToImage,
        }
    }
}

fn expect_task(term: &TermSpec, task: TaskKind) -> Result<()> {
    if term.task != task {
        return Err(FlmError::TaskMismatch {
            expected: task,
            actual: term.task,
        });
    }
    Ok(())
}

pub fn eval_term_scalar(term: &TermSpec, f: &Field2D, weights: &[f64]) -> Result<f64> {
    expect_task(term, TaskKind::ImageToScalar)?;
    PreparedInput::new(f, weights)?.eval(term, OutputPoint::Scalar)
}

pub fn eval_term_line(term: &TermSpec, f: &Field2D, weights: &[f64], out_x: f64) -> Result<f64> {
    expect_task(term, TaskKind::ImageToLine)?;
    PreparedInput::new(f, weights)?.eval(term, OutputPoint::Line(out_x))
}

pub fn eval_term_image(
    term: &TermSpec,
    f: &Field2D,
    weights: &[f64],
    out_x: f64,
    out_y: f64,
) -> Result<f64> {
    expect_task(term, TaskKind::ImageToImage)?;
    PreparedInput::new(f, weights)?.eval(term, OutputPoint::Image(out_x, out_y))
}

/// Six significant digits with trailing zeros removed.
pub(crate) fn short_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.5e}")
    }
}

/// Human-readable integral expression, unique within a library.
pub fn render_term(term: &TermSpec) -> String {
    if term.is_bias {
        return "1".into();
    }
    let b = term.beta.map(short_num).unwrap_or_default();
    let (dx, dy, dx2, dy2) = match term.task {
        TaskKind::ImageToScalar => ("-ζ", "-η", "ζ^2", "η^2"),
        TaskKind::ImageToLine => ("(x-ζ)", "-η", "(x-ζ)^2", "η^2"),
        TaskKind::ImageToImage => ("(x-ζ)", "(y-η)", "(x-ζ)^2", "(y-η)^2"),
    };
    let lifting = match term.lifting {
        Lifting::Identity => "f(ζ,η)".to_string(),
        Lifting::CoordZeta => "ζ f(ζ,η)".into(),
        Lifting::CoordEta => "η f(ζ,η)".into(),
        Lifting::CoordZeta2 => "ζ^2 f(ζ,η)".into(),
        Lifting::CoordEta2 => "η^2 f(ζ,η)".into(),
        Lifting::CoordZetaEta => "ζη f(ζ,η)".into(),
        Lifting::SquareF => "f(ζ,η)^2".into(),
        Lifting::TanhF => "tanh(f(ζ,η))".into(),
        Lifting::ExpF => "exp(f(ζ,η))".into(),
        Lifting::ExpNegFOverBeta => format!("exp(-f(ζ,η)/{b})"),
    };
    let sep = |d: &str| {
        if let Some(stripped) = d.strip_prefix('-') {
            format!("exp(-{stripped}/{b})")
        } else {
            format!("exp({d}/{b})")
        }
    };
    let inner = match term.kernel {
        KernelFamily::Unit => format!("∬ {lifting} dζdη"),
        KernelFamily::DomainAverage => format!("∬ {lifting} dζdη / ∬ dζdη"),
        KernelFamily::GaussianIso => format!("∬ exp(-({dx2}+{dy2})/{b}) {lifting} dζdη"),
        KernelFamily::ExpDistance => format!("∬ exp(-√({dx2}+{dy2})/{b}) {lifting} dζdη"),
        KernelFamily::SepExpX => format!("∬ {} {lifting} dζdη", sep(dx)),
        KernelFamily::SepExpY => format!("∬ {} {lifting} dζdη", sep(dy)),
        KernelFamily::IndicatorDisk => {
            let r = short_num(term.beta.unwrap_or(0.0) / 2.0);
            let op = match term.indicator {
                IndicatorMode::Local => "≤",
                IndicatorMode::AsPrinted => ">",
            };
            format!("∬ 1[√({dx2}+{dy2}) {op} {r}] {lifting} dζdη")
        }
    };
    match term.outer {
        OuterNonlinearity::Identity => inner,
        OuterNonlinearity::Square => format!("({inner})^2"),
        OuterNonlinearity::Tanh => format!("tanh({inner})"),
        OuterNonlinearity::Exp => format!("exp({inner})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn scalar_term(family: u32, beta: Option<f64>) -> TermSpec {
        let d = SCALAR_FAMILIES[family as usize];
        TermSpec::new(TaskKind::ImageToScalar, family, d.lifting, d.kernel, d.outer, beta).unwrap()
    }

    fn field_term(task: TaskKind, family: u32, beta: Option<f64>) -> TermSpec {
        let d = FIELD_FAMILIES[family as usize];
        TermSpec::new(task, family, d.lifting, d.kernel, d.outer, beta).unwrap()
    }

    /// Brute-force 512x512 midpoint oracle evaluated cell by cell.
    fn oracle(n: usize, integrand: impl Fn(f64, f64) -> f64) -> f64 {
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                s += integrand((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            }
        }
        s * h * h
    }

    #[test]
    fn bandwidth_grids() {
        let g = bandwidth_grid(0.1, 10.0, 10).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[9], 10.0);
        for w in g.windows(2) {
            assert!((w[1] - w[0] - 1.1).abs() < 1e-12);
        }
        let g = bandwidth_grid(0.2, 0.4, 7).unwrap();
        assert!((g[1] - g[0] - 0.2 / 6.0).abs() < 1e-12);
        assert_eq!(bandwidth_grid(1.0, 2.0, 1).unwrap(), vec![1.5]);
        assert!(bandwidth_grid(2.0, 1.0, 3).is_err());
        assert!(bandwidth_grid(0.1, 1.0, 0).is_err());
        assert!(bandwidth_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn preset_cardinalities() {
        let expected = [58, 128, 2162, 128, 2162, 362];
        for (p, n) in Preset::ALL.into_iter().zip(expected) {
            let lib = build_library(&p.spec()).unwrap();
            assert_eq!(lib.len(), n, "{}", p.name());
            assert!(lib.last().unwrap().is_bias);
            assert_eq!(lib.iter().filter(|t| t.is_bias).count(), 1);
        }
    }

    #[test]
    fn squared_gaussian_only_when_flagged() {
        let case1 = build_library(&Preset::Case1Mnist.spec()).unwrap();
        assert!(case1.iter().all(|t| t.family_index != SCALAR_SQUARED_GAUSSIAN));
        let case2 = build_library(&Preset::Case2PorousScalar.spec()).unwrap();
        assert_eq!(
            case2.iter().filter(|t| t.family_index == SCALAR_SQUARED_GAUSSIAN).count(),
            20
        );
    }

    #[test]
    fn family_mask_and_empty_selection() {
        let mut spec = Preset::Case4Superres.spec();
        spec.families = Some(vec![0, 1]);
        let lib = build_library(&spec).unwrap();
        assert_eq!(lib.len(), 1 + 7 + 1);
        spec.families = Some(vec![]);
        assert!(build_library(&spec).is_err());
        spec.families = Some(vec![99]);
        assert!(build_library(&spec).is_err());
    }

    #[test]
    fn term_identities_and_renderings_are_unique() {
        for p in Preset::ALL {
            let lib = build_library(&p.spec()).unwrap();
            let keys: HashSet<_> = lib.iter().map(TermSpec::key).collect();
            assert_eq!(keys.len(), lib.len());
            let rendered: HashSet<_> = lib.iter().map(render_term).collect();
            assert_eq!(rendered.len(), lib.len(), "{}", p.name());
        }
    }

    #[test]
    fn rendering_examples() {
        assert_eq!(render_term(&TermSpec::bias(TaskKind::ImageToScalar)), "1");
        assert_eq!(render_term(&scalar_term(1, None)), "∬ ζ f(ζ,η) dζdη");
        assert_eq!(
            render_term(&field_term(TaskKind::ImageToImage, 1, Some(0.35))),
            "∬ exp(-((x-ζ)^2+(y-η)^2)/0.35) f(ζ,η) dζdη"
        );
        assert_eq!(
            render_term(&scalar_term(9, Some(0.5))),
            "∬ exp(-ζ/0.5) f(ζ,η) dζdη"
        );
        assert_eq!(
            render_term(&field_term(TaskKind::ImageToLine, 10, Some(1.0))),
            "tanh(∬ exp(-η/1) f(ζ,η) dζdη)"
        );
    }

    #[test]
    fn beta_presence_is_validated() {
        assert!(TermSpec::new(
            TaskKind::ImageToScalar,
            7,
            Lifting::Identity,
            KernelFamily::GaussianIso,
            OuterNonlinearity::Identity,
            None
        )
        .is_err());
        assert!(TermSpec::new(
            TaskKind::ImageToScalar,
            0,
            Lifting::Identity,
            KernelFamily::Unit,
            OuterNonlinearity::Identity,
            Some(1.0)
        )
        .is_err());
        assert!(TermSpec::new(
            TaskKind::ImageToScalar,
            11,
            Lifting::ExpNegFOverBeta,
            KernelFamily::Unit,
            OuterNonlinearity::Identity,
            Some(-1.0)
        )
        .is_err());
    }

    #[test]
    fn plugin_bandwidths() {
        assert!((plugin_bandwidth(28).unwrap() - 0.368).abs() < 1e-3);
        assert!((plugin_bandwidth(1024).unwrap() - 0.125).abs() < 1e-3);
        assert!(plugin_bandwidth(1).is_err());
    }

    #[test]
    fn scalar_examples() {
        let g = Grid2D::square(28).unwrap();
        let w = quadrature_weights(&g);
        let one = Field2D::constant(g, 1.0).unwrap();
        let two = Field2D::constant(g, 2.0).unwrap();
        assert!((eval_term_scalar(&scalar_term(1, None), &one, &w).unwrap() - 0.5).abs() < 1e-15);
        assert!((eval_term_scalar(&scalar_term(6, None), &two, &w).unwrap() - 4.0).abs() < 1e-14);
        let gauss = eval_term_scalar(&scalar_term(7, Some(1.0)), &one, &w).unwrap();
        let reference = oracle(512, |z, e| (-(z * z + e * e)).exp());
        assert!((reference - 0.5577).abs() < 1e-4);
        assert!((gauss - reference).abs() < 1e-3);
        let bias = TermSpec::bias(TaskKind::ImageToScalar);
        assert_eq!(eval_term_scalar(&bias, &two, &w).unwrap(), 1.0);
    }

    #[test]
    fn image_examples() {
        let g = Grid2D::square(28).unwrap();
        let w = quadrature_weights(&g);
        let c = Field2D::constant(g, 3.25).unwrap();
        let zero = Field2D::constant(g, 0.0).unwrap();
        let avg = field_term(TaskKind::ImageToImage, 0, None);
        let gauss = field_term(TaskKind::ImageToImage, 1, Some(0.5));
        for (x, y) in [(0.1, 0.9), (0.5, 0.5), (0.99, 0.01)] {
            assert!((eval_term_image(&avg, &c, &w, x, y).unwrap() - 3.25).abs() < 1e-14);
            assert_eq!(eval_term_image(&gauss, &zero, &w, x, y).unwrap(), 0.0);
        }
        let one = Field2D::constant(g, 1.0).unwrap();
        let sep_x = field_term(TaskKind::ImageToImage, 7, Some(1.0));
        let v = eval_term_image(&sep_x, &one, &w, 0.5, 0.3).unwrap();
        let closed = 0.5f64.exp() * (1.0 - (-1.0f64).exp());
        assert!((closed - 1.0422).abs() < 1e-4);
        assert!((v - closed).abs() < 1e-3);
        let reference = oracle(512, |z, _| (0.5 - z).exp());
        assert!((reference - closed).abs() < 1e-5);
    }

    #[test]
    fn line_examples() {
        let g = Grid2D::square(28).unwrap();
        let w = quadrature_weights(&g);
        let c = Field2D::constant(g, 0.7).unwrap();
        let avg = field_term(TaskKind::ImageToLine, 0, None);
        let e_eta = field_term(TaskKind::ImageToLine, 8, Some(1.0));
        let tanh_eta = field_term(TaskKind::ImageToLine, 10, Some(1.0));
        let one = Field2D::constant(g, 1.0).unwrap();
        let zero = Field2D::constant(g, 0.0).unwrap();
        let closed = 1.0 - (-1.0f64).exp();
        for x in [0.05, 0.5, 0.95] {
            assert!((eval_term_line(&avg, &c, &w, x).unwrap() - 0.7).abs() < 1e-14);
            assert!((eval_term_line(&e_eta, &one, &w, x).unwrap() - closed).abs() < 1e-3);
            assert_eq!(eval_term_line(&tanh_eta, &zero, &w, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn task_is_checked() {
        let g = Grid2D::square(4).unwrap();
        let w = quadrature_weights(&g);
        let f = Field2D::constant(g, 1.0).unwrap();
        let t = field_term(TaskKind::ImageToImage, 0, None);
        assert!(matches!(
            eval_term_scalar(&t, &f, &w),
            Err(FlmError::TaskMismatch { .. })
        ));
    }

    #[test]
    fn exp_overflow_is_reported() {
        let g = Grid2D::square(4).unwrap();
        let w = quadrature_weights(&g);
        let big = Field2D::constant(g, 800.0).unwrap();
        let exp_lift = field_term(TaskKind::ImageToImage, 6, Some(1.0));
        let err = eval_term_image(&exp_lift, &big, &w, 0.5, 0.5).unwrap_err();
        assert!(matches!(err, FlmError::Overflow { .. }));
        let exp_outer = field_term(TaskKind::ImageToImage, 5, Some(10.0));
        let huge = Field2D::constant(g, 1e4).unwrap();
        assert!(matches!(
            eval_term_image(&exp_outer, &huge, &w, 0.5, 0.5),
            Err(FlmError::Overflow { .. })
        ));
    }

    #[test]
    fn indicator_modes_partition_the_domain() {
        let g = Grid2D::square(20).unwrap();
        let w = quadrature_weights(&g);
        let f = Field2D::from_fn(g, |x, y| 1.0 + x * y).unwrap();
        let mut local = field_term(TaskKind::ImageToImage, 3, Some(0.6));
        let mut printed = local;
        printed.indicator = IndicatorMode::AsPrinted;
        local.indicator = IndicatorMode::Local;
        let total = eval_term_image(&field_term(TaskKind::ImageToImage, 0, None), &f, &w, 0.0, 0.0)
            .unwrap();
        for (x, y) in [(0.2, 0.3), (0.5, 0.5)] {
            let a = eval_term_image(&local, &f, &w, x, y).unwrap();
            let b = eval_term_image(&printed, &f, &w, x, y).unwrap();
            assert!((a + b - total).abs() < 1e-13);
            assert!(a > 0.0 && b > 0.0);
        }
        // the truncation window follows the output point
        let near = eval_term_image(&local, &f, &w, 0.1, 0.1).unwrap();
        let center = eval_term_image(&local, &f, &w, 0.5, 0.5).unwrap();
        assert!(near < center);
    }

    #[test]
    fn line_indicator_slides_with_x() {
        let g = Grid2D::square(20).unwrap();
        let w = quadrature_weights(&g);
        let f = Field2D::from_fn(g, |x, _| x).unwrap();
        let t = field_term(TaskKind::ImageToLine, 3, Some(0.8));
        let left = eval_term_line(&t, &f, &w, 0.1).unwrap();
        let right = eval_term_line(&t, &f, &w, 0.9).unwrap();
        assert!(right > left);
        // brute force over cells with (x-ζ)^2 + η^2 <= 0.16
        let mut s = 0.0;
        for k in 0..g.len() {
            let (z, e) = g.node(k);
            if (0.9 - z) * (0.9 - z) + e * e <= 0.16 {
                s += f.values()[k] * w[k];
            }
        }
        assert!((right - s).abs() < 1e-15);
    }

    #[test]
    fn kernels_match_fine_quadrature_oracle() {
        let smooth = |x: f64, y: f64| 1.0 + 0.5 * (3.0 * x).sin() * (2.0 * y).cos();
        let (x0, y0) = (0.3, 0.6);
        let cases: Vec<(TermSpec, Box<dyn Fn(f64, f64) -> f64>)> = vec![
            (
                field_term(TaskKind::ImageToImage, 1, Some(0.4)),
                Box::new(move |z, e| (-((x0 - z).powi(2) + (y0 - e).powi(2)) / 0.4).exp() * smooth(z, e)),
            ),
            (
                field_term(TaskKind::ImageToImage, 2, Some(0.4)),
                Box::new(move |z, e| {
                    (-((x0 - z).powi(2) + (y0 - e).powi(2)).sqrt() / 0.4).exp() * smooth(z, e)
                }),
            ),
            (
                field_term(TaskKind::ImageToImage, 7, Some(0.4)),
                Box::new(move |z, e| ((x0 - z) / 0.4).exp() * smooth(z, e)),
            ),
            (
                field_term(TaskKind::ImageToImage, 12, Some(0.4)),
                Box::new(move |z, e| ((y0 - e) / 0.4).exp() * smooth(z, e).tanh()),
            ),
        ];
        for (term, integrand) in cases {
            let reference = oracle(512, &integrand);
            for (n, tol) in [(28, 2e-2), (56, 5e-3)] {
                let g = Grid2D::square(n).unwrap();
                let f = Field2D::from_fn(g, smooth).unwrap();
                let v = eval_term_image(&term, &f, &quadrature_weights(&g), x0, y0).unwrap();
                assert!((v - reference).abs() < tol, "{term} at {n}: {v} vs {reference}");
            }
        }
    }

    #[test]
    fn gaussian_is_translation_consistent() {
        let g = Grid2D::square(28).unwrap();
        let w = quadrature_weights(&g);
        let h = 1.0 / 28.0;
        let bump = |x: f64, y: f64| {
            let r2 = (x - 0.45).powi(2) + (y - 0.5).powi(2);
            if r2 < 0.04 {
                (0.04 - r2).powi(2)
            } else {
                0.0
            }
        };
        let f = Field2D::from_fn(g, bump).unwrap();
        let shifted = Field2D::from_fn(g, |x, y| bump(x - h, y)).unwrap();
        let t = field_term(TaskKind::ImageToImage, 1, Some(0.3));
        for (x, y) in [(0.5, 0.5), (0.3, 0.7), (0.8, 0.2)] {
            let a = eval_term_image(&t, &shifted, &w, x, y).unwrap();
            let b = eval_term_image(&t, &f, &w, x - h, y).unwrap();
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }
}
