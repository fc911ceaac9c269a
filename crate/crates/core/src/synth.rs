//! Synthetic data: permeability families, a finite-volume Darcy flow oracle,
//! smooth random fields and exact term-superposition datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlmError, Result};
use crate::fields::{Dataset, Field1D, Field2D, Grid2D, Output, Sample, TaskKind};
use crate::library::{OutputPoint, PreparedInput, TermSpec};

pub const DEFAULT_VISCOSITY: f64 = 10.0;
pub const DEFAULT_BACKGROUND_PERMEABILITY: f64 = 20.0;
pub const MAX_SMOOTH_MODES: usize = 6;

/// Disk-switched permeability: `0.1 e^{Ax} + 1` inside the disk of radius `r`
/// centred at `(0.5, y0)`, zero outside.
pub fn gen_permeability_case2(a: f64, y0: f64, r: f64, grid: Grid2D) -> Result<Field2D> {
    if !(r > 0.0) {
        return Err(FlmError::InvalidArgument(format!("disk radius must be positive, got {r}")));
    }
    Field2D::from_fn(grid, |x, y| {
        if ((x - 0.5).powi(2) + (y - y0).powi(2)).sqrt() <= r {
            0.1 * (a * x).exp() + 1.0
        } else {
            0.0
        }
    })
}

/// `exp(-4Ax) |sin(2πx) cos(2πBy)| + 1`.
pub fn gen_permeability_case3(a: f64, b: f64, grid: Grid2D) -> Result<Field2D> {
    use std::f64::consts::PI;
    Field2D::from_fn(grid, |x, y| {
        (-4.0 * a * x).exp() * ((2.0 * PI * x).sin() * (2.0 * PI * b * y).cos()).abs() + 1.0
    })
}

/// Truncated cosine series `offset + Σ c_pq cos(pπx) cos(qπy)` for
/// `p, q < max_modes`, with `c_pq` uniform in `[-1, 1]`. Without an explicit
/// offset the series is shifted by `Σ|c_pq|`, which keeps it non-negative.
pub fn random_smooth_field(seed: u64, max_modes: usize, offset: Option<f64>, grid: Grid2D) -> Result<Field2D> {
    smooth_field_from_rng(&mut ChaCha8Rng::seed_from_u64(seed), max_modes, offset, grid)
}

fn smooth_field_from_rng(
    rng: &mut ChaCha8Rng,
    max_modes: usize,
    offset: Option<f64>,
    grid: Grid2D,
) -> Result<Field2D> {
    use std::f64::consts::PI;
    if max_modes > MAX_SMOOTH_MODES {
        return Err(FlmError::InvalidArgument(format!(
            "max_modes must be at most {MAX_SMOOTH_MODES}, got {max_modes}"
        )));
    }
    let coeffs: Vec<f64> = (0..max_modes * max_modes).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let shift = offset.unwrap_or_else(|| coeffs.iter().map(|c| c.abs()).sum());
    let cx: Vec<Vec<f64>> = (0..max_modes)
        .map(|p| grid.xs().iter().map(|x| (p as f64 * PI * x).cos()).collect())
        .collect();
    let cy: Vec<Vec<f64>> = (0..max_modes)
        .map(|q| grid.ys().iter().map(|y| (q as f64 * PI * y).cos()).collect())
        .collect();
    let mut values = vec![shift; grid.len()];
    for (k, v) in values.iter_mut().enumerate() {
        let (i, j) = (k % grid.nx(), k / grid.nx());
        for p in 0..max_modes {
            for q in 0..max_modes {
                *v += coeffs[p * max_modes + q] * cx[p][i] * cy[q][j];
            }
        }
    }
    Field2D::new(grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub fn fixed(v: f64) -> Self {
        Range { min: v, max: v }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(FlmError::InvalidArgument(format!(
                "invalid range for {name}: [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.min == self.max {
            // consume a draw so streams stay aligned
            let _: f64 = rng.gen();
            self.min
        } else {
            rng.gen_range(self.min..=self.max)
        }
    }

    pub fn disjoint(&self, other: &Range) -> bool {
        self.max < other.min || other.max < self.min
    }
}

/// How probe and generator inputs are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InputSampler {
    SmoothRandom { max_modes: usize, offset: Option<f64> },
    Case2 { a: Range, y: Range, r: Range },
    Case3 { a: Range, b: Range },
    Constant { value: f64 },
}

impl InputSampler {
    pub fn validate(&self) -> Result<()> {
        match self {
            InputSampler::SmoothRandom { max_modes, .. } if *max_modes > MAX_SMOOTH_MODES => Err(
                FlmError::InvalidArgument(format!("max_modes must be at most {MAX_SMOOTH_MODES}")),
            ),
            InputSampler::SmoothRandom { .. } => Ok(()),
            InputSampler::Case2 { a, y, r } => {
                a.validate("A")?;
                y.validate("Y")?;
                r.validate("R")?;
                if r.min <= 0.0 {
                    return Err(FlmError::InvalidArgument("R must be positive".into()));
                }
                Ok(())
            }
            InputSampler::Case3 { a, b } => {
                a.validate("A")?;
                b.validate("B")
            }
            InputSampler::Constant { value } if value.is_finite() => Ok(()),
            InputSampler::Constant { value } => Err(FlmError::InvalidArgument(format!(
                "constant input must be finite, got {value}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InputSampler::SmoothRandom { .. } => "smooth_random",
            InputSampler::Case2 { .. } => "case2",
            InputSampler::Case3 { .. } => "case3",
            InputSampler::Constant { .. } => "constant",
        }
    }

    fn ranges(&self) -> Vec<(&'static str, Range)> {
        match self {
            InputSampler::Case2 { a, y, r } => vec![("A", *a), ("Y", *y), ("R", *r)],
            InputSampler::Case3 { a, b } => vec![("A", *a), ("B", *b)],
            _ => Vec::new(),
        }
    }

    /// Draws input `index` of a plan seeded with `seed`. Each index owns an
    /// independent random stream, so draws can run in any order.
    pub fn draw(&self, seed: u64, index: usize, grid: Grid2D) -> Result<(Field2D, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        match *self {
            InputSampler::SmoothRandom { max_modes, offset } => {
                Ok((smooth_field_from_rng(&mut rng, max_modes, offset, grid)?, Vec::new()))
            }
            InputSampler::Case2 { a, y, r } => {
                let p = [a.draw(&mut rng), y.draw(&mut rng), r.draw(&mut rng)];
                Ok((gen_permeability_case2(p[0], p[1], p[2], grid)?, p.to_vec()))
            }
            InputSampler::Case3 { a, b } => {
                let p = [a.draw(&mut rng), b.draw(&mut rng)];
                Ok((gen_permeability_case3(p[0], p[1], grid)?, p.to_vec()))
            }
            InputSampler::Constant { value } => Ok((Field2D::constant(grid, value)?, Vec::new())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Validation,
    Ood,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Ood => "ood",
        }
    }

    pub fn parse(s: &str) -> Option<SplitTag> {
        match s {
            "train" => Some(SplitTag::Train),
            "validation" | "val" => Some(SplitTag::Validation),
            "ood" => Some(SplitTag::Ood),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSplit {
    pub sampler: InputSampler,
    pub samples: usize,
    pub seed: u64,
    pub split: SplitTag,
}

impl ParamSplit {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(FlmError::InvalidArgument("sample count must be at least 1".into()));
        }
        self.sampler.validate()
    }

    /// An OOD split must leave the training range in at least one parameter.
    pub fn check_ood_against(&self, train: &ParamSplit) -> Result<()> {
        let mine = self.sampler.ranges();
        let theirs = train.sampler.ranges();
        if mine.is_empty() || mine.len() != theirs.len() || self.sampler.name() != train.sampler.name() {
            return Err(FlmError::InvalidArgument(
                "OOD check needs two parameter splits of the same permeability family".into(),
            ));
        }
        if mine.iter().zip(&theirs).any(|((_, a), (_, b))| a.disjoint(b)) {
            Ok(())
        } else {
            Err(FlmError::InvalidArgument(
                "OOD split overlaps the training split in every parameter".into(),
            ))
        }
    }
}

/// Steady pure-Darcy problem on the unit square: `p = 1` at `x = 0`, `p = 0`
/// at `x = 1`, no flux through `y = 0` and `y = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DarcyProblem {
    pub k: Field2D,
    pub mu: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl DarcyProblem {
    pub fn new(k: Field2D) -> Self {
        DarcyProblem {
            k,
            mu: DEFAULT_VISCOSITY,
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarcySolution {
    pub pressure: Field2D,
    pub speed: Field2D,
    pub vmax: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Total flux entering at `x = 0` and leaving at `x = 1`.
    pub inlet_flux: f64,
    pub outlet_flux: f64,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

struct DarcyOperator {
    nx: usize,
    ny: usize,
    tx: Vec<f64>,
    ty: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
    diag: Vec<f64>,
}

impl DarcyOperator {
    fn new(k: &Field2D, mu: f64) -> Self {
        let g = k.grid();
        let (nx, ny) = (g.nx(), g.ny());
        let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let mut tx = vec![0.0; (nx - 1) * ny];
        let mut ty = vec![0.0; nx * (ny - 1)];
        for j in 0..ny {
            for i in 0..nx - 1 {
                tx[j * (nx - 1) + i] = hy / hx * harmonic(k.get(i, j), k.get(i + 1, j)) / mu;
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx {
                ty[j * nx + i] = hx / hy * harmonic(k.get(i, j), k.get(i, j + 1)) / mu;
            }
        }
        let left: Vec<f64> = (0..ny).map(|j| 2.0 * hy / hx * k.get(0, j) / mu).collect();
        let right: Vec<f64> = (0..ny).map(|j| 2.0 * hy / hx * k.get(nx - 1, j) / mu).collect();
        let mut op = DarcyOperator {
            nx,
            ny,
            tx,
            ty,
            left,
            right,
            diag: vec![0.0; nx * ny],
        };
        op.diag = op.diagonal();
        op
    }

    // sum of the transmissibilities of each cell
    fn diagonal(&self) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let mut d = 0.0;
                if i > 0 {
                    d += self.tx[j * (nx - 1) + i - 1];
                } else {
                    d += self.left[j];
                }
                if i + 1 < nx {
                    d += self.tx[j * (nx - 1) + i];
                } else {
                    d += self.right[j];
                }
                if j > 0 {
                    d += self.ty[(j - 1) * nx + i];
                }
                if j + 1 < ny {
                    d += self.ty[j * nx + i];
                }
                out[j * nx + i] = d;
            }
        }
        out
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let mut v = self.diag[c] * p[c];
                if i > 0 {
                    v -= self.tx[j * (nx - 1) + i - 1] * p[c - 1];
                }
                if i + 1 < nx {
                    v -= self.tx[j * (nx - 1) + i] * p[c + 1];
                }
                if j > 0 {
                    v -= self.ty[(j - 1) * nx + i] * p[c - nx];
                }
                if j + 1 < ny {
                    v -= self.ty[j * nx + i] * p[c + nx];
                }
                out[c] = v;
            }
        }
    }

    fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.nx * self.ny];
        for j in 0..self.ny {
            b[j * self.nx] = self.left[j];
        }
        b
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Derivative at node `i` of samples spaced `h` apart: central inside,
/// second-order one-sided at the ends.
fn derivative(v: &[f64], i: usize, h: f64) -> f64 {
    let n = v.len();
    if n == 2 {
        return (v[1] - v[0]) / h;
    }
    if i == 0 {
        (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
    } else {
        (v[i + 1] - v[i - 1]) / (2.0 * h)
    }
}

/// Cell-centred finite-volume solve of `∇·((k/μ)∇p) = 0`.
pub fn darcy_solve(problem: &DarcyProblem) -> Result<DarcySolution> {
    let k = &problem.k;
    let g = *k.grid();
    if let Some((index, &value)) = k.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(FlmError::NonPositivePermeability { index, value });
    }
    if !(problem.mu > 0.0) {
        return Err(FlmError::InvalidArgument(format!(
            "viscosity must be positive, got {}",
            problem.mu
        )));
    }
    let op = DarcyOperator::new(k, problem.mu);
    let n = g.len();
    let b = op.rhs();
    let b_norm = dot(&b, &b).sqrt();

    // initial guess p = 1 - x
    let mut p: Vec<f64> = (0..n).map(|c| 1.0 - g.node(c).0).collect();
    let mut ap = vec![0.0; n];
    op.apply(&p, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&op.diag).map(|(r, d)| r / d).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut residual = dot(&r, &r).sqrt() / b_norm;
    let mut iterations = 0;
    while residual > problem.tol {
        if iterations == problem.max_iter {
            return Err(FlmError::NoConvergence { iterations, residual });
        }
        iterations += 1;
        op.apply(&dir, &mut ap);
        let alpha = rz / dot(&dir, &ap);
        for c in 0..n {
            p[c] += alpha * dir[c];
            r[c] -= alpha * ap[c];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        for c in 0..n {
            z[c] = r[c] / op.diag[c];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for c in 0..n {
            dir[c] = z[c] + beta * dir[c];
        }
    }

    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let mut speed = vec![0.0; n];
    let mut column = vec![0.0; ny];
    for (c, s) in speed.iter_mut().enumerate() {
        let (i, j) = (c % nx, c / nx);
        let row = &p[j * nx..(j + 1) * nx];
        for (jj, v) in column.iter_mut().enumerate() {
            *v = p[jj * nx + i];
        }
        let dpdx = derivative(row, i, hx);
        let dpdy = derivative(&column, j, hy);
        *s = k.values()[c] / problem.mu * dpdx.hypot(dpdy);
    }
    let vmax = speed.iter().cloned().fold(0.0, f64::max);
    let inlet_flux = (0..ny).map(|j| op.left[j] * (1.0 - p[j * nx])).sum();
    let outlet_flux = (0..ny).map(|j| op.right[j] * p[j * nx + nx - 1]).sum();
    Ok(DarcySolution {
        pressure: Field2D::new(g, p)?,
        speed: Field2D::new(g, speed)?,
        vmax,
        residual,
        iterations,
        inlet_flux,
        outlet_flux,
    })
}

/// Net flux through the vertical cut between columns `i` and `i + 1`.
pub fn flux_through_cut(solution: &DarcySolution, k: &Field2D, mu: f64, i: usize) -> f64 {
    let g = k.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let p = solution.pressure.values();
    let scale = (1.0 / ny as f64) / (1.0 / nx as f64);
    (0..ny)
        .map(|j| {
            let t = scale * harmonic(k.get(i, j), k.get(i + 1, j)) / mu;
            t * (p[j * nx + i] - p[j * nx + i + 1])
        })
        .sum()
}

/// Physics settings for Darcy-backed datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarcySettings {
    pub mu: f64,
    /// Permeability used where the disk-switched family is zero.
    pub background: f64,
    pub tol: f64,
}

impl Default for DarcySettings {
    fn default() -> Self {
        DarcySettings {
            mu: DEFAULT_VISCOSITY,
            background: DEFAULT_BACKGROUND_PERMEABILITY,
            tol: 1e-10,
        }
    }
}

/// Result of a generator run: the dataset plus per-sample bookkeeping.
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    pub parameters: Vec<Vec<f64>>,
    pub solver_residuals: Vec<f64>,
}

fn darcy_output(task: TaskKind, sol: &DarcySolution, line_n: usize) -> Result<Output> {
    Ok(match task {
        TaskKind::ImageToScalar => Output::Scalar(sol.vmax),
        TaskKind::ImageToImage => Output::Image(sol.speed.clone()),
        TaskKind::ImageToLine => {
            let g = sol.speed.grid();
            let bottom = &sol.speed.values()[..g.nx()];
            let values = if line_n == g.nx() {
                bottom.to_vec()
            } else {
                (0..line_n)
                    .map(|i| {
                        let x = (i as f64 + 0.5) / line_n as f64;
                        bottom[((x * g.nx() as f64) as usize).min(g.nx() - 1)]
                    })
                    .collect()
            };
            Output::Line(Field1D::new(values)?)
        }
    })
}

/// Permeability inputs from `split`, each paired with a Darcy solve. The
/// line task records the speed along the bottom row of cells.
pub fn gen_darcy_dataset(
    split: &ParamSplit,
    task: TaskKind,
    grid: Grid2D,
    settings: &DarcySettings,
) -> Result<Generated> {
    split.validate()?;
    if grid.nx() < 8 || grid.ny() < 8 {
        return Err(FlmError::InvalidArgument("Darcy grids must be at least 8x8".into()));
    }
    if matches!(split.sampler, InputSampler::SmoothRandom { .. }) {
        return Err(FlmError::InvalidArgument(
            "Darcy datasets need a permeability family (case2, case3 or constant)".into(),
        ));
    }
    let rows: Vec<Result<(Sample, Vec<f64>, f64)>> = (0..split.samples)
        .into_par_iter()
        .map(|q| {
            let (input, params) = split.sampler.draw(split.seed, q, grid)?;
            let k_phys = match split.sampler {
                InputSampler::Case2 { .. } => Field2D::new(
                    grid,
                    input
                        .values()
                        .iter()
                        .map(|&v| if v > 0.0 { v } else { settings.background })
                        .collect(),
                )?,
                _ => input.clone(),
            };
            let problem = DarcyProblem {
                mu: settings.mu,
                tol: settings.tol,
                ..DarcyProblem::new(k_phys)
            };
            let sol = darcy_solve(&problem)?;
            let output = darcy_output(task, &sol, grid.nx())?;
            Ok((Sample { input, output }, params, sol.residual))
        })
        .collect();
    let mut samples = Vec::with_capacity(split.samples);
    let mut parameters = Vec::with_capacity(split.samples);
    let mut solver_residuals = Vec::with_capacity(split.samples);
    for row in rows {
        let (s, p, r) = row?;
        samples.push(s);
        parameters.push(p);
        solver_residuals.push(r);
    }
    Ok(Generated {
        dataset: Dataset::new(task, samples)?,
        parameters,
        solver_residuals,
    })
}

/// Output of `Σ w·term` for one input at the given output points.
pub fn superpose(terms: &[(TermSpec, f64)], f: &Field2D, points: &[OutputPoint]) -> Result<Vec<f64>> {
    let prepared = PreparedInput::with_midpoint_weights(f)?;
    points
        .iter()
        .map(|&pt| {
            let mut acc = 0.0;
            for (t, w) in terms {
                acc += w * prepared.eval(t, pt)?;
            }
            Ok(acc)
        })
        .collect()
}

/// Output points of a task: `line_n` points for lines, the input grid for
/// images.
pub fn task_points(task: TaskKind, grid: Grid2D, line_n: usize) -> Vec<OutputPoint> {
    match task {
        TaskKind::ImageToScalar => vec![OutputPoint::Scalar],
        TaskKind::ImageToLine => (0..line_n)
            .map(|i| OutputPoint::Line((i as f64 + 0.5) / line_n as f64))
            .collect(),
        TaskKind::ImageToImage => (0..grid.len())
            .map(|k| {
                let (x, y) = grid.node(k);
                OutputPoint::Image(x, y)
            })
            .collect(),
    }
}

pub(crate) fn output_from_values(task: TaskKind, grid: Grid2D, values: Vec<f64>) -> Result<Output> {
    Ok(match task {
        TaskKind::ImageToScalar => Output::Scalar(values[0]),
        TaskKind::ImageToLine => Output::Line(Field1D::new(values)?),
        TaskKind::ImageToImage => Output::Image(Field2D::new(grid, values)?),
    })
}

pub(crate) fn common_task(terms: &[(TermSpec, f64)]) -> Result<TaskKind> {
    let first = terms
        .first()
        .ok_or_else(|| FlmError::InvalidArgument("empty term list".into()))?
        .0
        .task;
    for (t, w) in terms {
        if t.task != first {
            return Err(FlmError::TaskMismatch {
                expected: first,
                actual: t.task,
            });
        }
        t.validate()?;
        if !w.is_finite() {
            return Err(FlmError::NonFinite {
                value: *w,
                context: "term coefficient".into(),
            });
        }
    }
    Ok(first)
}

/// Dataset whose outputs are an exact superposition of library terms.
pub fn gen_from_library(
    terms: &[(TermSpec, f64)],
    sampler: &InputSampler,
    q: usize,
    seed: u64,
    grid: Grid2D,
    line_n: usize,
) -> Result<Dataset> {
    let task = common_task(terms)?;
    sampler.validate()?;
    if q == 0 {
        return Err(FlmError::InvalidArgument("sample count must be at least 1".into()));
    }
    let points = task_points(task, grid, line_n);
    let samples: Vec<Result<Sample>> = (0..q)
        .into_par_iter()
        .map(|i| {
            let (input, _) = sampler.draw(seed, i, grid)?;
            let values = superpose(terms, &input, &points)?;
            Ok(Sample {
                output: output_from_values(task, grid, values)?,
                input,
            })
        })
        .collect();
    Dataset::new(task, samples.into_iter().collect::<Result<_>>()?)
}
