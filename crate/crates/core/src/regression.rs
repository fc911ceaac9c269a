//! Solvers for `U = F W`: minimum-norm least squares, sequential thresholded
//! least squares, and ridge normal equations by preconditioned conjugate
//! gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{column_normalize, DesignMatrix};
use crate::error::{FlmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StlsqConfig {
    pub threshold: f64,
    pub max_sweeps: usize,
    pub inner_ridge: f64,
    pub normalize_columns: bool,
}

impl Default for StlsqConfig {
    fn default() -> Self {
        StlsqConfig {
            threshold: 0.1,
            max_sweeps: 20,
            inner_ridge: 0.0,
            normalize_columns: true,
        }
    }
}

impl StlsqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) || !self.threshold.is_finite() {
            return Err(FlmError::InvalidArgument(format!(
                "threshold must be finite and non-negative, got {}",
                self.threshold
            )));
        }
        if self.max_sweeps == 0 {
            return Err(FlmError::InvalidArgument("max_sweeps must be at least 1".into()));
        }
        if !(self.inner_ridge >= 0.0) || !self.inner_ridge.is_finite() {
            return Err(FlmError::InvalidArgument(format!(
                "inner_ridge must be finite and non-negative, got {}",
                self.inner_ridge
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeCgConfig {
    pub lambda: f64,
    pub tol: f64,
    /// `None` means ten times the number of columns.
    pub max_iter: Option<usize>,
}

impl Default for RidgeCgConfig {
    fn default() -> Self {
        RidgeCgConfig {
            lambda: 1e-9,
            tol: 1e-10,
            max_iter: None,
        }
    }
}

impl RidgeCgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(FlmError::InvalidArgument(format!(
                "ridge lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) {
            return Err(FlmError::InvalidArgument(format!(
                "cg tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == Some(0) {
            return Err(FlmError::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub active_count: usize,
    pub sweeps: usize,
    pub train_residual_rms: f64,
    pub cg_iterations: Option<usize>,
    pub dropped_terms: Vec<usize>,
    pub zero_columns: Vec<usize>,
    /// Condition number of the first full solve; `None` when rank deficient.
    pub column_condition_estimate: Option<f64>,
    pub bias_only_fallback: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub w: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

impl LeastSquares {
    /// Ratio of extreme singular values; infinite when rank deficient.
    pub fn condition(&self) -> f64 {
        let max = self.singular_values.iter().cloned().fold(0.0, f64::max);
        let min = self.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

fn check_finite(f: &DesignMatrix, u: &[f64]) -> Result<()> {
    if u.len() != f.rows() {
        return Err(FlmError::LengthMismatch {
            expected: f.rows(),
            actual: u.len(),
            context: "target vector".into(),
        });
    }
    if f.rows() == 0 || f.cols() == 0 {
        return Err(FlmError::InvalidArgument("empty regression system".into()));
    }
    if let Some(v) = f.data().iter().chain(u).find(|v| !v.is_finite()) {
        return Err(FlmError::NonFinite {
            value: *v,
            context: "regression system".into(),
        });
    }
    Ok(())
}

/// Minimum-norm least squares through a truncated SVD. Tall systems are
/// first reduced by a Householder QR.
pub fn least_squares(f: &DesignMatrix, u: &[f64]) -> Result<LeastSquares> {
    check_finite(f, u)?;
    let (m, n) = (f.rows(), f.cols());
    let a = DMatrix::from_row_slice(m, n, f.data());
    let b = DVector::from_column_slice(u);
    let (core, rhs) = if m > n {
        let qr = a.qr();
        let mut qtb = b;
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, n).into_owned())
    } else {
        (a, b)
    };
    let svd = core.svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = m.max(n) as f64 * f64::EPSILON * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let w = if sigma_max == 0.0 {
        DVector::zeros(n)
    } else {
        svd.solve(&rhs, cutoff)
            .map_err(|e| FlmError::InvalidArgument(e.to_string()))?
    };
    if let Some(v) = w.iter().find(|v| !v.is_finite()) {
        return Err(FlmError::NonFinite {
            value: *v,
            context: "least-squares solution".into(),
        });
    }
    Ok(LeastSquares {
        w: w.iter().copied().collect(),
        singular_values: svd.singular_values.iter().copied().collect(),
        rank,
    })
}

fn residual_rms(f: &DesignMatrix, u: &[f64], w: &[f64]) -> Result<f64> {
    let pred = f.matvec(w)?;
    let ss: f64 = pred.iter().zip(u).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / u.len() as f64).sqrt())
}

fn solve_active(g: &DesignMatrix, u: &[f64], active: &[usize], ridge: f64) -> Result<LeastSquares> {
    let sub = g.select_columns(active);
    if ridge == 0.0 {
        return least_squares(&sub, u);
    }
    let k = active.len();
    let s = ridge.sqrt();
    let mut data = sub.data().to_vec();
    for i in 0..k {
        data.extend((0..k).map(|j| if i == j { s } else { 0.0 }));
    }
    let mut rhs = u.to_vec();
    rhs.extend(std::iter::repeat(0.0).take(k));
    least_squares(&DesignMatrix::from_row_major(sub.rows() + k, k, data)?, &rhs)
}

/// Sequential thresholded least squares. `bias` names a column that is never
/// thresholded.
pub fn stlsq(
    f: &DesignMatrix,
    u: &[f64],
    cfg: &StlsqConfig,
    bias: Option<usize>,
) -> Result<(Vec<f64>, FitReport)> {
    cfg.validate()?;
    check_finite(f, u)?;
    if let Some(b) = bias {
        if b >= f.cols() {
            return Err(FlmError::InvalidArgument(format!(
                "bias column {b} out of range for {} columns",
                f.cols()
            )));
        }
    }
    let (g, scales, zero_columns) = if cfg.normalize_columns {
        let (g, s) = column_normalize(f);
        (g, s.scales, s.zero_columns)
    } else {
        let zero: Vec<usize> = (0..f.cols())
            .filter(|&j| (0..f.rows()).all(|r| f.get(r, j) == 0.0))
            .collect();
        (f.clone(), vec![1.0; f.cols()], zero)
    };

    let mut active: Vec<usize> = (0..f.cols()).filter(|j| !zero_columns.contains(j)).collect();
    let mut coeffs = vec![0.0; f.cols()];
    let mut condition = f64::INFINITY;
    let mut sweeps = 0;
    let mut fallback = false;
    let mut converged = false;

    while !active.is_empty() {
        sweeps += 1;
        let fit = solve_active(&g, u, &active, cfg.inner_ridge)?;
        if sweeps == 1 {
            condition = fit.condition();
        }
        coeffs.iter_mut().for_each(|c| *c = 0.0);
        for (&j, &w) in active.iter().zip(&fit.w) {
            coeffs[j] = w;
        }
        let kept: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| Some(j) == bias || coeffs[j].abs() >= cfg.threshold)
            .collect();
        if kept.len() == active.len() {
            converged = true;
            break;
        }
        if kept.iter().all(|&j| Some(j) == bias) {
            fallback = true;
        }
        active = kept;
        if sweeps == cfg.max_sweeps {
            // final refit on the thresholded set
            if !active.is_empty() {
                let fit = solve_active(&g, u, &active, cfg.inner_ridge)?;
                coeffs.iter_mut().for_each(|c| *c = 0.0);
                for (&j, &w) in active.iter().zip(&fit.w) {
                    coeffs[j] = w;
                }
            }
            break;
        }
    }
    if active.is_empty() {
        coeffs.iter_mut().for_each(|c| *c = 0.0);
        fallback = true;
    }

    let w: Vec<f64> = coeffs.iter().zip(&scales).map(|(c, s)| c / s).collect();
    let dropped_terms = (0..f.cols()).filter(|j| w[*j] == 0.0).collect();
    let report = FitReport {
        active_count: w.iter().filter(|c| **c != 0.0).count(),
        sweeps,
        train_residual_rms: residual_rms(f, u, &w)?,
        cg_iterations: None,
        dropped_terms,
        zero_columns,
        column_condition_estimate: Some(condition).filter(|c| c.is_finite()),
        bias_only_fallback: fallback,
        converged,
    };
    Ok((w, report))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(FᵀF + λI) W = FᵀU` with Jacobi-preconditioned conjugate
/// gradients, applying `FᵀF` matrix-free. On non-convergence the iterate with
/// the smallest residual is returned and `converged` is false.
pub fn ridge_normal_cg(f: &DesignMatrix, u: &[f64], cfg: &RidgeCgConfig) -> Result<(Vec<f64>, FitReport)> {
    cfg.validate()?;
    check_finite(f, u)?;
    let n = f.cols();
    let max_iter = cfg.max_iter.unwrap_or(10 * n);
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        let fx = f.matvec(x)?;
        let mut y = f.tr_matvec(&fx)?;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += cfg.lambda * xi;
        }
        Ok(y)
    };
    let b = f.tr_matvec(u)?;
    let mut diag = vec![cfg.lambda; n];
    for r in 0..f.rows() {
        for (d, v) in diag.iter_mut().zip(f.row(r)) {
            *d += v * v;
        }
    }
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = b_norm == 0.0;
    if !converged {
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut best = (1.0, x.clone());
        while iterations < max_iter {
            iterations += 1;
            let ap = apply(&p)?;
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rel = dot(&r, &r).sqrt() / b_norm;
            if rel < best.0 {
                best = (rel, x.clone());
            }
            if rel <= cfg.tol {
                converged = true;
                break;
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if !converged {
            x = best.1;
        }
    }
    let report = FitReport {
        active_count: x.iter().filter(|c| **c != 0.0).count(),
        sweeps: 1,
        train_residual_rms: residual_rms(f, u, &x)?,
        cg_iterations: Some(iterations),
        dropped_terms: Vec::new(),
        zero_columns: Vec::new(),
        column_condition_estimate: None,
        bias_only_fallback: false,
        converged,
    };
    Ok((x, report))
}

/// Plain least squares wrapped in a report.
pub fn ols(f: &DesignMatrix, u: &[f64]) -> Result<(Vec<f64>, FitReport)> {
    let fit = least_squares(f, u)?;
    let report = FitReport {
        active_count: fit.w.iter().filter(|c| **c != 0.0).count(),
        sweeps: 1,
        train_residual_rms: residual_rms(f, u, &fit.w)?,
        cg_iterations: None,
        dropped_terms: Vec::new(),
        zero_columns: Vec::new(),
        column_condition_estimate: Some(fit.condition()).filter(|c| c.is_finite()),
        bias_only_fallback: false,
        converged: true,
    };
    Ok((fit.w, report))
}
