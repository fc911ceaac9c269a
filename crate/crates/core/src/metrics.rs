//! Error statistics: point-wise and image-based absolute errors,
//! percentiles and boxplot summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FlmError, Result};
use crate::fields::{compensated_sum, Output, TaskKind};

pub const REPORTED_PERCENTILES: [u32; 3] = [95, 97, 99];

fn check_shapes(pred: &[Output], truth: &[Output]) -> Result<()> {
    if pred.is_empty() {
        return Err(FlmError::InvalidArgument("no samples to evaluate".into()));
    }
    if pred.len() != truth.len() {
        return Err(FlmError::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
            context: "prediction count".into(),
        });
    }
    for (q, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.task() != t.task() {
            return Err(FlmError::TaskMismatch {
                expected: t.task(),
                actual: p.task(),
            });
        }
        if p.len() != t.len() {
            return Err(FlmError::LengthMismatch {
                expected: t.len(),
                actual: p.len(),
                context: format!("prediction {q}"),
            });
        }
    }
    Ok(())
}

/// `|pred - truth|` for every point of every sample, sample-major.
pub fn pointwise_errors(pred: &[Output], truth: &[Output]) -> Result<Vec<f64>> {
    check_shapes(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .flat_map(|(p, t)| p.values().iter().zip(t.values()).map(|(a, b)| (a - b).abs()))
        .collect())
}

/// Spatial mean of the absolute error of each sample.
pub fn image_based_errors(pred: &[Output], truth: &[Output]) -> Result<Vec<f64>> {
    check_shapes(pred, truth)?;
    if truth[0].task() == TaskKind::ImageToScalar {
        return Err(FlmError::InvalidArgument(
            "image-based errors need field outputs".into(),
        ));
    }
    Ok(per_sample_means(pred, truth))
}

fn per_sample_means(pred: &[Output], truth: &[Output]) -> Vec<f64> {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| {
            let n = p.len() as f64;
            compensated_sum(p.values().iter().zip(t.values()).map(|(a, b)| (a - b).abs())) / n
        })
        .collect()
}

/// Order-independent mean: sorted, then compensated.
pub fn mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    compensated_sum(v) / values.len() as f64
}

/// Linear interpolation between order statistics at rank `(n-1)·p/100`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme values within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(FlmError::InvalidArgument("no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (percentile(&v, 25.0), percentile(&v, 50.0), percentile(&v, 75.0));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
    Ok(BoxStats {
        median,
        q1,
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: v.len() - inside.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mae: f64,
    pub max: f64,
    pub percentiles: BTreeMap<String, f64>,
    pub boxplot: BoxStats,
}

fn summary(values: &[f64], mae: f64) -> Result<ErrorSummary> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ErrorSummary {
        mae,
        max: *sorted.last().unwrap(),
        percentiles: REPORTED_PERCENTILES
            .iter()
            .map(|&p| (p.to_string(), percentile(&sorted, p as f64)))
            .collect(),
        boxplot: box_stats(&sorted)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub count: usize,
    pub points: usize,
    pub mae: f64,
    pub max_ae: f64,
    pub percentiles: BTreeMap<String, f64>,
    pub boxplot: BoxStats,
    pub image_based: Option<ErrorSummary>,
}

/// Full report. The point-wise MAE is the mean of per-sample means, which
/// equals the plain mean when samples share one resolution.
pub fn summarize(pred: &[Output], truth: &[Output], split: &str) -> Result<MetricsReport> {
    let pointwise = pointwise_errors(pred, truth)?;
    let sample_means = per_sample_means(pred, truth);
    let mae = mean(&sample_means);
    let pw = summary(&pointwise, mae)?;
    let image_based = if truth[0].task() == TaskKind::ImageToScalar {
        None
    } else {
        Some(summary(&sample_means, mae)?)
    };
    Ok(MetricsReport {
        split: split.into(),
        count: pred.len(),
        points: pointwise.len(),
        mae: pw.mae,
        max_ae: pw.max,
        percentiles: pw.percentiles,
        boxplot: pw.boxplot,
        image_based,
    })
}

/// `split,metric,value` rows.
pub fn report_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("split,metric,value\n");
    for r in reports {
        let mut row = |metric: &str, v: f64| out.push_str(&format!("{},{metric},{v:e}\n", r.split));
        row("mae", r.mae);
        row("max_ae", r.max_ae);
        for (p, v) in &r.percentiles {
            row(&format!("p{p}"), *v);
        }
        row("median", r.boxplot.median);
        row("q1", r.boxplot.q1);
        row("q3", r.boxplot.q3);
        if let Some(ib) = &r.image_based {
            row("image_mae", ib.mae);
            row("image_max", ib.max);
            for (p, v) in &ib.percentiles {
                row(&format!("image_p{p}"), *v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Field1D, Field2D, Grid2D};
    use proptest::prelude::*;

    fn scalars(v: &[f64]) -> Vec<Output> {
        v.iter().map(|x| Output::Scalar(*x)).collect()
    }

    fn line(v: &[f64]) -> Output {
        Output::Line(Field1D::new(v.to_vec()).unwrap())
    }

    #[test]
    fn pointwise_examples() {
        assert_eq!(
            pointwise_errors(&scalars(&[1.0, 2.0, 3.0]), &scalars(&[1.0, 2.0, 4.0])).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
        let same = scalars(&[0.3, -2.0, 5.0, 1.0, 0.0]);
        let e = pointwise_errors(&same, &same).unwrap();
        assert_eq!(e.len(), 5);
        assert!(e.iter().all(|v| *v == 0.0));
        assert!(pointwise_errors(&same[..2], &same).is_err());
        assert!(pointwise_errors(&[line(&[1.0, 2.0])], &[line(&[1.0])]).is_err());
    }

    #[test]
    fn image_based_examples() {
        let g = Grid2D::square(3).unwrap();
        let p = vec![Output::Image(Field2D::constant(g, 1.5).unwrap())];
        let t = vec![Output::Image(Field2D::constant(g, 1.0).unwrap())];
        assert_eq!(image_based_errors(&p, &t).unwrap(), vec![0.5]);

        let pred = vec![line(&[0.0, 0.0, 0.0, 0.4]), line(&[0.3, 0.3, 0.3, 0.3])];
        let truth = vec![line(&[0.0; 4]), line(&[0.0; 4])];
        let ib = image_based_errors(&pred, &truth).unwrap();
        assert!((ib[0] - 0.1).abs() < 1e-15 && (ib[1] - 0.3).abs() < 1e-15);
        let r = summarize(&pred, &truth, "train").unwrap();
        assert_eq!(r.max_ae, 0.4);
        assert!((r.image_based.unwrap().max - 0.3).abs() < 1e-15);
        assert!(image_based_errors(&scalars(&[1.0]), &scalars(&[1.0])).is_err());
    }

    #[test]
    fn summarize_examples() {
        let r = summarize(&scalars(&[1.0, 2.0, 3.0]), &scalars(&[1.0, 2.0, 4.0]), "val").unwrap();
        assert!((r.mae - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(r.max_ae, 1.0);
        assert!(r.image_based.is_none());
        let c = summarize(&scalars(&[0.2; 7]), &scalars(&[0.0; 7]), "x").unwrap();
        assert!(c.percentiles.values().all(|v| *v == 0.2));
        assert!(summarize(&[], &[], "x").is_err());
    }

    #[test]
    fn percentile_of_uniform_errors() {
        let errors: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let p99 = percentile(&errors, 99.0);
        assert!((p99 - 0.989).abs() < 1e-3);
        assert!((p99 - 0.98901).abs() < 1e-12);
        assert_eq!(percentile(&errors, 0.0), 0.0);
        assert_eq!(percentile(&errors, 100.0), 0.999);
    }

    #[test]
    fn boxplot() {
        let mut v: Vec<f64> = (1..=9).map(f64::from).collect();
        v.push(100.0);
        let b = box_stats(&v).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (3.25, 5.5, 7.75));
        assert_eq!(b.outliers, 1);
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 9.0));
    }

    #[test]
    fn csv_layout() {
        let r = summarize(&scalars(&[1.0, 2.0]), &scalars(&[1.5, 2.0]), "ood").unwrap();
        let csv = report_csv(&[r]);
        assert!(csv.starts_with("split,metric,value\nood,mae,2.5e-1\n"));
        assert!(csv.contains("ood,p99,"));
    }

    fn field_outputs(values: &[Vec<f64>]) -> Vec<Output> {
        values.iter().map(|v| line(v)).collect()
    }

    proptest! {
        #[test]
        fn identity_and_ordering(
            data in prop::collection::vec(prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 6), 1..12),
            rot in 0usize..12,
        ) {
            let pred: Vec<Vec<f64>> = data.iter().map(|s| s.iter().map(|p| p.0).collect()).collect();
            let truth: Vec<Vec<f64>> = data.iter().map(|s| s.iter().map(|p| p.1).collect()).collect();
            let (p, t) = (field_outputs(&pred), field_outputs(&truth));
            let r = summarize(&p, &t, "train").unwrap();
            let ib = image_based_errors(&p, &t).unwrap();
            prop_assert_eq!(r.mae, mean(&ib));
            prop_assert_eq!(r.image_based.as_ref().unwrap().mae, r.mae);
            prop_assert!(r.image_based.as_ref().unwrap().max <= r.max_ae);
            prop_assert!(r.mae <= r.max_ae);
            let ps: Vec<f64> = r.percentiles.values().copied().collect();
            prop_assert!(ps.windows(2).all(|w| w[0] <= w[1]));

            let k = rot % p.len();
            let (mut p2, mut t2) = (p.clone(), t.clone());
            p2.rotate_left(k);
            t2.rotate_left(k);
            let mut r2 = summarize(&p2, &t2, "train").unwrap();
            r2.split = r.split.clone();
            prop_assert_eq!(r2, r);
        }
    }
}
