use std::fs;
use std::path::Path;
use std::time::Duration;

use flm_core::assembly::{assemble_with, AssemblyConfig};
use flm_core::error::{FlmError, Result};
use flm_core::fields::{
    apply_normalization, fit_normalization, Dataset, Output, Sample, TaskKind,
};
use flm_core::io::{manifest_path, read_fields, read_manifest, write_fields, write_manifest, GridShape, Manifest};
use flm_core::library::{build_library, LibrarySpec, Preset};
use flm_core::metrics::{report_csv, summarize};
use flm_core::model::{export_model, import_model, FitMeta, FunctionalLinearModel, OutputSpec, Provenance};
use flm_core::probe::{builtin_analytic_predictor, probe as run_probe, PredictorEndpoint, ProbePlan};
use flm_core::regression::{ols, ridge_normal_cg, stlsq, RidgeCgConfig, StlsqConfig};
use flm_core::synth::{gen_darcy_dataset, DarcySettings, InputSampler, ParamSplit, SplitTag};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::{
    parse_grid, EvalArgs, ExportArgs, ExportFormat, Family, FitArgs, GenDataArgs, NormalizeMode,
    PredictArgs, ProbeArgs, SamplerArgs, Solver, SplitArg,
};

fn usage(msg: impl Into<String>) -> FlmError {
    FlmError::InvalidArgument(msg.into())
}

fn required<T: Copy>(v: Option<T>, flag: &str, family: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("--{flag} is required for the {family} family")))
}

fn build_sampler(s: &SamplerArgs) -> Result<InputSampler> {
    if let Some(text) = &s.sampler {
        return serde_json::from_str(text).map_err(|e| usage(format!("--sampler: {e}")));
    }
    let sampler = match s.family {
        Some(Family::Smooth) => InputSampler::SmoothRandom {
            max_modes: s.max_modes,
            offset: s.offset,
        },
        Some(Family::Case2) => InputSampler::Case2 {
            a: required(s.a, "a", "case2")?,
            y: required(s.y, "y", "case2")?,
            r: required(s.r, "r", "case2")?,
        },
        Some(Family::Case3) => InputSampler::Case3 {
            a: required(s.a, "a", "case3")?,
            b: required(s.b, "b", "case3")?,
        },
        Some(Family::Constant) => InputSampler::Constant {
            value: required(s.value, "value", "constant")?,
        },
        None => return Err(usage("one of --family or --sampler is required")),
    };
    sampler.validate()?;
    Ok(sampler)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| FlmError::io(path, e))
}

fn read_optional_manifest(data: &Path) -> Result<Option<Manifest>> {
    let path = manifest_path(data);
    if path.exists() {
        read_manifest(path).map(Some)
    } else {
        Ok(None)
    }
}

pub fn gen_data(a: &GenDataArgs, seed: u64) -> Result<Value> {
    let sampler = build_sampler(&a.sampler)?;
    let split = ParamSplit {
        sampler: sampler.clone(),
        samples: a.samples,
        seed,
        split: match a.split {
            SplitArg::Train => SplitTag::Train,
            SplitArg::Validation => SplitTag::Validation,
            SplitArg::Ood => SplitTag::Ood,
        },
    };
    let settings = DarcySettings {
        mu: a.mu,
        background: a.background,
        tol: a.solver_tol,
    };
    let generated = gen_darcy_dataset(&split, a.task, a.grid, &settings)?;
    write_fields(&a.out, &generated.dataset)?;
    let max_residual = generated
        .solver_residuals
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    write_manifest(
        manifest_path(&a.out),
        &Manifest {
            task: a.task,
            samples: a.samples,
            grid: a.grid.into(),
            split: split.split.as_str().into(),
            provenance: Provenance::DataDriven.as_str().into(),
            generator: json!({
                "kind": "darcy",
                "sampler": sampler,
                "settings": settings,
                "parameters": generated.parameters,
            }),
            seed,
            normalization: None,
            solver_residuals: generated.solver_residuals,
        },
    )?;
    Ok(json!({
        "command": "gen-data",
        "out": a.out,
        "task": a.task,
        "samples": a.samples,
        "grid": GridShape::from(a.grid),
        "split": split.split.as_str(),
        "max_solver_residual": max_residual,
    }))
}

fn library_spec(a: &FitArgs) -> Result<(LibrarySpec, Option<Preset>)> {
    match (&a.preset, &a.library) {
        (Some(name), None) => {
            let preset = Preset::from_name(name).ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                usage(format!("unknown preset `{name}` (one of {})", names.join(", ")))
            })?;
            Ok((preset.spec(), Some(preset)))
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| FlmError::io(path, e))?;
            let spec = serde_json::from_str(&text).map_err(|e| usage(format!("--library: {e}")))?;
            Ok((spec, None))
        }
        _ => Err(usage("exactly one of --preset or --library is required")),
    }
}

pub fn fit(a: &FitArgs) -> Result<Value> {
    let (spec, preset) = library_spec(a)?;
    let data = read_fields(&a.data)?;
    if data.task() != spec.task {
        return Err(FlmError::TaskMismatch {
            expected: spec.task,
            actual: data.task(),
        });
    }
    let provenance = match read_optional_manifest(&a.data)? {
        Some(m) if m.provenance == Provenance::NnDriven.as_str() => Provenance::NnDriven,
        _ => Provenance::DataDriven,
    };
    let library = build_library(&spec)?;
    let normalize = match a.normalize {
        NormalizeMode::Auto => preset.map_or(true, Preset::normalizes),
        NormalizeMode::On => true,
        NormalizeMode::Off => false,
    };
    if a.center && !normalize {
        return Err(usage("--center requires normalization"));
    }
    let (train, norm) = if normalize {
        let mut stats = fit_normalization(&data)?;
        if a.center {
            stats = stats.centered(&data)?;
        }
        (apply_normalization(&data, &stats)?, Some(stats))
    } else {
        (data.clone(), None)
    };
    let mut cfg = AssemblyConfig::default();
    if let Some(b) = a.max_bytes {
        cfg.max_bytes = b;
    }
    let (f, u) = assemble_with(&train, &library, &cfg)?;
    let bias = library.iter().position(|t| t.is_bias);
    let mut meta = FitMeta::named(a.name.as_deref().unwrap_or(match a.solver {
        Solver::Stlsq => "stlsq",
        Solver::RidgeCg => "ridge-cg",
        Solver::Ols => "ols",
    }));
    let (w, report) = match a.solver {
        Solver::Stlsq => {
            let cfg = StlsqConfig {
                threshold: a.lambda,
                max_sweeps: a.max_sweeps,
                inner_ridge: a.ridge_lambda.unwrap_or(0.0),
                normalize_columns: !a.no_col_normalize,
            };
            meta.threshold = Some(cfg.threshold);
            meta.normalize_columns = Some(cfg.normalize_columns);
            meta.ridge_lambda = a.ridge_lambda;
            stlsq(&f, &u.values, &cfg, bias)?
        }
        Solver::RidgeCg => {
            let cfg = RidgeCgConfig {
                lambda: a.ridge_lambda.unwrap_or(RidgeCgConfig::default().lambda),
                tol: a.cg_tol,
                max_iter: a.cg_max_iter,
            };
            meta.ridge_lambda = Some(cfg.lambda);
            ridge_normal_cg(&f, &u.values, &cfg)?
        }
        Solver::Ols => ols(&f, &u.values)?,
    };
    meta.preset = preset.map(|p| p.name().to_string());
    meta.library_size = library.len();
    meta.report = Some(report.clone());
    let mut model = FunctionalLinearModel::from_coefficients(
        &library,
        &w,
        norm,
        provenance,
        data.grid().into(),
        meta,
    )?;
    if let Some(tol) = a.prune {
        model = model.prune(tol)?;
    }
    export_model(&model, &a.out)?;
    let truth: Vec<Output> = data.samples().iter().map(|s| s.output.clone()).collect();
    let train_metrics = summarize(&model.predict_dataset(&data)?, &truth, "train")?;
    Ok(json!({
        "command": "fit",
        "model": a.out,
        "task": data.task(),
        "provenance": provenance.as_str(),
        "library_size": library.len(),
        "active_terms": model.terms().len(),
        "report": report,
        "train_mae": train_metrics.mae,
        "equation": model.render_equation(),
    }))
}

pub fn probe(a: &ProbeArgs, seed: u64) -> Result<Value> {
    let sampler = build_sampler(&a.sampler)?;
    let endpoint = match (&a.analytic, a.command.is_empty()) {
        (Some(path), true) => {
            let model = import_model(path)?;
            if model.norm().is_some() {
                return Err(usage("--analytic needs a model without normalization"));
            }
            builtin_analytic_predictor(model.terms().to_vec())?
        }
        (None, false) => {
            if !(a.timeout > 0.0 && a.timeout.is_finite()) {
                return Err(usage(format!("--timeout must be positive, got {}", a.timeout)));
            }
            PredictorEndpoint::External {
                command: a.command.clone(),
                workdir: a.workdir.clone(),
                timeout: Duration::from_secs_f64(a.timeout),
            }
        }
        _ => return Err(usage("give either --analytic MODEL or an external command after `--`")),
    };
    let plan = ProbePlan {
        sampler: sampler.clone(),
        q: a.samples,
        seed,
        task: a.task,
        grid: a.grid,
        line_n: a.line_n.unwrap_or(a.grid.nx()),
    };
    let dataset = run_probe(&endpoint, &plan)?;
    write_fields(&a.out, &dataset)?;
    let endpoint_doc = match &endpoint {
        PredictorEndpoint::InProcessAnalytic { .. } => json!({"kind": "analytic", "model": a.analytic}),
        PredictorEndpoint::External { command, .. } => json!({"kind": "external", "command": command}),
    };
    write_manifest(
        manifest_path(&a.out),
        &Manifest {
            task: a.task,
            samples: a.samples,
            grid: a.grid.into(),
            split: SplitTag::Train.as_str().into(),
            provenance: Provenance::NnDriven.as_str().into(),
            generator: json!({"kind": "probe", "endpoint": endpoint_doc, "sampler": sampler}),
            seed,
            normalization: None,
            solver_residuals: Vec::new(),
        },
    )?;
    Ok(json!({
        "command": "probe",
        "out": a.out,
        "task": a.task,
        "samples": dataset.len(),
        "grid": GridShape::from(a.grid),
        "output_len": dataset.output_len(),
    }))
}

pub fn predict(a: &PredictArgs) -> Result<Value> {
    let model = import_model(&a.model)?;
    let data = read_fields(&a.data)?;
    if data.task() != model.task() {
        return Err(FlmError::TaskMismatch {
            expected: model.task(),
            actual: data.task(),
        });
    }
    let samples: Vec<Sample> = data
        .samples()
        .par_iter()
        .map(|s| {
            let (input, spec) = match (&a.resolution, model.task()) {
                (None, _) => (s.input.clone(), OutputSpec::like(&s.output)),
                (Some(r), TaskKind::ImageToLine) => {
                    let n = r
                        .parse()
                        .map_err(|_| usage(format!("--resolution for line tasks is a point count, got `{r}`")))?;
                    (s.input.clone(), OutputSpec::Line { n })
                }
                (Some(r), task) => {
                    let grid = parse_grid(r).map_err(usage)?;
                    if task == TaskKind::ImageToImage {
                        let output = model.predict(&s.input, OutputSpec::Image { grid })?;
                        return Ok(Sample {
                            input: s.input.resample_nearest(grid),
                            output,
                        });
                    }
                    (s.input.resample_nearest(grid), OutputSpec::Scalar)
                }
            };
            let output = model.predict(&input, spec)?;
            Ok(Sample { input, output })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let out = Dataset::new(model.task(), samples)?;
    write_fields(&a.out, &out)?;
    Ok(json!({
        "command": "predict",
        "out": a.out,
        "task": out.task(),
        "samples": out.len(),
        "grid": GridShape::from(out.grid()),
        "output_len": out.output_len(),
    }))
}

pub fn eval(a: &EvalArgs) -> Result<Value> {
    let model = import_model(&a.model)?;
    let norm = if a.normalized {
        Some(*model.norm().ok_or_else(|| usage("--normalized needs a model fitted with normalization"))?)
    } else {
        None
    };
    let mut reports = Vec::with_capacity(a.data.len());
    for path in &a.data {
        let data = read_fields(path)?;
        let preds = model.predict_dataset(&data)?;
        let truth: Vec<Output> = data.samples().iter().map(|s| s.output.clone()).collect();
        let (preds, truth) = match &norm {
            Some(n) => {
                let scale = |o: &Output| o.with_values(o.values().iter().map(|&v| n.normalize_output(v)).collect());
                (
                    preds.iter().map(scale).collect::<Result<Vec<_>>>()?,
                    truth.iter().map(scale).collect::<Result<Vec<_>>>()?,
                )
            }
            None => (preds, truth),
        };
        let split = match read_optional_manifest(path)? {
            Some(m) => m.split,
            None => path
                .file_stem()
                .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned()),
        };
        reports.push(summarize(&preds, &truth, &split)?);
    }
    if let Some(csv) = &a.csv {
        write_text(csv, &report_csv(&reports))?;
    }
    Ok(json!({
        "command": "eval",
        "model": a.model,
        "units": if a.normalized { "normalized" } else { "physical" },
        "reports": reports,
    }))
}

pub fn export(a: &ExportArgs) -> Result<Value> {
    let model = import_model(&a.model)?;
    let text = match a.format {
        ExportFormat::Equation => {
            let mut eq = model.render_equation();
            eq.push('\n');
            eq
        }
        ExportFormat::Json => model.to_json()?,
    };
    if let Some(out) = &a.out {
        write_text(out, &text)?;
    }
    Ok(json!({
        "command": "export",
        "format": match a.format {
            ExportFormat::Equation => "equation",
            ExportFormat::Json => "json",
        },
        "out": a.out,
        "terms": model.terms().len(),
        "equation": model.render_equation(),
    }))
}
