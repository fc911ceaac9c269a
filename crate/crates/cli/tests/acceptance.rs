//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use flm_core::assembly::{assemble, DesignMatrix};
use flm_core::fields::{
    apply_normalization, fit_normalization, integrate, quadrature_weights, Dataset, Field2D, Grid2D, Output,
    TaskKind,
};
use flm_core::io::GridShape;
use flm_core::library::{
    build_library, family_term, IndicatorMode, OutputPoint, PreparedInput, Preset, TermSpec,
};
use flm_core::metrics::{image_based_errors, mean, pointwise_errors, summarize};
use flm_core::model::{export_model, FitMeta, FunctionalLinearModel, Provenance};
use flm_core::probe::{builtin_analytic_predictor, probe, ProbePlan};
use flm_core::regression::{least_squares, ridge_normal_cg, stlsq, RidgeCgConfig, StlsqConfig};
use flm_core::synth::{
    darcy_solve, flux_through_cut, gen_darcy_dataset, gen_from_library, DarcyProblem, DarcySettings, InputSampler,
    ParamSplit, Range, SplitTag,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const FLM: &str = env!("CARGO_BIN_EXE_flm");
const SERVE: &str = env!("CARGO_BIN_EXE_flm-serve");

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn case1() -> Vec<TermSpec> {
    build_library(&Preset::Case1Mnist.spec()).unwrap()
}

/// Three case-1 terms plus the bias, with well separated coefficients.
const TRUTH: [(usize, f64); 4] = [(1, 2.0), (6, 0.5), (7, -1.5), (57, 1.0)];

fn smooth() -> InputSampler {
    InputSampler::SmoothRandom {
        max_modes: 6,
        offset: None,
    }
}

fn check_support(w: &[f64], context: &str) -> Result<f64, String> {
    let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] != 0.0).collect();
    let expected: Vec<usize> = TRUTH.iter().map(|t| t.0).collect();
    ensure(support == expected, || format!("{context}: support {support:?}, expected {expected:?}"))?;
    let err = TRUTH.iter().map(|&(j, c)| (w[j] - c).abs()).fold(0.0, f64::max);
    ensure(err <= 1e-8, || format!("{context}: coefficient error {err:e} > 1e-8"))?;
    Ok(err)
}

fn library_cardinality() -> Check {
    let expected = [58, 128, 2162, 128, 2162, 362];
    let got: Vec<usize> = Preset::ALL
        .iter()
        .map(|p| build_library(&p.spec()).map(|l| l.len()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(got == expected, || format!("P = {got:?}, expected {expected:?}"))?;
    Ok(format!("P = {got:?}"))
}

/// Brute-force midpoint sum of `kernel(ζ,η)·f(ζ,η)` on an `n × n` grid.
fn brute_force(n: usize, g: impl Fn(f64, f64) -> f64) -> f64 {
    let h = 1.0 / n as f64;
    let mut total = 0.0;
    for j in 0..n {
        let e = (j as f64 + 0.5) * h;
        let row: f64 = (0..n).map(|i| g((i as f64 + 0.5) * h, e)).sum();
        total += row * h * h;
    }
    total
}

fn quadrature() -> Check {
    for n in [2, 7, 28, 64] {
        let grid = Grid2D::square(n).unwrap();
        let w = quadrature_weights(&grid);
        for c in [1.0, -2.5, 0.1, std::f64::consts::E, 1e6 / 3.0] {
            let got = integrate(&Field2D::constant(grid, c).unwrap(), &w).unwrap();
            ensure(got == c, || format!("∫{c} = {got:e} on {n}x{n}"))?;
        }
        let got = integrate(&Field2D::from_fn(grid, |x, _| x).unwrap(), &w).unwrap();
        ensure(got == 0.5, || format!("∫x = {got:e} on {n}x{n}"))?;
    }
    let f = |x: f64, y: f64| 1.0 + 0.5 * (3.0 * x).sin() * (2.0 * y).cos() + 0.3 * x * y;
    let grid = Grid2D::square(28).unwrap();
    let field = Field2D::from_fn(grid, f).unwrap();
    let prepared = PreparedInput::with_midpoint_weights(&field).unwrap();
    let mut worst: f64 = 0.0;
    for beta in [0.1, 0.5, 1.0, 5.0, 10.0] {
        for (family, lift) in [(7u32, 1u32), (8, 2)] {
            let term = family_term(TaskKind::ImageToScalar, family, Some(beta), IndicatorMode::Local).unwrap();
            let got = prepared.eval(&term, OutputPoint::Scalar).unwrap();
            let oracle = brute_force(512, |z, e| (-(z * z + e * e) / beta).exp() * f(z, e).powi(lift as i32));
            worst = worst.max(rel(got, oracle));
        }
    }
    for beta in [0.2, 0.6, 1.5] {
        let term = family_term(TaskKind::ImageToImage, 1, Some(beta), IndicatorMode::Local).unwrap();
        for (x0, y0) in [(0.1, 0.1), (0.5, 0.5), (0.9, 0.3)] {
            let got = prepared.eval(&term, OutputPoint::Image(x0, y0)).unwrap();
            let oracle = brute_force(512, |z, e| (-((x0 - z).powi(2) + (y0 - e).powi(2)) / beta).exp() * f(z, e));
            worst = worst.max(rel(got, oracle));
        }
    }
    ensure(worst <= 2e-2, || format!("Gaussian terms: worst relative error {worst:e} > 2e-2"))?;
    Ok(format!("constants and x exact; Gaussian terms within {worst:.2e} of the 512x512 oracle"))
}

fn stlsq_recovery() -> Check {
    let lib = case1();
    let grid = Grid2D::square(28).unwrap();
    let terms: Vec<_> = TRUTH.iter().map(|&(j, w)| (lib[j], w)).collect();
    let mut worst: f64 = 0.0;
    for seed in [1, 2, 3] {
        let ds = gen_from_library(&terms, &smooth(), 200, seed, grid, 0).map_err(|e| e.to_string())?;
        let (f, u) = assemble(&ds, &lib).map_err(|e| e.to_string())?;
        let (w, _) = stlsq(&f, &u.values, &StlsqConfig::default(), Some(57)).map_err(|e| e.to_string())?;
        worst = worst.max(check_support(&w, &format!("seed {seed}"))?);
        let mut counts = Vec::new();
        for threshold in [0.0, 0.01, 0.1, 1.0, 10.0] {
            let cfg = StlsqConfig {
                threshold,
                ..StlsqConfig::default()
            };
            counts.push(stlsq(&f, &u.values, &cfg, Some(57)).map_err(|e| e.to_string())?.1.active_count);
        }
        ensure(counts.windows(2).all(|c| c[1] <= c[0]), || {
            format!("seed {seed}: active counts {counts:?} not non-increasing")
        })?;
    }
    Ok(format!("exact support on 3 seeds, max coefficient error {worst:.1e}"))
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DesignMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DesignMatrix::from_row_major(rows, cols, data).unwrap()
}

/// Dense `(FᵀF + λI) w = Fᵀu` by a textbook Cholesky factorization.
fn cholesky_normal_solve(f: &DesignMatrix, u: &[f64], lambda: f64) -> Vec<f64> {
    let n = f.cols();
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for r in 0..f.rows() {
        let row = f.row(r);
        for i in 0..n {
            b[i] += row[i] * u[r];
            for j in 0..n {
                a[i * n + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..n {
        a[i * n + i] += lambda;
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            l[i * n + j] = if i == j {
                (a[i * n + i] - s).sqrt()
            } else {
                (a[i * n + j] - s) / l[j * n + j]
            };
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    x
}

fn vec_rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn solver_equivalence() -> Check {
    let f = random_matrix(500, 60, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let direct = least_squares(&f, &u).map_err(|e| e.to_string())?.w;
    let cfg = StlsqConfig {
        threshold: 0.0,
        normalize_columns: false,
        ..StlsqConfig::default()
    };
    let (w, _) = stlsq(&f, &u, &cfg, None).map_err(|e| e.to_string())?;
    let e1 = vec_rel(&w, &direct);
    ensure(e1 <= 1e-12, || format!("stlsq(λ=0) vs least squares: {e1:e} > 1e-12"))?;
    let rcfg = RidgeCgConfig::default();
    let (wr, report) = ridge_normal_cg(&f, &u, &rcfg).map_err(|e| e.to_string())?;
    let oracle = cholesky_normal_solve(&f, &u, rcfg.lambda);
    let e2 = vec_rel(&wr, &oracle);
    ensure(report.converged, || "ridge CG did not converge".into())?;
    ensure(e2 <= 1e-8, || format!("ridge CG vs Cholesky: {e2:e} > 1e-8"))?;
    Ok(format!("stlsq vs lstsq {e1:.1e}; ridge CG vs Cholesky {e2:.1e} on 500x60"))
}

fn solve(k: Field2D) -> Result<flm_core::synth::DarcySolution, String> {
    let problem = DarcyProblem {
        mu: 10.0,
        ..DarcyProblem::new(k)
    };
    darcy_solve(&problem).map_err(|e| e.to_string())
}

fn darcy() -> Check {
    let mut worst_speed: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for n in [8, 28, 56] {
        let grid = Grid2D::square(n).unwrap();
        let sol = solve(Field2D::constant(grid, 1.0).unwrap())?;
        for (k, &s) in sol.speed.values().iter().enumerate() {
            let (x, _) = grid.node(k);
            worst_speed = worst_speed.max((s - 0.1).abs());
            worst_p = worst_p.max((sol.pressure.values()[k] - (1.0 - x)).abs());
        }
    }
    ensure(worst_speed <= 1e-3, || format!("uniform speed error {worst_speed:e} > 1e-3"))?;
    ensure(worst_p <= 1e-8, || format!("uniform pressure error {worst_p:e} > 1e-8"))?;

    let grid = Grid2D::square(28).unwrap();
    let k = Field2D::from_fn(grid, |x, y| {
        (-2.0 * x).exp() * ((2.0 * std::f64::consts::PI * x).sin() * (4.0 * std::f64::consts::PI * y).cos()).abs()
            + 1.0
    })
    .unwrap();
    let sol = solve(k.clone())?;
    let mut worst_flux: f64 = rel(sol.outlet_flux, sol.inlet_flux);
    for i in 0..grid.nx() - 1 {
        worst_flux = worst_flux.max(rel(flux_through_cut(&sol, &k, 10.0, i), sol.inlet_flux));
    }
    ensure(worst_flux <= 1e-8, || format!("flux imbalance {worst_flux:e} > 1e-8"))?;

    let smooth_k = |x: f64, y: f64| 1.0 + 0.5 * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).cos();
    let flux = |n: usize| -> Result<f64, String> {
        Ok(solve(Field2D::from_fn(Grid2D::square(n).unwrap(), smooth_k).unwrap())?.inlet_flux)
    };
    let (q1, q2, q3) = (flux(28)?, flux(56)?, flux(112)?);
    let order = ((q1 - q2).abs() / (q2 - q3).abs()).log2();
    ensure((order - 2.0).abs() <= 0.25, || format!("observed order {order:.3}, expected 2 ± 0.25"))?;
    Ok(format!(
        "speed err {worst_speed:.1e}, p err {worst_p:.1e}, flux imbalance {worst_flux:.1e}, order {order:.2}"
    ))
}

fn darcy_split(a: Range, b: Range, samples: usize, seed: u64, split: SplitTag) -> Result<Dataset, String> {
    let split = ParamSplit {
        sampler: InputSampler::Case3 { a, b },
        samples,
        seed,
        split,
    };
    gen_darcy_dataset(&split, TaskKind::ImageToImage, Grid2D::square(14).unwrap(), &DarcySettings::default())
        .map(|g| g.dataset)
        .map_err(|e| e.to_string())
}

fn outputs(ds: &Dataset) -> Vec<Output> {
    ds.samples().iter().map(|s| s.output.clone()).collect()
}

fn end_to_end() -> Check {
    let train = darcy_split(Range::new(0.0, 1.0), Range::new(0.0, 4.0), 60, 1, SplitTag::Train)?;
    let ood = darcy_split(Range::new(1.0, 2.0), Range::new(4.2, 6.0), 32, 2, SplitTag::Ood)?;
    let spec = flm_core::library::LibrarySpec {
        m_beta: 10,
        ..Preset::Case3PorousImage.spec()
    };
    let lib = build_library(&spec).map_err(|e| e.to_string())?;
    let stats = fit_normalization(&train).map_err(|e| e.to_string())?;
    let train_n = apply_normalization(&train, &stats).map_err(|e| e.to_string())?;
    let ood_n = apply_normalization(&ood, &stats).map_err(|e| e.to_string())?;
    let (f, u) = assemble(&train_n, &lib).map_err(|e| e.to_string())?;
    let bias = lib.iter().position(|t| t.is_bias);
    let (w, report) = stlsq(&f, &u.values, &StlsqConfig::default(), bias).map_err(|e| e.to_string())?;
    let model = FunctionalLinearModel::from_coefficients(
        &lib,
        &w,
        Some(stats),
        Provenance::DataDriven,
        GridShape { nx: 14, ny: 14 },
        FitMeta::named("stlsq"),
    )
    .map_err(|e| e.to_string())?;
    let normalized = |outs: Vec<Output>| -> Vec<Output> {
        outs.iter()
            .map(|o| o.with_values(o.values().iter().map(|&v| stats.normalize_output(v)).collect()).unwrap())
            .collect()
    };
    let train_pred = normalized(model.predict_dataset(&train).map_err(|e| e.to_string())?);
    let ood_pred = normalized(model.predict_dataset(&ood).map_err(|e| e.to_string())?);
    let train_mae = summarize(&train_pred, &outputs(&train_n), "train").map_err(|e| e.to_string())?.mae;
    let ood_mae = summarize(&ood_pred, &outputs(&ood_n), "ood").map_err(|e| e.to_string())?.mae;
    let c = mean(&train_n.target_values());
    let baseline: Vec<Output> = outputs(&ood_n).iter().map(|o| o.with_values(vec![c; o.len()]).unwrap()).collect();
    let base_mae = summarize(&baseline, &outputs(&ood_n), "baseline").map_err(|e| e.to_string())?.mae;
    ensure(train_mae <= 0.05, || format!("normalized train MAE {train_mae:.4} > 0.05"))?;
    ensure(ood_mae < base_mae, || format!("OOD MAE {ood_mae:.4} not below baseline {base_mae:.4}"))?;
    Ok(format!(
        "P = {}, active {}, train MAE {train_mae:.4}, OOD MAE {ood_mae:.4} < baseline {base_mae:.4}",
        lib.len(),
        report.active_count
    ))
}

fn closed_loop() -> Check {
    let lib = case1();
    let endpoint = builtin_analytic_predictor(TRUTH.iter().map(|&(j, w)| (lib[j], w)).collect())
        .map_err(|e| e.to_string())?;
    let plan = ProbePlan {
        sampler: smooth(),
        q: 200,
        seed: 42,
        task: TaskKind::ImageToScalar,
        grid: Grid2D::square(28).unwrap(),
        line_n: 0,
    };
    let ds = probe(&endpoint, &plan).map_err(|e| e.to_string())?;
    let (f, u) = assemble(&ds, &lib).map_err(|e| e.to_string())?;
    let (w, _) = stlsq(&f, &u.values, &StlsqConfig::default(), Some(57)).map_err(|e| e.to_string())?;
    let err = check_support(&w, "probe -> fit")?;
    Ok(format!("recovered 3 terms + bias, max coefficient error {err:.1e}"))
}

fn metrics_identity() -> Check {
    let mut datasets = Vec::new();
    let grid = Grid2D::square(14).unwrap();
    for (task, seed) in [(TaskKind::ImageToImage, 3), (TaskKind::ImageToLine, 4)] {
        let split = ParamSplit {
            sampler: InputSampler::Case2 {
                a: Range::new(0.5, 2.0),
                y: Range::new(0.3, 0.7),
                r: Range::new(0.1, 0.3),
            },
            samples: 12,
            seed,
            split: SplitTag::Train,
        };
        let truth = gen_darcy_dataset(&split, task, grid, &DarcySettings::default()).map_err(|e| e.to_string())?;
        datasets.push(outputs(&truth.dataset));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for truth in &datasets {
        let pred: Vec<Output> = truth
            .iter()
            .map(|o| o.with_values(o.values().iter().map(|v| v * rng.gen_range(0.8..1.2)).collect()).unwrap())
            .collect();
        let report = summarize(&pred, truth, "check").map_err(|e| e.to_string())?;
        let image = image_based_errors(&pred, truth).map_err(|e| e.to_string())?;
        let pointwise = pointwise_errors(&pred, truth).map_err(|e| e.to_string())?;
        let image_mean = mean(&image);
        ensure(report.mae == image_mean, || format!("MAE {:e} != image mean {image_mean:e}", report.mae))?;
        let plain: f64 = pointwise.iter().sum::<f64>() / pointwise.len() as f64;
        ensure(rel(plain, image_mean) <= 1e-13, || format!("plain point-wise mean {plain:e} vs {image_mean:e}"))?;
        let image_max = image.iter().cloned().fold(0.0, f64::max);
        let point_max = pointwise.iter().cloned().fold(0.0, f64::max);
        ensure(image_max <= point_max, || format!("image max {image_max:e} > point-wise max {point_max:e}"))?;
        checked += 1;
    }
    Ok(format!("{checked} field datasets: MAE identity exact, image max <= point-wise max"))
}

fn run(dir: &Path, threads: &str, args: &[&str]) -> Result<String, String> {
    let out = Command::new(FLM)
        .args(["--threads", threads])
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("`flm {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn pipeline(threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let d = dir.path();
    let lib = case1();
    let truth = FunctionalLinearModel::new(
        TaskKind::ImageToScalar,
        TRUTH.iter().map(|&(j, w)| (lib[j], w)).collect(),
        None,
        Provenance::DataDriven,
        GridShape { nx: 28, ny: 28 },
        FitMeta::named("truth"),
    )
    .map_err(|e| e.to_string())?;
    export_model(&truth, d.join("truth.json")).map_err(|e| e.to_string())?;
    fs::write(d.join("lib.json"), r#"{"task":"image_to_image","beta_min":0.2,"beta_max":1.5,"m_beta":3}"#)
        .map_err(|e| e.to_string())?;
    let steps: Vec<Vec<&str>> = vec![
        vec!["gen-data", "--task", "image", "--family", "case3", "--a", "0,1", "--b", "0,4", "--samples", "8", "--grid", "14", "--seed", "1", "--out", "train.flm"],
        vec!["gen-data", "--task", "image", "--family", "case3", "--a", "1,2", "--b", "4.2,6", "--samples", "4", "--grid", "14", "--seed", "2", "--split", "ood", "--out", "ood.flm"],
        vec!["gen-data", "--task", "line", "--family", "case2", "--a", "0.5,2", "--y", "0.3,0.7", "--r", "0.1,0.3", "--samples", "4", "--grid", "12", "--out", "line.flm"],
        vec!["fit", "--data", "train.flm", "--library", "lib.json", "--out", "m.json"],
        vec!["fit", "--data", "train.flm", "--library", "lib.json", "--solver", "ridge-cg", "--out", "mr.json"],
        vec!["fit", "--data", "train.flm", "--library", "lib.json", "--solver", "ols", "--out", "mo.json"],
        vec!["predict", "--model", "m.json", "--data", "ood.flm", "--resolution", "28", "--out", "pred.flm"],
        vec!["eval", "--model", "m.json", "--data", "train.flm", "--data", "ood.flm", "--csv", "r.csv"],
        vec!["export", "--model", "m.json", "--out", "eq.txt"],
        vec!["probe", "--task", "scalar", "--analytic", "truth.json", "--family", "smooth", "--samples", "60", "--grid", "28", "--out", "p.flm"],
        vec!["fit", "--data", "p.flm", "--preset", "case1-mnist", "--out", "mp.json"],
        vec!["probe", "--task", "scalar", "--family", "smooth", "--samples", "10", "--grid", "28", "--out", "pe.flm", "--", SERVE, "--model", "truth.json"],
    ];
    let mut artifacts = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        artifacts.push((format!("stdout of step {i} ({})", step[0]), run(d, threads, step)?.into_bytes()));
    }
    let mut names: Vec<_> = fs::read_dir(d)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in names {
        artifacts.push((name.clone(), fs::read(d.join(&name)).map_err(|e| e.to_string())?));
    }
    Ok(artifacts)
}

fn determinism() -> Check {
    let reference = pipeline("1")?;
    for threads in ["4", "8", "8", "1"] {
        let other = pipeline(threads)?;
        ensure(other.len() == reference.len(), || format!("--threads {threads}: artifact count differs"))?;
        for ((name, a), (_, b)) in reference.iter().zip(&other) {
            ensure(a == b, || format!("--threads {threads}: {name} differs from --threads 1"))?;
        }
    }
    Ok(format!("{} artifacts identical across --threads 1/4/8 and reruns", reference.len()))
}

fn main() -> std::process::ExitCode {
    type Criterion = (&'static str, fn() -> Check, Option<Duration>);
    let criteria: [Criterion; 9] = [
        ("library cardinality", library_cardinality, Some(Duration::from_secs(1))),
        ("quadrature", quadrature, Some(Duration::from_secs(10))),
        ("STLSQ exact recovery", stlsq_recovery, Some(Duration::from_secs(30))),
        ("solver equivalence", solver_equivalence, Some(Duration::from_secs(10))),
        ("Darcy oracle", darcy, Some(Duration::from_secs(60))),
        ("end-to-end porous image analog", end_to_end, Some(Duration::from_secs(300))),
        ("closed-loop probe then fit", closed_loop, Some(Duration::from_secs(30))),
        ("metrics identity", metrics_identity, None),
        ("determinism", determinism, None),
    ];
    let mut failures = Vec::new();
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {:.2} s, budget {} s", elapsed.as_secs_f64(), b.as_secs())),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({:.2} s)", elapsed.as_secs_f64()),
            Err(why) => {
                println!("FAIL  {name}: {why} ({:.2} s)", elapsed.as_secs_f64());
                failures.push(name);
            }
        }
    }
    if failures.is_empty() {
        std::process::ExitCode::SUCCESS
    } else {
        eprintln!("failed criteria: {failures:?}");
        std::process::ExitCode::FAILURE
    }
}
