//! Reference predictor server: answers probe requests by evaluating a model
//! file. Fault flags make it misbehave on purpose, for exercising clients.

use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use flm_core::fields::{Field2D, Grid2D, TaskKind};
use flm_core::model::import_model;
use flm_core::probe::{PROTOCOL, PROTOCOL_VERSION};
use flm_core::synth::task_points;
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fault {
    WrongLength,
    WrongId,
    NonFinite,
    BadVersion,
    BadTask,
    Hang,
}

#[derive(Debug, Parser)]
#[command(name = "flm-serve", about = "Serve a model over the flm-probe protocol on stdin/stdout")]
struct Args {
    #[arg(long)]
    model: PathBuf,
    /// Output length of line tasks (defaults to the input width).
    #[arg(long)]
    line_n: Option<usize>,
    #[arg(long, value_enum)]
    fault: Option<Fault>,
    /// Exit without answering once this many requests were served.
    #[arg(long)]
    exit_after: Option<usize>,
}

#[derive(Deserialize)]
struct Request {
    id: u64,
    nx: usize,
    ny: usize,
    input: Vec<f64>,
}

fn answer(req: &Request, args: &Args, model: &flm_core::model::FunctionalLinearModel) -> Value {
    let result = Grid2D::new(req.nx, req.ny)
        .and_then(|g| Field2D::new(g, req.input.clone()))
        .and_then(|f| {
            let points = task_points(model.task(), *f.grid(), args.line_n.unwrap_or(req.nx));
            model.predict_points(&f, &points)
        });
    let mut values = match result {
        Ok(v) => v,
        Err(e) => return json!({"id": req.id, "error": e.to_string()}),
    };
    let mut id = req.id;
    match args.fault {
        Some(Fault::WrongLength) => {
            values.pop();
        }
        Some(Fault::WrongId) => id += 1,
        _ => {}
    }
    let mut output: Vec<Value> = values.into_iter().map(Value::from).collect();
    if args.fault == Some(Fault::NonFinite) {
        output[0] = Value::Null;
    }
    json!({"id": id, "output": output})
}

fn main() -> ExitCode {
    let args = Args::parse();
    let model = match import_model(&args.model) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("flm-serve: {e}");
            return ExitCode::from(3);
        }
    };
    let task = match (args.fault, model.task()) {
        (Some(Fault::BadTask), TaskKind::ImageToImage) => TaskKind::ImageToScalar,
        (Some(Fault::BadTask), _) => TaskKind::ImageToImage,
        (_, t) => t,
    };
    let version = if args.fault == Some(Fault::BadVersion) {
        PROTOCOL_VERSION + 1
    } else {
        PROTOCOL_VERSION
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let banner = json!({"protocol": PROTOCOL, "version": version, "task": task});
    if writeln!(out, "{banner}").and_then(|_| out.flush()).is_err() {
        return ExitCode::from(3);
    }
    let mut served = 0;
    for line in io::stdin().lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if args.exit_after == Some(served) {
            return ExitCode::SUCCESS;
        }
        if args.fault == Some(Fault::Hang) {
            loop {
                std::thread::sleep(Duration::from_secs(3600));
            }
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(req) => answer(&req, &args, &model),
            Err(e) => json!({"id": Value::Null, "error": format!("malformed request: {e}")}),
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            return ExitCode::from(3);
        }
        served += 1;
    }
    ExitCode::SUCCESS
}
