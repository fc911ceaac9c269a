//! Building datasets by querying a predictor: either an analytic term sum
//! evaluated in-process, or an external process speaking the line-delimited
//! JSON probe protocol over its standard input and output.
//!
//! The server opens with a banner
//! `{"protocol":"flm-probe","version":1,"task":"image_to_scalar"}`, then
//! answers each request `{"id":7,"nx":28,"ny":28,"input":[...]}` with
//! `{"id":7,"output":[...]}` (or `{"id":7,"error":"..."}`). Closing the
//! server's input ends the session.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlmError, Result};
use crate::fields::{Dataset, Field2D, Grid2D, Sample, TaskKind};
use crate::library::TermSpec;
use crate::synth::{common_task, output_from_values, superpose, task_points, InputSampler};

pub const PROTOCOL: &str = "flm-probe";
pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorEndpoint {
    InProcessAnalytic {
        task: TaskKind,
        terms: Vec<(TermSpec, f64)>,
    },
    External {
        command: Vec<String>,
        workdir: Option<PathBuf>,
        timeout: Duration,
    },
}

/// A deterministic stand-in for a trained network: `Σ w·term(f)`.
pub fn builtin_analytic_predictor(terms: Vec<(TermSpec, f64)>) -> Result<PredictorEndpoint> {
    let task = common_task(&terms)?;
    Ok(PredictorEndpoint::InProcessAnalytic { task, terms })
}

impl PredictorEndpoint {
    pub fn external(command: Vec<String>) -> Self {
        PredictorEndpoint::External {
            command,
            workdir: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePlan {
    pub sampler: InputSampler,
    pub q: usize,
    pub seed: u64,
    pub task: TaskKind,
    pub grid: Grid2D,
    /// Output length for line tasks.
    #[serde(default)]
    pub line_n: usize,
}

impl ProbePlan {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(FlmError::InvalidArgument("probe plan needs at least one sample".into()));
        }
        if self.task == TaskKind::ImageToLine && self.line_n == 0 {
            return Err(FlmError::InvalidArgument("line probes need an output length".into()));
        }
        self.sampler.validate()
    }

    pub fn output_len(&self) -> usize {
        match self.task {
            TaskKind::ImageToScalar => 1,
            TaskKind::ImageToLine => self.line_n,
            TaskKind::ImageToImage => self.grid.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Banner {
    pub protocol: String,
    pub version: u32,
    pub task: TaskKind,
}

impl Banner {
    pub fn new(task: TaskKind) -> Self {
        Banner {
            protocol: PROTOCOL.into(),
            version: PROTOCOL_VERSION,
            task,
        }
    }
}

/// Validates a banner line against the task a plan expects.
pub fn parse_banner(line: &str, expected: TaskKind) -> Result<Banner> {
    let value: serde_json::Value = serde_json::from_str(line.trim())
        .map_err(|e| FlmError::Handshake(format!("malformed banner `{}`: {e}", line.trim())))?;
    let protocol = value.get("protocol").and_then(|v| v.as_str());
    if protocol != Some(PROTOCOL) {
        return Err(FlmError::Handshake(format!(
            "expected protocol \"{PROTOCOL}\", got {}",
            value.get("protocol").map_or("nothing".into(), |v| v.to_string())
        )));
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == PROTOCOL_VERSION as u64 => {}
        Some(v) => {
            return Err(FlmError::Handshake(format!(
                "unsupported protocol version {v} (expected {PROTOCOL_VERSION})"
            )))
        }
        None => return Err(FlmError::Handshake("banner has no version".into())),
    }
    let task = value
        .get("task")
        .and_then(|v| v.as_str())
        .and_then(TaskKind::parse)
        .ok_or_else(|| FlmError::Handshake(format!("banner has no valid task: {value}")))?;
    if task != expected {
        return Err(FlmError::Handshake(format!(
            "task mismatch: predictor serves {task}, plan expects {expected}"
        )));
    }
    Ok(Banner::new(task))
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    nx: usize,
    ny: usize,
    input: &'a [f64],
}

/// Live connection to an external predictor process.
pub struct ExternalSession {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    last_good: Option<u64>,
    banner: Banner,
}

impl ExternalSession {
    /// Spawns the predictor and validates its banner.
    pub fn start(
        command: &[String],
        workdir: Option<&PathBuf>,
        timeout: Duration,
        task: TaskKind,
    ) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| FlmError::InvalidArgument("empty predictor command".into()))?;
        if timeout.is_zero() {
            return Err(FlmError::InvalidArgument("probe timeout must be positive".into()));
        }
        let mut cmd = Command::new(program);
        cmd.args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(dir) = workdir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| FlmError::io(program, e))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut session = ExternalSession {
            child,
            stdin,
            lines: rx,
            timeout,
            last_good: None,
            banner: Banner::new(task),
        };
        let line = match session.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                session.kill();
                return Err(FlmError::Handshake(format!("reading banner: {e}")));
            }
            Err(RecvTimeoutError::Timeout) => {
                session.kill();
                return Err(FlmError::Handshake(format!(
                    "no banner within {:.1} s",
                    timeout.as_secs_f64()
                )));
            }
            Err(RecvTimeoutError::Disconnected) => {
                session.kill();
                return Err(FlmError::Handshake("predictor exited before sending a banner".into()));
            }
        };
        match parse_banner(&line, task) {
            Ok(b) => session.banner = b,
            Err(e) => {
                session.kill();
                return Err(e);
            }
        }
        Ok(session)
    }

    pub fn banner(&self) -> &Banner {
        &self.banner
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn exited(&self, id: u64) -> FlmError {
        let last = self
            .last_good
            .map_or("none".to_string(), |v| v.to_string());
        FlmError::Probe {
            id,
            message: format!("predictor exited mid-session (last good response id: {last})"),
        }
    }

    /// Sends one request and waits for the matching response.
    pub fn request(&mut self, id: u64, input: &Field2D, expected_len: usize) -> Result<Vec<f64>> {
        let g = input.grid();
        let mut line = serde_json::to_string(&Request {
            id,
            nx: g.nx(),
            ny: g.ny(),
            input: input.values(),
        })?;
        line.push('\n');
        let stdin = self.stdin.as_mut().expect("session open");
        if stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()).is_err() {
            self.kill();
            return Err(self.exited(id));
        }
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => {
                self.kill();
                return Err(FlmError::Probe {
                    id,
                    message: format!("reading response: {e}"),
                });
            }
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                return Err(FlmError::Probe {
                    id,
                    message: format!("no response within {:.1} s", self.timeout.as_secs_f64()),
                });
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.kill();
                return Err(self.exited(id));
            }
        };
        let values = parse_response(&reply, id, expected_len);
        if values.is_err() {
            self.kill();
        } else {
            self.last_good = Some(id);
        }
        values
    }

    /// Closes the predictor's input and waits for it to exit.
    pub fn close(mut self) -> Result<()> {
        drop(self.stdin.take());
        let deadline = Instant::now() + self.timeout;
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) if status.success() => return Ok(()),
                Ok(Some(status)) => {
                    return Err(FlmError::Probe {
                        id: self.last_good.unwrap_or(0),
                        message: format!("predictor exited with {status} on shutdown"),
                    })
                }
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                Ok(None) => {
                    self.kill();
                    return Err(FlmError::Probe {
                        id: self.last_good.unwrap_or(0),
                        message: "predictor did not exit after its input closed".into(),
                    });
                }
                Err(e) => return Err(FlmError::io("predictor", e)),
            }
        }
    }
}

impl Drop for ExternalSession {
    fn drop(&mut self) {
        if self.stdin.is_some() {
            self.kill();
        }
    }
}

fn parse_response(line: &str, id: u64, expected_len: usize) -> Result<Vec<f64>> {
    let fail = |message: String| FlmError::Probe { id, message };
    let value: serde_json::Value =
        serde_json::from_str(line.trim()).map_err(|e| fail(format!("malformed response: {e}")))?;
    match value.get("id").and_then(|v| v.as_u64()) {
        Some(got) if got == id => {}
        Some(got) => return Err(fail(format!("out-of-order response id {got}"))),
        None => return Err(fail("response has no id".into())),
    }
    if let Some(err) = value.get("error") {
        return Err(fail(format!("predictor error: {}", err.as_str().unwrap_or(&err.to_string()))));
    }
    let out = value
        .get("output")
        .and_then(|v| v.as_array())
        .ok_or_else(|| fail("response has no output array".into()))?;
    if out.len() != expected_len {
        return Err(fail(format!(
            "shape mismatch: expected {expected_len} output values, got {}",
            out.len()
        )));
    }
    out.iter()
        .enumerate()
        .map(|(k, v)| {
            v.as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| fail(format!("non-finite or non-numeric output value {v} at index {k}")))
        })
        .collect()
}

/// Checks that an endpoint serves `task`. External endpoints are started,
/// checked and shut down.
pub fn handshake(endpoint: &PredictorEndpoint, task: TaskKind) -> Result<Banner> {
    match endpoint {
        PredictorEndpoint::InProcessAnalytic { task: served, .. } => {
            let line = serde_json::to_string(&Banner::new(*served))?;
            parse_banner(&line, task)
        }
        PredictorEndpoint::External {
            command,
            workdir,
            timeout,
        } => {
            let session = ExternalSession::start(command, workdir.as_ref(), *timeout, task)?;
            let banner = session.banner().clone();
            session.close()?;
            Ok(banner)
        }
    }
}

/// Queries the endpoint on `plan.q` inputs drawn from the plan's sampler.
pub fn probe(endpoint: &PredictorEndpoint, plan: &ProbePlan) -> Result<Dataset> {
    plan.validate()?;
    let inputs: Vec<Field2D> = (0..plan.q)
        .into_par_iter()
        .map(|i| plan.sampler.draw(plan.seed, i, plan.grid).map(|d| d.0))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let outputs: Vec<Vec<f64>> = match endpoint {
        PredictorEndpoint::InProcessAnalytic { task, terms } => {
            if *task != plan.task {
                return Err(FlmError::Handshake(format!(
                    "task mismatch: predictor serves {task}, plan expects {}",
                    plan.task
                )));
            }
            let points = task_points(plan.task, plan.grid, plan.line_n);
            inputs
                .par_iter()
                .enumerate()
                .map(|(i, f)| {
                    superpose(terms, f, &points).map_err(|e| FlmError::Probe {
                        id: i as u64,
                        message: e.to_string(),
                    })
                })
                .collect::<Vec<_>>()
                .into_iter()
                .collect::<Result<_>>()?
        }
        PredictorEndpoint::External {
            command,
            workdir,
            timeout,
        } => {
            let mut session = ExternalSession::start(command, workdir.as_ref(), *timeout, plan.task)?;
            let mut outs = Vec::with_capacity(plan.q);
            for (i, f) in inputs.iter().enumerate() {
                outs.push(session.request(i as u64, f, plan.output_len())?);
            }
            session.close()?;
            outs
        }
    };
    let samples = inputs
        .into_iter()
        .zip(outputs)
        .enumerate()
        .map(|(i, (input, values))| {
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(FlmError::Probe {
                    id: i as u64,
                    message: format!("non-finite output value {v}"),
                });
            }
            Ok(Sample {
                output: output_from_values(plan.task, plan.grid, values)?,
                input,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(plan.task, samples)
}
