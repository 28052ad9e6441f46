//! Forward simulators: built-in stochastic models, an external process
//! speaking a JSON-lines protocol, and a replication runner.
//!
//! External protocol (one JSON document per line over the child's stdio):
//!
//! ```text
//! request: {"theta": [..], "n": <count>, "seed": <integer>}
//! reply:   {"y": [[..], ..]}  or  {"error": "<message>"}
//! ```
//!
//! An empty request line ends the session; the child then exits 0.

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataMatrix, ThetaPoint};
use crate::rng::{derive_seed, rng_from_seed};
use crate::summary::ReplicationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimulatorSpec {
    /// `y_i ~ Normal(θ₁, θ₂²)`.
    GaussianLocationScale,
    /// Rows `(x_i, y_i)` with `y_i = x_iᵀθ + ε_i`; design rows are cycled.
    LinearModel { design: Vec<Vec<f64>> },
    /// `y_i = θ₁ + θ₂ (y_{i−1} − θ₁) + ε_i` from the stationary law.
    Ar1,
    External {
        command: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_sec: f64,
        theta_dim: usize,
    },
}

fn default_timeout() -> f64 {
    30.0
}

impl SimulatorSpec {
    pub fn theta_dim(&self) -> usize {
        match self {
            SimulatorSpec::GaussianLocationScale | SimulatorSpec::Ar1 => 2,
            SimulatorSpec::LinearModel { design } => design.first().map_or(0, Vec::len),
            SimulatorSpec::External { theta_dim, .. } => *theta_dim,
        }
    }

    /// Output width, when known without running the simulator.
    pub fn d_y(&self) -> Option<usize> {
        match self {
            SimulatorSpec::GaussianLocationScale | SimulatorSpec::Ar1 => Some(1),
            SimulatorSpec::LinearModel { design } => design.first().map(|r| r.len() + 1),
            SimulatorSpec::External { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SimulatorSpec::LinearModel { design } => {
                let p = self.theta_dim();
                if p == 0 || design.iter().any(|r| r.len() != p) {
                    return Err(Error::InvalidConfig(
                        "linear model design must be a nonempty rectangular matrix".into(),
                    ));
                }
                if design.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "design contains non-finite values".into(),
                    ));
                }
            }
            SimulatorSpec::External {
                timeout_sec,
                theta_dim,
                ..
            } if !(*timeout_sec > 0.0) || *theta_dim == 0 => {
                return Err(Error::InvalidConfig(
                    "external simulator needs a positive timeout and theta_dim".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Draw `n` outputs at `theta`; deterministic given `seed`.
pub fn simulate(
    spec: &SimulatorSpec,
    theta: &ThetaPoint,
    n: usize,
    seed: u64,
) -> Result<DataMatrix> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Domain("simulation size must be at least 1".into()));
    }
    if !theta.in_bounds() {
        return Err(Error::BadTheta(format!("{:?} outside bounds", theta.theta)));
    }
    let t = &theta.theta;
    if t.len() != spec.theta_dim() {
        return Err(Error::BadTheta(format!(
            "expected {} parameters, got {}",
            spec.theta_dim(),
            t.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut z = || -> f64 { rng.sample(StandardNormal) };
    match spec {
        SimulatorSpec::GaussianLocationScale => {
            let (mu, sigma) = (t[0], t[1]);
            if !(sigma > 0.0) {
                return Err(Error::BadTheta(format!(
                    "scale must be positive, got {sigma}"
                )));
            }
            let y: Vec<f64> = (0..n).map(|_| mu + sigma * z()).collect();
            DataMatrix::new(n, 1, y)
        }
        SimulatorSpec::Ar1 => {
            let (mu, phi) = (t[0], t[1]);
            if !(phi.abs() < 1.0) {
                return Err(Error::BadTheta(format!(
                    "autoregressive coefficient must satisfy |phi| < 1, got {phi}"
                )));
            }
            let mut y = Vec::with_capacity(n);
            let mut prev = mu + z() / (1.0 - phi * phi).sqrt();
            y.push(prev);
            for _ in 1..n {
                prev = mu + phi * (prev - mu) + z();
                y.push(prev);
            }
            DataMatrix::new(n, 1, y)
        }
        SimulatorSpec::LinearModel { design } => {
            let p = t.len();
            let mut values = Vec::with_capacity(n * (p + 1));
            for i in 0..n {
                let x = &design[i % design.len()];
                let mean: f64 = x.iter().zip(t).map(|(a, b)| a * b).sum();
                values.extend_from_slice(x);
                values.push(mean + z());
            }
            DataMatrix::new(n, p + 1, values)
        }
        SimulatorSpec::External {
            command,
            args,
            timeout_sec,
            ..
        } => run_external(command, args, *timeout_sec, t, n, seed),
    }
}

#[derive(Serialize, Deserialize)]
struct Request {
    theta: Vec<f64>,
    n: usize,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Reply {
    #[serde(default)]
    y: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    error: Option<String>,
}

fn external(msg: impl Into<String>) -> Error {
    Error::ExternalFailure(msg.into())
}

fn run_external(
    command: &str,
    args: &[String],
    timeout_sec: f64,
    theta: &[f64],
    n: usize,
    seed: u64,
) -> Result<DataMatrix> {
    let deadline = Instant::now() + Duration::from_secs_f64(timeout_sec);
    let mut child = Command::new(command)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| external(format!("failed to spawn '{command}': {e}")))?;

    let request = serde_json::to_string(&Request {
        theta: theta.to_vec(),
        n,
        seed,
    })
    .map_err(|e| external(e.to_string()))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    // A child that exits without reading surfaces below as a missing reply.
    let _ = writeln!(stdin, "{request}").and_then(|_| writeln!(stdin));
    drop(stdin);

    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut line = String::new();
        let res = BufReader::new(stdout).read_line(&mut line).map(|_| line);
        let _ = tx.send(res);
    });

    let remaining = deadline.saturating_duration_since(Instant::now());
    let line = match rx.recv_timeout(remaining) {
        Ok(Ok(line)) => line,
        Ok(Err(e)) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(external(format!("reading reply: {e}")));
        }
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(external(format!("no reply within {timeout_sec} s")));
        }
    };

    let status = loop {
        match child.try_wait()? {
            Some(status) => break status,
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(external(format!(
                    "child did not exit within {timeout_sec} s"
                )));
            }
            None => thread::sleep(Duration::from_millis(2)),
        }
    };
    if !status.success() {
        return Err(external(format!("child exited with {status}")));
    }
    parse_reply(&line, n)
}

/// Decode one reply line into an `n`-row matrix.
pub fn parse_reply(line: &str, n: usize) -> Result<DataMatrix> {
    let line = line.trim();
    if line.is_empty() {
        return Err(external("empty reply"));
    }
    let reply: Reply =
        serde_json::from_str(line).map_err(|e| external(format!("malformed reply: {e}")))?;
    match (reply.y, reply.error) {
        (_, Some(msg)) => Err(external(format!("simulator reported: {msg}"))),
        (Some(rows), None) => {
            if rows.len() != n {
                return Err(external(format!("expected {n} rows, got {}", rows.len())));
            }
            DataMatrix::from_rows(&rows).map_err(|e| external(format!("bad reply matrix: {e}")))
        }
        (None, None) => Err(external("reply has neither 'y' nor 'error'")),
    }
}

/// Serve the external protocol for a built-in simulator until an empty line
/// or end of input.
pub fn serve<R: BufRead, W: Write>(spec: &SimulatorSpec, input: R, mut output: W) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            break;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                let theta = ThetaPoint::unbounded(req.theta);
                match simulate(spec, &theta, req.n, req.seed) {
                    Ok(data) => {
                        let rows: Vec<&[f64]> = data.iter_rows().collect();
                        serde_json::json!({ "y": rows })
                    }
                    Err(e) => serde_json::json!({ "error": e.to_string() }),
                }
            }
            Err(e) => serde_json::json!({ "error": format!("bad request: {e}") }),
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}

/// `n_reps` independent simulations, ordered by replication index.
pub fn run_replications(
    spec: &SimulatorSpec,
    theta: &ThetaPoint,
    n: usize,
    rcfg: &ReplicationConfig,
) -> Result<Vec<DataMatrix>> {
    rcfg.validate()?;
    let one = |r: usize| simulate(spec, theta, n, derive_seed(rcfg.base_seed, r as u64));
    let results: Vec<Result<DataMatrix>> = if rcfg.parallel {
        (0..rcfg.n_reps).into_par_iter().map(one).collect()
    } else {
        (0..rcfg.n_reps).map(one).collect()
    };
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(d) => ok.push(d),
            Err(e) => failed.push((r, e)),
        }
    }
    if failed.is_empty() {
        Ok(ok)
    } else {
        Err(Error::Replications(failed))
    }
}
