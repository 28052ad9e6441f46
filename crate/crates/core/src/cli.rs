//! Command-line front end: config resolution, mode dispatch and artifacts.
//!
//! A run is described by a [`RunConfig`] read from a JSON file; command-line
//! flags override its fields. The resolved config is always written next to
//! the outputs, and re-running from it reproduces them bitwise.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::blockwise::{fit_blocks, BlockConfig};
use crate::error::{Error, Result};
use crate::io::{format_value, load_observations, save_matrix};
use crate::local::KernelConfig;
use crate::mcmc::{prior_bounds, run_chain, McmcConfig, PriorSpec};
use crate::model::{
    Bounds, ContrastSolution, CressieReadConfig, DataMatrix, MomentModel, ThetaPoint, Variant,
};
use crate::pipeline::{Pipeline, VariantConfig};
use crate::simulator::{serve, simulate, SimulatorSpec};
use crate::solver::{fit_default, SolverConfig};

pub const RESOLVED_CONFIG: &str = "resolved-config.json";
pub const CONTRAST: &str = "contrast.json";
pub const SUMMARY: &str = "summary.json";
pub const SAMPLES: &str = "samples.csv";
pub const DIAGNOSTICS: &str = "diagnostics.json";
pub const SIMULATED: &str = "simulated.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fit,
    Summarize,
    Mcmc,
    Simulate,
}

/// Built-in moment functions; dimensions follow the data width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MomentModelSpec {
    Mean,
    #[default]
    MeanVariance,
    MeanUnitVariance,
    LinearScore,
}

impl MomentModelSpec {
    pub fn build(self, d_y: usize) -> Result<MomentModel> {
        match self {
            MomentModelSpec::Mean => Ok(MomentModel::mean(d_y)),
            MomentModelSpec::MeanVariance | MomentModelSpec::MeanUnitVariance if d_y != 1 => {
                Err(Error::LengthMismatch {
                    expected: 1,
                    got: d_y,
                })
            }
            MomentModelSpec::MeanVariance => Ok(MomentModel::mean_variance()),
            MomentModelSpec::MeanUnitVariance => Ok(MomentModel::mean_unit_variance()),
            MomentModelSpec::LinearScore if d_y < 2 => Err(Error::InvalidConfig(
                "linear_score needs at least one regressor column and a response".into(),
            )),
            MomentModelSpec::LinearScore => Ok(MomentModel::linear_score(d_y - 1)),
        }
    }
}

fn default_simulator() -> SimulatorSpec {
    SimulatorSpec::GaussianLocationScale
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub data_path: Option<PathBuf>,
    #[serde(default = "default_simulator")]
    pub simulator: SimulatorSpec,
    #[serde(default)]
    pub moment_model: MomentModelSpec,
    #[serde(default)]
    pub cr: CressieReadConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub variant: VariantConfig,
    #[serde(default)]
    pub mcmc: Option<McmcConfig>,
    #[serde(default)]
    pub prior: PriorSpec,
    /// θ for `summarize` and `simulate`; starting point for `mcmc`.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    /// Box Θ; defaults to the uniform prior's box, else unbounded.
    #[serde(default)]
    pub theta_bounds: Option<Bounds>,
    /// Number of draws for `simulate`.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "crlearn",
    version,
    about = "Likelihood-free inference with Cressie-Read learned statistics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit contrast probabilities to the observations.
    Fit(CommonArgs),
    /// Evaluate the learned statistic at one θ.
    Summarize(CommonArgs),
    /// Sample the posterior over θ.
    Mcmc(CommonArgs),
    /// Draw a data set from the simulator.
    Simulate(CommonArgs),
    /// Serve a built-in simulator over the external line protocol.
    #[command(hide = true)]
    SimWorker(WorkerArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Comma-separated θ.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    /// Simulator spec as JSON; defaults to the Gaussian location-scale model.
    #[arg(long)]
    pub simulator: Option<String>,
}

fn gamma_config(gamma: f64) -> Result<CressieReadConfig> {
    if gamma == 0.0 {
        Ok(CressieReadConfig::exponential_tilting())
    } else if gamma == -1.0 {
        Ok(CressieReadConfig::empirical_likelihood())
    } else {
        CressieReadConfig::general(gamma)
    }
}

fn variant_from_flag(current: &VariantConfig, v: Variant) -> Result<VariantConfig> {
    if current.variant() == v {
        return Ok(current.clone());
    }
    Ok(match v {
        Variant::Basic => VariantConfig::Basic,
        Variant::MultiRep => VariantConfig::MultiRep {
            n_reps: 10,
            parallel: true,
        },
        Variant::Conditional => VariantConfig::Conditional {
            kernel: KernelConfig::default(),
            form: Default::default(),
        },
        Variant::Subset => {
            return Err(Error::InvalidConfig(
                "the subset variant needs its indices in the config file".into(),
            ))
        }
        Variant::Blockwise => VariantConfig::Blockwise {
            block: BlockConfig::rate_rule(),
        },
    })
}

/// Merge the config file (if any) with flag overrides.
pub fn resolve(mode: Mode, args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.mode = Some(mode);
    if let Some(d) = &args.data {
        cfg.data_path = Some(d.clone());
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
        if let Some(m) = cfg.mcmc.as_mut() {
            m.seed = s;
        }
    }
    if let Some(g) = args.gamma {
        cfg.cr = CressieReadConfig {
            feasibility_margin: cfg.cr.feasibility_margin,
            ..gamma_config(g)?
        };
    }
    if let Some(v) = args.variant {
        cfg.variant = variant_from_flag(&cfg.variant, v)?;
    }
    if let Some(t) = &args.theta {
        cfg.theta = Some(t.clone());
    }
    if let Some(n) = args.n {
        cfg.n = Some(n);
    }
    cfg.cr.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_data(cfg: &RunConfig) -> Result<DataMatrix> {
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("this mode needs data_path (--data)".into()))?;
    load_observations(path)
}

fn theta_bounds(cfg: &RunConfig) -> Bounds {
    cfg.theta_bounds
        .clone()
        .or_else(|| prior_bounds(&cfg.prior))
        .unwrap_or_else(|| Bounds::unbounded(cfg.simulator.theta_dim()))
}

fn require_theta(cfg: &RunConfig) -> Result<Vec<f64>> {
    cfg.theta
        .clone()
        .ok_or_else(|| Error::InvalidConfig("this mode needs theta (--theta)".into()))
}

fn pipeline(cfg: &RunConfig, data: DataMatrix) -> Result<Pipeline> {
    let model = cfg.moment_model.build(data.cols())?;
    Pipeline::new(
        data,
        model,
        cfg.cr,
        cfg.solver,
        cfg.simulator.clone(),
        theta_bounds(cfg),
        cfg.variant.clone(),
    )
}

#[derive(Serialize)]
struct ContrastReport<'a> {
    moment_model: MomentModelSpec,
    cr: CressieReadConfig,
    variant: Variant,
    #[serde(flatten)]
    solution: &'a ContrastSolution,
}

#[derive(Serialize)]
struct SummaryReport<'a> {
    theta: &'a [f64],
    seed: u64,
    statistic: crate::model::LearnedStatistic,
    observed_beta: &'a [f64],
}

#[derive(Serialize)]
struct Diagnostics {
    n_iters: usize,
    burn_in: usize,
    seed: u64,
    acceptance_rate: f64,
    posterior_mean: Vec<f64>,
    posterior_sd: Vec<f64>,
    eps_tol: Option<f64>,
    eps_first_hit: Option<usize>,
    failed_evaluations: usize,
    initial_loglik: f64,
}

fn run_fit(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let data = load_data(cfg)?;
    let model = cfg.moment_model.build(data.cols())?;
    let solution = match &cfg.variant {
        VariantConfig::Blockwise { block } => fit_blocks(
            &data,
            &model,
            &cfg.cr,
            block,
            &cfg.solver,
            &model.default_beta(&data),
        )?,
        _ => fit_default(&data, &model, &cfg.cr, &cfg.solver)?,
    };
    let path = out.join(CONTRAST);
    write_json(
        &path,
        &ContrastReport {
            moment_model: cfg.moment_model,
            cr: cfg.cr,
            variant: cfg.variant.variant(),
            solution: &solution,
        },
    )?;
    Ok(vec![path])
}

fn run_summarize(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let theta = require_theta(cfg)?;
    let p = pipeline(cfg, load_data(cfg)?)?;
    let statistic = p.evaluate(&theta, cfg.seed)?;
    let path = out.join(SUMMARY);
    write_json(
        &path,
        &SummaryReport {
            theta: &theta,
            seed: cfg.seed,
            statistic,
            observed_beta: &p.observed().beta,
        },
    )?;
    Ok(vec![path])
}

fn run_mcmc(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mcfg = cfg
        .mcmc
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("mcmc mode needs an mcmc section".into()))?;
    let p = pipeline(cfg, load_data(cfg)?)?;
    let bounds = p.theta_bounds().clone();
    let theta0 = match &cfg.theta {
        Some(t) => t.clone(),
        None if bounds
            .lower
            .iter()
            .chain(&bounds.upper)
            .all(|v| v.is_finite()) =>
        {
            bounds.midpoint()
        }
        None => {
            return Err(Error::InvalidConfig(
                "mcmc needs theta or finite theta bounds for its starting point".into(),
            ))
        }
    };
    let theta0 = ThetaPoint::new(theta0, bounds)
        .map_err(|e| Error::InitialPointInfeasible(e.to_string()))?;
    let chain = run_chain(|t, seed| p.evaluate(t, seed), &cfg.prior, &theta0, mcfg)?;

    let samples_path = out.join(SAMPLES);
    let mut csv = String::new();
    let d = theta0.theta.len();
    let header: Vec<String> = std::iter::once("iteration".to_string())
        .chain((1..=d).map(|j| format!("theta_{j}")))
        .chain(["loglik".to_string(), "accepted".to_string()])
        .collect();
    csv.push_str(&header.join(","));
    csv.push('\n');
    for (k, s) in chain.samples.iter().enumerate() {
        let mut fields = vec![(k + 1).to_string()];
        fields.extend(s.iter().map(|v| format_value(*v)));
        fields.push(format_value(chain.loglik[k]));
        fields.push(u8::from(chain.accepted[k]).to_string());
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }
    fs::write(&samples_path, csv)?;

    let diag_path = out.join(DIAGNOSTICS);
    write_json(
        &diag_path,
        &Diagnostics {
            n_iters: mcfg.n_iters,
            burn_in: mcfg.burn_in,
            seed: chain.seed,
            acceptance_rate: chain.acceptance_rate,
            posterior_mean: chain.posterior_mean(),
            posterior_sd: chain.posterior_sd(),
            eps_tol: mcfg.eps_tol,
            eps_first_hit: chain.eps_first_hit,
            failed_evaluations: chain.failed_evaluations,
            initial_loglik: chain.loglik0,
        },
    )?;
    Ok(vec![samples_path, diag_path])
}

fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let theta = ThetaPoint::new(require_theta(cfg)?, theta_bounds(cfg))?;
    let n = cfg
        .n
        .ok_or_else(|| Error::InvalidConfig("simulate needs n (--n)".into()))?;
    let data = simulate(&cfg.simulator, &theta, n, cfg.seed)?;
    let header: Vec<String> = (1..=data.cols()).map(|j| format!("y{j}")).collect();
    let path = out.join(SIMULATED);
    save_matrix(&path, &data, Some(&header))?;
    Ok(vec![path])
}

/// Execute a resolved config; returns the written artifact paths.
pub fn execute(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mode = cfg
        .mode
        .ok_or_else(|| Error::InvalidConfig("mode is not set".into()))?;
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let resolved = out.join(RESOLVED_CONFIG);
    write_json(&resolved, cfg)?;
    let mut written = match mode {
        Mode::Fit => run_fit(cfg, out)?,
        Mode::Summarize => run_summarize(cfg, out)?,
        Mode::Mcmc => run_mcmc(cfg, out)?,
        Mode::Simulate => run_simulate(cfg, out)?,
    };
    written.insert(0, resolved);
    Ok(written)
}

pub fn run(cli: Cli) -> Result<()> {
    let (mode, args) = match cli.command {
        Command::Fit(a) => (Mode::Fit, a),
        Command::Summarize(a) => (Mode::Summarize, a),
        Command::Mcmc(a) => (Mode::Mcmc, a),
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::SimWorker(w) => {
            let spec = match w.simulator {
                Some(json) => serde_json::from_str(&json)?,
                None => SimulatorSpec::GaussianLocationScale,
            };
            let stdin = io::stdin();
            return serve(&spec, stdin.lock(), io::stdout().lock());
        }
    };
    let cfg = resolve(mode, &args)?;
    let written = execute(&cfg)?;
    let mut stdout = io::stdout().lock();
    for path in written {
        writeln!(stdout, "{}", path.display())?;
    }
    Ok(())
}

/// One-line JSON error report for stderr.
pub fn error_report(e: &Error) -> String {
    serde_json::json!({ "error": e.category(), "message": e.to_string() }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.simulator, SimulatorSpec::GaussianLocationScale);
        assert_eq!(cfg.variant, VariantConfig::Basic);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(
            &path,
            r#"{"seed": 3, "cr": {"gamma": 2.0}, "mcmc": {"n_iters": 10, "proposal_sd": [1, 1], "seed": 3}}"#,
        )
        .unwrap();
        let args = CommonArgs {
            config: Some(path),
            seed: Some(9),
            gamma: Some(0.0),
            variant: Some(Variant::Blockwise),
            ..Default::default()
        };
        let cfg = resolve(Mode::Mcmc, &args).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.mcmc.unwrap().seed, 9);
        assert_eq!(cfg.cr, CressieReadConfig::exponential_tilting());
        assert_eq!(
            cfg.variant,
            VariantConfig::Blockwise {
                block: BlockConfig::rate_rule()
            }
        );
    }

    #[test]
    fn subset_flag_needs_indices() {
        let args = CommonArgs {
            variant: Some(Variant::Subset),
            ..Default::default()
        };
        assert!(resolve(Mode::Summarize, &args).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let args = CommonArgs {
            theta: Some(vec![0.0, 1.0]),
            n: Some(5),
            seed: Some(7),
            ..Default::default()
        };
        let cfg = resolve(Mode::Simulate, &args).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn moment_model_dimensions() {
        assert_eq!(MomentModelSpec::Mean.build(3).unwrap().d_g(), 3);
        assert_eq!(MomentModelSpec::LinearScore.build(3).unwrap().d_beta(), 2);
        assert!(MomentModelSpec::MeanVariance.build(2).is_err());
        assert!(MomentModelSpec::LinearScore.build(1).is_err());
    }
}
