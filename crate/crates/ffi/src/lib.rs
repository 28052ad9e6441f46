//! C ABI for crlearn.
//!
//! Every fallible entry point returns a [`CrlStatus`]; on failure the message
//! is kept per thread and can be read with [`crl_last_error_message`].
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Matrices are row-major `double`
//! arrays. Copy functions take the destination capacity and fail with
//! `CRL_STATUS_LENGTH_MISMATCH` when it is too small.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use crlearn::mcmc::{run_chain, Chain, McmcConfig, PriorSpec};
use crlearn::pipeline::{Pipeline, VariantConfig};
use crlearn::simulator::{simulate, SimulatorSpec};
use crlearn::summary::learned_basic;
use crlearn::{
    cr_objective, fit_default, Bounds, ContrastSolution, CressieReadConfig, DataMatrix, Error,
    MomentModel, SolverConfig, ThetaPoint,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrlStatus {
    Ok = 0,
    NullPointer,
    Domain,
    LengthMismatch,
    InvalidConfig,
    InfeasibleBase,
    NoConvergence,
    NoFeasibleBeta,
    NotConverged,
    EmptyReplications,
    EmptyMask,
    DegenerateRow,
    BadBlockLen,
    BadTheta,
    ExternalFailure,
    Replications,
    InitialPointInfeasible,
    Parse,
    NonFiniteValue,
    Io,
    Panic,
}

impl From<&Error> for CrlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => CrlStatus::Domain,
            Error::LengthMismatch { .. } => CrlStatus::LengthMismatch,
            Error::InvalidConfig(_) => CrlStatus::InvalidConfig,
            Error::InfeasibleBase(_) => CrlStatus::InfeasibleBase,
            Error::NoConvergence { .. } => CrlStatus::NoConvergence,
            Error::NoFeasibleBeta => CrlStatus::NoFeasibleBeta,
            Error::NotConverged => CrlStatus::NotConverged,
            Error::EmptyReplications => CrlStatus::EmptyReplications,
            Error::EmptyMask => CrlStatus::EmptyMask,
            Error::DegenerateRow(_) => CrlStatus::DegenerateRow,
            Error::BadBlockLen { .. } => CrlStatus::BadBlockLen,
            Error::BadTheta(_) => CrlStatus::BadTheta,
            Error::ExternalFailure(_) => CrlStatus::ExternalFailure,
            Error::Replications(_) => CrlStatus::Replications,
            Error::InitialPointInfeasible(_) => CrlStatus::InitialPointInfeasible,
            Error::Parse { .. } => CrlStatus::Parse,
            Error::NonFiniteValue { .. } => CrlStatus::NonFiniteValue,
            Error::Io(_) => CrlStatus::Io,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrlBranch {
    General = 0,
    /// γ → 0 limit.
    ExponentialTilting,
    /// γ → −1 limit.
    EmpiricalLikelihood,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrlMomentModel {
    /// `y − β`, one parameter per data column.
    Mean = 0,
    /// `(y − β₁, (y − β₁)² − β₂)`; one data column.
    MeanVariance,
    /// `(y − β, (y − β)² − 1)`; one data column.
    MeanUnitVariance,
    /// Rows `(x, y)`; score `x (y − xᵀβ)`.
    LinearScore,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrlSimulator {
    /// θ = (μ, σ).
    GaussianLocationScale = 0,
    /// θ = (μ, φ) with |φ| < 1.
    Ar1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlStatistic {
    pub value: f64,
    pub log_ratio_term: f64,
    pub distance_term: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlMcmcOptions {
    pub n_iters: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Accept on the likelihood ratio alone, ignoring the prior.
    pub likelihood_only_acceptance: bool,
    /// Redraw simulations at every proposal.
    pub resimulate_per_proposal: bool,
}

/// Observation or simulation data.
pub struct CrlData(DataMatrix);

/// Fitted contrast probabilities and parameters.
pub struct CrlSolution(ContrastSolution);

/// MCMC output.
pub struct CrlChain(Chain);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Run `f`, translating errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), (CrlStatus, String)>>(f: F) -> CrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            CrlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CrlStatus::Panic
        }
    }
}

fn lib(e: Error) -> (CrlStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (CrlStatus, String) {
    (CrlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn input<'a>(
    ptr: *const f64,
    len: usize,
    what: &str,
) -> Result<&'a [f64], (CrlStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, (CrlStatus, String)> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, capacity: usize) -> Result<(), (CrlStatus, String)> {
    if capacity < src.len() {
        return Err((
            CrlStatus::LengthMismatch,
            format!("destination holds {capacity}, need {}", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), (CrlStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn cr_config(gamma: f64, branch: CrlBranch) -> Result<CressieReadConfig, (CrlStatus, String)> {
    match branch {
        CrlBranch::General => CressieReadConfig::general(gamma).map_err(lib),
        CrlBranch::ExponentialTilting => Ok(CressieReadConfig::exponential_tilting()),
        CrlBranch::EmpiricalLikelihood => Ok(CressieReadConfig::empirical_likelihood()),
    }
}

fn moment_model(kind: CrlMomentModel, d_y: usize) -> Result<MomentModel, (CrlStatus, String)> {
    let mismatch = |expected| lib(Error::LengthMismatch { expected, got: d_y });
    match kind {
        CrlMomentModel::Mean => Ok(MomentModel::mean(d_y)),
        CrlMomentModel::MeanVariance if d_y == 1 => Ok(MomentModel::mean_variance()),
        CrlMomentModel::MeanUnitVariance if d_y == 1 => Ok(MomentModel::mean_unit_variance()),
        CrlMomentModel::MeanVariance | CrlMomentModel::MeanUnitVariance => Err(mismatch(1)),
        CrlMomentModel::LinearScore if d_y >= 2 => Ok(MomentModel::linear_score(d_y - 1)),
        CrlMomentModel::LinearScore => Err(mismatch(2)),
    }
}

fn simulator(kind: CrlSimulator) -> SimulatorSpec {
    match kind {
        CrlSimulator::GaussianLocationScale => SimulatorSpec::GaussianLocationScale,
        CrlSimulator::Ar1 => SimulatorSpec::Ar1,
    }
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length plus one, so a
/// caller can size the buffer with a first call passing `len = 0`.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null when `len` is 0.
#[no_mangle]
pub unsafe extern "C" fn crl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Build a `rows × cols` data matrix from row-major `values`.
///
/// # Safety
/// `values` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crl_data_new(
    values: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut CrlData,
) -> CrlStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| lib(Error::Domain("rows * cols overflows".into())))?;
        let v = input(values, len, "values")?;
        let m = DataMatrix::new(rows, cols, v.to_vec()).map_err(lib)?;
        store(out, CrlData(m))
    })
}

/// # Safety
/// `data` must come from this library and not be used afterwards; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn crl_data_free(data: *mut CrlData) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// # Safety
/// `data` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crl_data_rows(data: *const CrlData) -> usize {
    data.as_ref().map_or(0, |d| d.0.rows())
}

/// # Safety
/// `data` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crl_data_cols(data: *const CrlData) -> usize {
    data.as_ref().map_or(0, |d| d.0.cols())
}

/// # Safety
/// `data` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn crl_data_copy_values(
    data: *const CrlData,
    out: *mut f64,
    capacity: usize,
) -> CrlStatus {
    guard(|| copy_out(handle(data, "data")?.0.values(), out, capacity))
}

/// Draw `n` rows from a built-in simulator.
///
/// # Safety
/// `theta` must point to `theta_len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crl_simulate(
    kind: CrlSimulator,
    theta: *const f64,
    theta_len: usize,
    n: usize,
    seed: u64,
    out: *mut *mut CrlData,
) -> CrlStatus {
    guard(|| {
        let t = input(theta, theta_len, "theta")?;
        let d = simulate(
            &simulator(kind),
            &ThetaPoint::unbounded(t.to_vec()),
            n,
            seed,
        )
        .map_err(lib)?;
        store(out, CrlData(d))
    })
}

/// Cressie-Read objective of a probability vector.
///
/// # Safety
/// `pi` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crl_cr_objective(
    pi: *const f64,
    n: usize,
    gamma: f64,
    branch: CrlBranch,
    out: *mut f64,
) -> CrlStatus {
    guard(|| {
        let p = input(pi, n, "pi")?;
        let v = cr_objective(p, &cr_config(gamma, branch)?).map_err(lib)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// Minimum-discrepancy fit from the model's default starting point.
///
/// # Safety
/// `data` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crl_fit(
    data: *const CrlData,
    model: CrlMomentModel,
    gamma: f64,
    branch: CrlBranch,
    out: *mut *mut CrlSolution,
) -> CrlStatus {
    guard(|| {
        let d = &handle(data, "data")?.0;
        let m = moment_model(model, d.cols())?;
        let sol = fit_default(d, &m, &cr_config(gamma, branch)?, &SolverConfig::default())
            .map_err(lib)?;
        store(out, CrlSolution(sol))
    })
}

/// # Safety
/// `sol` must come from this library and not be used afterwards; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn crl_solution_free(sol: *mut CrlSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Number of probabilities.
///
/// # Safety
/// `sol` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crl_solution_len(sol: *const CrlSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.pi.len())
}

/// # Safety
/// `sol` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crl_solution_beta_len(sol: *const CrlSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.beta.len())
}

/// # Safety
/// `sol` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crl_solution_lambda_len(sol: *const CrlSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.lambda.len())
}

/// # Safety
/// `sol` must be a live handle or null (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn crl_solution_discrepancy(sol: *const CrlSolution) -> f64 {
    sol.as_ref().map_or(f64::NAN, |s| s.0.discrepancy)
}

/// # Safety
/// `sol` must be a live handle or null (returns false).
#[no_mangle]
pub unsafe extern "C" fn crl_solution_converged(sol: *const CrlSolution) -> bool {
    sol.as_ref().is_some_and(|s| s.0.converged)
}

/// # Safety
/// `sol` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn crl_solution_copy_pi(
    sol: *const CrlSolution,
    out: *mut f64,
    capacity: usize,
) -> CrlStatus {
    guard(|| copy_out(&handle(sol, "solution")?.0.pi, out, capacity))
}

/// # Safety
/// `sol` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn crl_solution_copy_beta(
    sol: *const CrlSolution,
    out: *mut f64,
    capacity: usize,
) -> CrlStatus {
    guard(|| copy_out(&handle(sol, "solution")?.0.beta, out, capacity))
}

/// # Safety
/// `sol` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn crl_solution_copy_lambda(
    sol: *const CrlSolution,
    out: *mut f64,
    capacity: usize,
) -> CrlStatus {
    guard(|| copy_out(&handle(sol, "solution")?.0.lambda, out, capacity))
}

/// Basic learned statistic between an observed and a simulated fit.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crl_learned_basic(
    obs: *const CrlSolution,
    sim: *const CrlSolution,
    out: *mut CrlStatistic,
) -> CrlStatus {
    guard(|| {
        let s = learned_basic(&handle(obs, "obs")?.0, &handle(sim, "sim")?.0).map_err(lib)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = CrlStatistic {
            value: s.value,
            log_ratio_term: s.log_ratio_term,
            distance_term: s.distance_term,
        };
        Ok(())
    })
}

/// Random-walk Metropolis with the basic learned statistic and a flat prior
/// on the box `[lower, upper]` (each of length `dim`).
///
/// # Safety
/// `obs` must be a live handle; `lower`, `upper`, `theta0` and
/// `proposal_sd` must each point to `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crl_mcmc_run(
    obs: *const CrlData,
    model: CrlMomentModel,
    gamma: f64,
    branch: CrlBranch,
    sim: CrlSimulator,
    dim: usize,
    lower: *const f64,
    upper: *const f64,
    theta0: *const f64,
    proposal_sd: *const f64,
    options: CrlMcmcOptions,
    out: *mut *mut CrlChain,
) -> CrlStatus {
    guard(|| {
        let data = handle(obs, "obs")?.0.clone();
        let lo = input(lower, dim, "lower")?.to_vec();
        let hi = input(upper, dim, "upper")?.to_vec();
        let t0 = input(theta0, dim, "theta0")?.to_vec();
        let sd = input(proposal_sd, dim, "proposal_sd")?.to_vec();
        let bounds = Bounds::new(lo.clone(), hi.clone()).map_err(lib)?;
        let m = moment_model(model, data.cols())?;
        let pipeline = Pipeline::new(
            data,
            m,
            cr_config(gamma, branch)?,
            SolverConfig::default(),
            simulator(sim),
            bounds.clone(),
            VariantConfig::Basic,
        )
        .map_err(lib)?;
        let cfg = McmcConfig {
            n_iters: options.n_iters,
            proposal_sd: sd,
            seed: options.seed,
            burn_in: options.burn_in,
            eps_tol: None,
            likelihood_only_acceptance: options.likelihood_only_acceptance,
            resimulate_per_proposal: options.resimulate_per_proposal,
        };
        let prior = PriorSpec::Uniform {
            lower: lo,
            upper: hi,
        };
        let start = ThetaPoint::new(t0, bounds)
            .map_err(|e| lib(Error::InitialPointInfeasible(e.to_string())))?;
        let chain = run_chain(|t, s| pipeline.evaluate(t, s), &prior, &start, &cfg).map_err(lib)?;
        store(out, CrlChain(chain))
    })
}

/// # Safety
/// `chain` must come from this library and not be used afterwards; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn crl_chain_free(chain: *mut CrlChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Number of iterations stored.
///
/// # Safety
/// `chain` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crl_chain_len(chain: *const CrlChain) -> usize {
    chain.as_ref().map_or(0, |c| c.0.samples.len())
}

/// # Safety
/// `chain` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crl_chain_dim(chain: *const CrlChain) -> usize {
    chain.as_ref().map_or(0, |c| c.0.theta0.len())
}

/// # Safety
/// `chain` must be a live handle or null (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn crl_chain_acceptance_rate(chain: *const CrlChain) -> f64 {
    chain.as_ref().map_or(f64::NAN, |c| c.0.acceptance_rate)
}

/// Row-major `len × dim` samples.
///
/// # Safety
/// `chain` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn crl_chain_copy_samples(
    chain: *const CrlChain,
    out: *mut f64,
    capacity: usize,
) -> CrlStatus {
    guard(|| {
        let flat: Vec<f64> = handle(chain, "chain")?.0.samples.concat();
        copy_out(&flat, out, capacity)
    })
}

/// Per-iteration learned statistic values.
///
/// # Safety
/// `chain` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn crl_chain_copy_loglik(
    chain: *const CrlChain,
    out: *mut f64,
    capacity: usize,
) -> CrlStatus {
    guard(|| copy_out(&handle(chain, "chain")?.0.loglik, out, capacity))
}

/// Posterior mean after burn-in, `dim` values.
///
/// # Safety
/// `chain` must be a live handle; `out` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn crl_chain_posterior_mean(
    chain: *const CrlChain,
    out: *mut f64,
    capacity: usize,
) -> CrlStatus {
    guard(|| copy_out(&handle(chain, "chain")?.0.posterior_mean(), out, capacity))
}
