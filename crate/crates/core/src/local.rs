//! Local (kernel-conditioned) Cressie-Read fits under conditional moment
//! restrictions, with an optional subset mask over observations.
//!
//! Row `i` of the solution tilts the kernel weights `w_i·` toward satisfying
//! `Σ_j π_ij g(y_j^sim, β) = 0`; all rows share one β chosen by an outer
//! Nelder-Mead search on the summed row divergences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cr_divergence, CressieReadConfig, DataMatrix, MomentModel};
use crate::solver::dual::max_norm;
use crate::solver::{nelder_mead, MomentMap, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
    Uniform,
}

impl Kernel {
    /// Unnormalized profile; constants cancel in the row normalization.
    fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * u * u).exp(),
            Kernel::Epanechnikov => (1.0 - u * u).max(0.0),
            Kernel::Uniform => {
                if u.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed,
    #[default]
    Silverman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default)]
    pub kernel: Kernel,
    /// Used when `bandwidth_rule` is `Fixed`.
    #[serde(default = "one")]
    pub bandwidth: f64,
    #[serde(default)]
    pub bandwidth_rule: BandwidthRule,
}

fn one() -> f64 {
    1.0
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Gaussian,
            bandwidth: 1.0,
            bandwidth_rule: BandwidthRule::Silverman,
        }
    }
}

impl KernelConfig {
    pub fn fixed(kernel: Kernel, bandwidth: f64) -> Self {
        Self {
            kernel,
            bandwidth,
            bandwidth_rule: BandwidthRule::Fixed,
        }
    }

    /// Per-coordinate bandwidths for `data`.
    pub fn bandwidths(&self, data: &DataMatrix) -> Result<Vec<f64>> {
        match self.bandwidth_rule {
            BandwidthRule::Fixed => {
                if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "fixed bandwidth must be positive, got {}",
                        self.bandwidth
                    )));
                }
                Ok(vec![self.bandwidth; data.cols()])
            }
            BandwidthRule::Silverman => Ok((0..data.cols()).map(|c| silverman(data, c)).collect()),
        }
    }
}

/// Silverman's rule of thumb for one coordinate; the multivariate normal
/// reference rule when `d > 1`. Constant coordinates get bandwidth 1.
fn silverman(data: &DataMatrix, col: usize) -> f64 {
    let n = data.rows();
    let d = data.cols();
    if n < 2 {
        return 1.0;
    }
    let mut xs: Vec<f64> = data.iter_rows().map(|r| r[col]).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let nf = n as f64;
    let h = if d == 1 {
        xs.sort_by(f64::total_cmp);
        let iqr = quantile(&xs, 0.75) - quantile(&xs, 0.25);
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        0.9 * spread * nf.powf(-0.2)
    } else {
        let df = d as f64;
        sd * (4.0 / ((df + 2.0) * nf)).powf(1.0 / (df + 4.0))
    };
    if h > 0.0 && h.is_finite() {
        h
    } else {
        1.0
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Row-stochastic `n × n` matrix of kernel weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelWeightMatrix {
    n: usize,
    w: Vec<f64>,
}

impl KernelWeightMatrix {
    pub fn new(n: usize, w: Vec<f64>) -> Result<Self> {
        if n == 0 || w.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: w.len(),
            });
        }
        for i in 0..n {
            let row = &w[i * n..(i + 1) * n];
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Domain(format!("row {i} has a negative weight")));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("row {i} does not sum to 1")));
            }
        }
        Ok(Self { n, w })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            n,
            w: vec![1.0 / n as f64; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
}

/// `w_ij = ψ((y_i − y_j)/h) / Σ_k ψ((y_i − y_k)/h)` with product kernels for
/// multivariate observations.
pub fn kernel_weights(obs: &DataMatrix, cfg: &KernelConfig) -> Result<KernelWeightMatrix> {
    let n = obs.rows();
    let h = cfg.bandwidths(obs)?;
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        let yi = obs.row(i);
        let row = &mut w[i * n..(i + 1) * n];
        for (j, slot) in row.iter_mut().enumerate() {
            let yj = obs.row(j);
            *slot = yi
                .iter()
                .zip(yj)
                .zip(&h)
                .map(|((a, b), hc)| cfg.kernel.eval((a - b) / hc))
                .product();
        }
        let total: f64 = row.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegenerateRow(i));
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(KernelWeightMatrix { n, w })
}

/// Indicator of which observations belong to the subset of interest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetMask {
    pub selected: Vec<bool>,
}

impl SubsetMask {
    pub fn new(selected: Vec<bool>) -> Self {
        Self { selected }
    }

    pub fn all(n: usize) -> Self {
        Self {
            selected: vec![true; n],
        }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut selected = vec![false; n];
        for &i in indices {
            *selected.get_mut(i).ok_or(Error::LengthMismatch {
                expected: n,
                got: i + 1,
            })? = true;
        }
        Ok(Self { selected })
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }

    pub fn is_selected(&self, i: usize) -> bool {
        self.selected[i]
    }
}

/// How the row weights depend on the multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocalForm {
    /// `w_ij (1 + λ_iᵀg_j)^{1/γ}`, consistent with the stationarity conditions.
    #[default]
    Derived,
    /// `w_ij (1 + λ_iᵀg_j)` for every γ; agrees with `Derived` at γ = 1.
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalContrastSolution {
    pub n: usize,
    /// Row-major `n × n`, each row on the simplex.
    pub pi: Vec<f64>,
    /// Row-major `n × d_g`; zero rows for unselected observations.
    pub lambdas: Vec<f64>,
    pub d_g: usize,
    pub beta: Vec<f64>,
    /// Sum of the (selected) row divergences from the kernel weights.
    pub discrepancy: f64,
    /// Per-row max-norm of `Σ_j π_ij g_j`.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl LocalContrastSolution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.pi[i * self.n..(i + 1) * self.n]
    }

    pub fn lambda(&self, i: usize) -> &[f64] {
        &self.lambdas[i * self.d_g..(i + 1) * self.d_g]
    }
}

struct RowFit {
    pi: Vec<f64>,
    lambda: Vec<f64>,
    residual: f64,
    divergence: f64,
}

struct LocalProblem<'a> {
    weights: &'a KernelWeightMatrix,
    sim: &'a DataMatrix,
    model: &'a MomentModel,
    cfg: CressieReadConfig,
    tilt_cfg: CressieReadConfig,
    mask: Option<&'a SubsetMask>,
    solver: &'a SolverConfig,
}

impl LocalProblem<'_> {
    fn selected(&self, i: usize) -> bool {
        self.mask.is_none_or(|m| m.is_selected(i))
    }

    fn solve_rows(&self, beta: &[f64]) -> Result<Vec<RowFit>> {
        let n = self.weights.n();
        let d_g = self.model.d_g();
        let g = self.model.moments(self.sim, beta)?;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let w = self.weights.row(i);
                if !self.selected(i) {
                    let map = MomentMap::new(&g, d_g, Some(w), &self.tilt_cfg)?;
                    return Ok(RowFit {
                        pi: w.to_vec(),
                        lambda: vec![0.0; d_g],
                        residual: map.residual(&vec![0.0; d_g])?,
                        divergence: 0.0,
                    });
                }
                let sol =
                    MomentMap::new(&g, d_g, Some(w), &self.tilt_cfg)?.solve(&self.solver.inner)?;
                let divergence = cr_divergence(&sol.pi, w, &self.cfg)?;
                Ok(RowFit {
                    pi: sol.pi,
                    lambda: sol.lambda,
                    residual: sol.residual,
                    divergence,
                })
            })
            .collect()
    }

    fn objective(&self, beta: &[f64]) -> f64 {
        if !self.model.beta_bounds().contains(beta) {
            return f64::INFINITY;
        }
        match self.solve_rows(beta) {
            Ok(rows) => rows.iter().map(|r| r.divergence).sum(),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Local fit with kernel weights computed from `obs`.
pub fn fit_local(
    obs: &DataMatrix,
    sim: &DataMatrix,
    model: &MomentModel,
    cfg: &CressieReadConfig,
    kcfg: &KernelConfig,
    mask: Option<&SubsetMask>,
    solver: &SolverConfig,
) -> Result<LocalContrastSolution> {
    let w = kernel_weights(obs, kcfg)?;
    fit_local_weighted(&w, sim, model, cfg, mask, solver, LocalForm::Derived, None)
}

/// Local fit over explicit kernel weights.
#[allow(clippy::too_many_arguments)]
pub fn fit_local_weighted(
    weights: &KernelWeightMatrix,
    sim: &DataMatrix,
    model: &MomentModel,
    cfg: &CressieReadConfig,
    mask: Option<&SubsetMask>,
    solver: &SolverConfig,
    form: LocalForm,
    beta_init: Option<&[f64]>,
) -> Result<LocalContrastSolution> {
    cfg.validate()?;
    let n = weights.n();
    if sim.rows() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: sim.rows(),
        });
    }
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: m.len(),
            });
        }
        if m.count() == 0 {
            return Err(Error::EmptyMask);
        }
    }
    let tilt_cfg = match form {
        LocalForm::Derived => *cfg,
        LocalForm::Printed => CressieReadConfig {
            gamma: 1.0,
            branch: crate::model::Branch::General,
            feasibility_margin: cfg.feasibility_margin,
        },
    };
    let problem = LocalProblem {
        weights,
        sim,
        model,
        cfg: *cfg,
        tilt_cfg,
        mask,
        solver,
    };
    let start = match beta_init {
        Some(b) => b.to_vec(),
        None => model.default_beta(sim),
    };
    if !model.beta_bounds().contains(&start) {
        return Err(Error::Domain(format!("beta_init {start:?} outside bounds")));
    }
    let best = nelder_mead::minimize(|b| problem.objective(b), &start, &solver.nelder_mead)?;
    if !best.value.is_finite() {
        return Err(Error::NoFeasibleBeta);
    }
    let rows = problem.solve_rows(&best.x)?;
    let d_g = model.d_g();
    let mut pi = Vec::with_capacity(n * n);
    let mut lambdas = Vec::with_capacity(n * d_g);
    let mut residuals = Vec::with_capacity(n);
    let mut discrepancy = 0.0;
    let mut rows_ok = true;
    for (i, r) in rows.into_iter().enumerate() {
        if problem.selected(i) {
            rows_ok &= r.residual <= solver.inner.tol;
        }
        discrepancy += r.divergence;
        pi.extend(r.pi);
        lambdas.extend(r.lambda);
        residuals.push(r.residual);
    }
    Ok(LocalContrastSolution {
        n,
        pi,
        lambdas,
        d_g,
        beta: best.x,
        discrepancy,
        residuals,
        converged: best.converged && rows_ok,
    })
}

/// Row solves at a fixed β, without the outer search.
pub fn solve_local_rows(
    weights: &KernelWeightMatrix,
    sim: &DataMatrix,
    model: &MomentModel,
    cfg: &CressieReadConfig,
    beta: &[f64],
    solver: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let problem = LocalProblem {
        weights,
        sim,
        model,
        cfg: *cfg,
        tilt_cfg: *cfg,
        mask: None,
        solver,
    };
    let rows = problem.solve_rows(beta)?;
    let mut pi = Vec::new();
    let mut lambdas = Vec::new();
    for r in rows {
        pi.extend(r.pi);
        lambdas.extend(r.lambda);
    }
    Ok((pi, lambdas))
}

/// Max-norm of each row's weighted moment `Σ_j π_ij g(y_j, β)`.
pub fn row_residuals(
    sol: &LocalContrastSolution,
    sim: &DataMatrix,
    model: &MomentModel,
) -> Result<Vec<f64>> {
    let g = model.moments(sim, &sol.beta)?;
    let d = model.d_g();
    Ok((0..sol.n)
        .map(|i| {
            let mut m = vec![0.0; d];
            for (j, p) in sol.row(i).iter().enumerate() {
                for (a, gv) in m.iter_mut().zip(&g[j * d..(j + 1) * d]) {
                    *a += p * gv;
                }
            }
            max_norm(&m)
        })
        .collect())
}
