//! Constrained Cressie-Read minimization.
//!
//! The joint problem over `(π, β)` is profiled: for fixed β the optimal π is
//! available in closed form through the multiplier λ (see [`dual`]), and the
//! remaining profile `β ↦ CR(π̂(β))` is searched with Nelder-Mead.

pub mod dual;
pub mod nelder_mead;

use serde::{Deserialize, Serialize};

pub use dual::{DualSolution, MomentMap};
pub use nelder_mead::{Minimum, NelderMeadConfig};

use crate::error::{Error, Result};
use crate::model::{
    cr_objective, Bounds, ContrastSolution, CressieReadConfig, DataMatrix, MomentModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerSolverConfig {
    pub max_iters: usize,
    /// Max-norm of the normalized moment residual.
    pub tol: f64,
    pub backtrack_ratio: f64,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-9,
            backtrack_ratio: 0.5,
        }
    }
}

impl InnerSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "invalid inner solver config: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Both solver configurations, bundled for the higher-level fitting routines.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub inner: InnerSolverConfig,
    pub nelder_mead: NelderMeadConfig,
}

/// Closed-form contrast probabilities for a given multiplier.
pub fn contrast_probabilities(
    data: &DataMatrix,
    beta: &[f64],
    model: &MomentModel,
    lambda: &[f64],
    cfg: &CressieReadConfig,
) -> Result<Vec<f64>> {
    let g = model.moments(data, beta)?;
    MomentMap::new(&g, model.d_g(), None, cfg)?.probabilities(lambda)
}

/// Multiplier λ solving `Σ π_i(λ) g(y_i, β) = 0`, with the achieved residual.
pub fn solve_lambda(
    data: &DataMatrix,
    beta: &[f64],
    model: &MomentModel,
    cfg: &CressieReadConfig,
    inner: &InnerSolverConfig,
) -> Result<(Vec<f64>, f64)> {
    let g = model.moments(data, beta)?;
    let sol = MomentMap::new(&g, model.d_g(), None, cfg)?.solve(inner)?;
    Ok((sol.lambda, sol.residual))
}

/// Profile fit over an arbitrary moment source: `moments(β)` must return the
/// row-major `N × d_g` matrix of moment rows at β.
pub fn fit_moments<M>(
    moments: M,
    d_g: usize,
    bounds: &Bounds,
    cfg: &CressieReadConfig,
    solver: &SolverConfig,
    beta_init: &[f64],
) -> Result<ContrastSolution>
where
    M: Fn(&[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    solver.inner.validate()?;
    if !bounds.contains(beta_init) {
        return Err(Error::Domain(format!(
            "beta_init {beta_init:?} outside bounds {bounds:?}"
        )));
    }
    let solve_at = |beta: &[f64]| -> Result<(DualSolution, f64)> {
        let g = moments(beta)?;
        let sol = MomentMap::new(&g, d_g, None, cfg)?.solve(&solver.inner)?;
        let obj = cr_objective(&sol.pi, cfg)?;
        Ok((sol, obj))
    };
    let profile = |beta: &[f64]| -> f64 {
        if !bounds.contains(beta) {
            return f64::INFINITY;
        }
        solve_at(beta).map_or(f64::INFINITY, |(_, obj)| obj)
    };
    let start = feasible_start(&profile, beta_init, solver.nelder_mead.initial_step);
    let best = nelder_mead::minimize(profile, &start, &solver.nelder_mead)?;
    if !best.value.is_finite() {
        return Err(Error::NoFeasibleBeta);
    }
    let (sol, discrepancy) = solve_at(&best.x)?;
    Ok(ContrastSolution {
        pi: sol.pi,
        lambda: sol.lambda,
        beta: best.x,
        discrepancy,
        converged: best.converged && sol.residual <= solver.inner.tol,
        residual: sol.residual,
    })
}

/// Steps taken along each axis before giving up on an infeasible start;
/// the last one reaches `initial_step · 2^11`.
const FEASIBILITY_SCALES: i32 = 12;

/// `beta_init` when its profile is finite, else the best finite point on a
/// doubling axis scan around it. Falls back to `beta_init` when the scan
/// finds nothing, leaving the verdict to the minimizer.
fn feasible_start<F: Fn(&[f64]) -> f64>(profile: &F, beta_init: &[f64], step: f64) -> Vec<f64> {
    if profile(beta_init).is_finite() {
        return beta_init.to_vec();
    }
    for k in 0..FEASIBILITY_SCALES {
        let s = step * 2f64.powi(k);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for j in 0..beta_init.len() {
            for sign in [-1.0, 1.0] {
                let mut x = beta_init.to_vec();
                x[j] += sign * s;
                let v = profile(&x);
                if v.is_finite() && best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, x));
                }
            }
        }
        if let Some((_, x)) = best {
            return x;
        }
    }
    beta_init.to_vec()
}

/// Minimum-discrepancy fit of `model` on `data`.
pub fn fit(
    data: &DataMatrix,
    model: &MomentModel,
    cfg: &CressieReadConfig,
    solver: &SolverConfig,
    beta_init: &[f64],
) -> Result<ContrastSolution> {
    if data.cols() != model.d_y() {
        return Err(Error::LengthMismatch {
            expected: model.d_y(),
            got: data.cols(),
        });
    }
    if beta_init.len() != model.d_beta() {
        return Err(Error::LengthMismatch {
            expected: model.d_beta(),
            got: beta_init.len(),
        });
    }
    fit_moments(
        |beta| model.moments(data, beta),
        model.d_g(),
        model.beta_bounds(),
        cfg,
        solver,
        beta_init,
    )
}

/// [`fit`] started from the model's method-of-moments seed.
pub fn fit_default(
    data: &DataMatrix,
    model: &MomentModel,
    cfg: &CressieReadConfig,
    solver: &SolverConfig,
) -> Result<ContrastSolution> {
    fit(data, model, cfg, solver, &model.default_beta(data))
}
