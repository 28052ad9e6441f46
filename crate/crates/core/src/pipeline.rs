//! End-to-end evaluation of the learned statistic at a simulator parameter.
//!
//! The observed-data fit is computed once; every call to
//! [`Pipeline::evaluate`] simulates at θ, fits the simulated data the same
//! way and combines both into a [`LearnedStatistic`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockwise::{fit_blocks, BlockConfig};
use crate::error::{Error, Result};
use crate::local::{
    fit_local_weighted, kernel_weights, KernelConfig, KernelWeightMatrix, LocalForm, SubsetMask,
};
use crate::model::{
    Bounds, ContrastSolution, CressieReadConfig, DataMatrix, LearnedStatistic, MomentModel,
    ThetaPoint, Variant,
};
use crate::simulator::{run_replications, simulate, SimulatorSpec};
use crate::solver::{fit_default, SolverConfig};
use crate::summary::{
    learned_basic, learned_blockwise, learned_conditional, learned_multirep, learned_subset,
    ReplicationConfig,
};

/// A summary variant together with the settings it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariantConfig {
    #[default]
    Basic,
    MultiRep {
        n_reps: usize,
        #[serde(default)]
        parallel: bool,
    },
    Conditional {
        #[serde(default)]
        kernel: KernelConfig,
        #[serde(default)]
        form: LocalForm,
    },
    Subset {
        #[serde(default)]
        kernel: KernelConfig,
        /// 0-based indices of the selected observations.
        indices: Vec<usize>,
        #[serde(default)]
        form: LocalForm,
    },
    Blockwise {
        block: BlockConfig,
    },
}

impl VariantConfig {
    pub fn variant(&self) -> Variant {
        match self {
            VariantConfig::Basic => Variant::Basic,
            VariantConfig::MultiRep { .. } => Variant::MultiRep,
            VariantConfig::Conditional { .. } => Variant::Conditional,
            VariantConfig::Subset { .. } => Variant::Subset,
            VariantConfig::Blockwise { .. } => Variant::Blockwise,
        }
    }
}

pub struct Pipeline {
    obs: DataMatrix,
    model: MomentModel,
    cr: CressieReadConfig,
    solver: SolverConfig,
    simulator: SimulatorSpec,
    theta_bounds: Bounds,
    variant: VariantConfig,
    obs_fit: ContrastSolution,
    weights: Option<KernelWeightMatrix>,
    mask: Option<SubsetMask>,
}

impl Pipeline {
    pub fn new(
        obs: DataMatrix,
        model: MomentModel,
        cr: CressieReadConfig,
        solver: SolverConfig,
        simulator: SimulatorSpec,
        theta_bounds: Bounds,
        variant: VariantConfig,
    ) -> Result<Self> {
        cr.validate()?;
        simulator.validate()?;
        if theta_bounds.dim() != simulator.theta_dim() {
            return Err(Error::LengthMismatch {
                expected: simulator.theta_dim(),
                got: theta_bounds.dim(),
            });
        }
        let obs_fit = match &variant {
            VariantConfig::Blockwise { block } => {
                fit_blocks(&obs, &model, &cr, block, &solver, &model.default_beta(&obs))?
            }
            _ => fit_default(&obs, &model, &cr, &solver)?,
        };
        if !obs_fit.converged {
            return Err(Error::NotConverged);
        }
        let (weights, mask) = match &variant {
            VariantConfig::MultiRep { n_reps, .. } if *n_reps == 0 => {
                return Err(Error::EmptyReplications)
            }
            VariantConfig::Conditional { kernel, .. } => {
                (Some(kernel_weights(&obs, kernel)?), None)
            }
            VariantConfig::Subset {
                kernel, indices, ..
            } => (
                Some(kernel_weights(&obs, kernel)?),
                Some(SubsetMask::from_indices(obs.rows(), indices)?),
            ),
            _ => (None, None),
        };
        if mask.as_ref().is_some_and(|m| m.count() == 0) {
            return Err(Error::EmptyMask);
        }
        Ok(Self {
            obs,
            model,
            cr,
            solver,
            simulator,
            theta_bounds,
            variant,
            obs_fit,
            weights,
            mask,
        })
    }

    pub fn observed(&self) -> &ContrastSolution {
        &self.obs_fit
    }

    pub fn observations(&self) -> &DataMatrix {
        &self.obs
    }

    pub fn variant(&self) -> &VariantConfig {
        &self.variant
    }

    pub fn theta_bounds(&self) -> &Bounds {
        &self.theta_bounds
    }

    fn fit_sim(&self, sim: &DataMatrix) -> Result<ContrastSolution> {
        fit_default(sim, &self.model, &self.cr, &self.solver)
    }

    /// Learned statistic at `theta`, simulating with `seed`.
    pub fn evaluate(&self, theta: &[f64], seed: u64) -> Result<LearnedStatistic> {
        let point = ThetaPoint::new(theta.to_vec(), self.theta_bounds.clone())?;
        let n = self.obs.rows();
        match &self.variant {
            VariantConfig::Basic => {
                let sim = simulate(&self.simulator, &point, n, seed)?;
                learned_basic(&self.obs_fit, &self.fit_sim(&sim)?)
            }
            VariantConfig::MultiRep { n_reps, parallel } => {
                let rcfg = ReplicationConfig {
                    n_reps: *n_reps,
                    base_seed: seed,
                    parallel: *parallel,
                };
                let sims = run_replications(&self.simulator, &point, n, &rcfg)?;
                let fits: Vec<Result<ContrastSolution>> = if *parallel {
                    sims.par_iter().map(|s| self.fit_sim(s)).collect()
                } else {
                    sims.iter().map(|s| self.fit_sim(s)).collect()
                };
                let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
                learned_multirep(&self.obs_fit, &fits)
            }
            VariantConfig::Conditional { form, .. } | VariantConfig::Subset { form, .. } => {
                let sim = simulate(&self.simulator, &point, n, seed)?;
                let weights = self.weights.as_ref().expect("weights built in new");
                let local = fit_local_weighted(
                    weights,
                    &sim,
                    &self.model,
                    &self.cr,
                    self.mask.as_ref(),
                    &self.solver,
                    *form,
                    None,
                )?;
                match &self.mask {
                    Some(mask) => learned_subset(&self.obs_fit, &local, mask),
                    None => learned_conditional(&self.obs_fit, &local),
                }
            }
            VariantConfig::Blockwise { block } => {
                let sim = simulate(&self.simulator, &point, n, seed)?;
                let fit = fit_blocks(
                    &sim,
                    &self.model,
                    &self.cr,
                    block,
                    &self.solver,
                    &self.model.default_beta(&sim),
                )?;
                learned_blockwise(&self.obs_fit, &fit)
            }
        }
    }
}
