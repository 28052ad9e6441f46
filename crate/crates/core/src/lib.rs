//! Simulation-based Bayesian inference with learned summary statistics.
//!
//! Observation data and simulator outputs are each reduced to Cressie-Read
//! minimum-discrepancy contrast probabilities under moment restrictions. The
//! empirical log-likelihood ratio between the two sets of probabilities,
//! penalized by the distance between the fitted moment parameters, acts as a
//! log-likelihood proxy that a random-walk Metropolis sampler explores.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockwise;
pub mod cli;
pub mod error;
pub mod io;
pub mod local;
pub mod mcmc;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod simulator;
pub mod solver;
pub mod summary;

pub use error::{Error, Result};
pub use model::{
    cr_divergence, cr_objective, Bounds, Branch, ContrastSolution, CressieReadConfig, DataMatrix,
    LearnedStatistic, MomentModel, ThetaPoint, Variant,
};
pub use solver::{fit, fit_default, InnerSolverConfig, NelderMeadConfig, SolverConfig};
