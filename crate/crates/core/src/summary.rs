//! Learned summary statistics built from pairs of contrast solutions.
//!
//! Every variant is `log_ratio_term − ½‖β^sim − β^obs‖²`; they differ only in
//! how the simulation-side probabilities enter the log-ratio. Logs are
//! natural logs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local::{LocalContrastSolution, SubsetMask};
use crate::model::{ContrastSolution, LearnedStatistic, Variant};

/// Number of independent simulation replications and how to seed them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationConfig {
    pub n_reps: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub parallel: bool,
}

impl ReplicationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::EmptyReplications);
        }
        Ok(())
    }
}

fn half_sq_dist(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: b.len(),
            got: a.len(),
        });
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
}

fn checked_ln(p: f64, what: &str, i: usize) -> Result<f64> {
    if p > 0.0 && p.is_finite() {
        Ok(p.ln())
    } else {
        Err(Error::Domain(format!("{what}[{i}] = {p} has no logarithm")))
    }
}

fn require_converged(sols: &[&ContrastSolution]) -> Result<()> {
    if sols.iter().all(|s| s.converged) {
        Ok(())
    } else {
        Err(Error::NotConverged)
    }
}

fn log_ratio(sim: &[f64], obs: &[f64]) -> Result<f64> {
    if sim.len() != obs.len() {
        return Err(Error::LengthMismatch {
            expected: obs.len(),
            got: sim.len(),
        });
    }
    let mut total = 0.0;
    for (i, (s, o)) in sim.iter().zip(obs).enumerate() {
        total += checked_ln(*s, "sim.pi", i)? - checked_ln(*o, "obs.pi", i)?;
    }
    Ok(total)
}

pub fn learned_basic(obs: &ContrastSolution, sim: &ContrastSolution) -> Result<LearnedStatistic> {
    pairwise(obs, sim, Variant::Basic)
}

/// Same form as [`learned_basic`] over block-level probabilities.
pub fn learned_blockwise(
    obs_blocks: &ContrastSolution,
    sim_blocks: &ContrastSolution,
) -> Result<LearnedStatistic> {
    pairwise(obs_blocks, sim_blocks, Variant::Blockwise)
}

fn pairwise(
    obs: &ContrastSolution,
    sim: &ContrastSolution,
    variant: Variant,
) -> Result<LearnedStatistic> {
    require_converged(&[obs, sim])?;
    let lr = log_ratio(&sim.pi, &obs.pi)?;
    let dist = half_sq_dist(&sim.beta, &obs.beta)?;
    Ok(LearnedStatistic::new(lr, dist, variant))
}

/// Averages probabilities and fitted parameters over replications before
/// forming the statistic.
pub fn learned_multirep(
    obs: &ContrastSolution,
    sims: &[ContrastSolution],
) -> Result<LearnedStatistic> {
    if sims.is_empty() {
        return Err(Error::EmptyReplications);
    }
    require_converged(&[obs])?;
    require_converged(&sims.iter().collect::<Vec<_>>())?;
    let n = obs.pi.len();
    let d = obs.beta.len();
    let reps = sims.len() as f64;
    let mut pi = vec![0.0; n];
    let mut beta = vec![0.0; d];
    for s in sims {
        if s.pi.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: s.pi.len(),
            });
        }
        if s.beta.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                got: s.beta.len(),
            });
        }
        pi.iter_mut().zip(&s.pi).for_each(|(a, p)| *a += p);
        beta.iter_mut().zip(&s.beta).for_each(|(a, b)| *a += b);
    }
    pi.iter_mut().for_each(|a| *a /= reps);
    beta.iter_mut().for_each(|a| *a /= reps);
    let lr = log_ratio(&pi, &obs.pi)?;
    let dist = half_sq_dist(&beta, &obs.beta)?;
    Ok(LearnedStatistic::new(lr, dist, Variant::MultiRep))
}

fn local_form(
    obs: &ContrastSolution,
    local: &LocalContrastSolution,
    variant: Variant,
) -> Result<LearnedStatistic> {
    require_converged(&[obs])?;
    if !local.converged {
        return Err(Error::NotConverged);
    }
    let n = obs.pi.len();
    if local.n() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: local.n(),
        });
    }
    let mut lr = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for (j, p) in local.row(i).iter().enumerate() {
            row += checked_ln(*p, "local.pi", i * n + j)?;
        }
        lr += row - checked_ln(obs.pi[i], "obs.pi", i)?;
    }
    let dist = half_sq_dist(&local.beta, &obs.beta)?;
    Ok(LearnedStatistic::new(lr, dist, variant))
}

/// `Σ_i (Σ_j log π_ij − log π_i^obs) − ½‖β^sim − β^obs‖²` over local
/// (kernel-conditioned) probabilities.
pub fn learned_conditional(
    obs: &ContrastSolution,
    local: &LocalContrastSolution,
) -> Result<LearnedStatistic> {
    local_form(obs, local, Variant::Conditional)
}

/// Conditional statistic for a subset-masked local fit. The outer sum still
/// runs over every observation; only the local fit itself is masked.
pub fn learned_subset(
    obs: &ContrastSolution,
    local: &LocalContrastSolution,
    mask: &SubsetMask,
) -> Result<LearnedStatistic> {
    if mask.len() != obs.pi.len() {
        return Err(Error::LengthMismatch {
            expected: obs.pi.len(),
            got: mask.len(),
        });
    }
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    local_form(obs, local, Variant::Subset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sol(pi: &[f64], beta: &[f64]) -> ContrastSolution {
        ContrastSolution {
            pi: pi.to_vec(),
            lambda: vec![0.0],
            beta: beta.to_vec(),
            discrepancy: 0.0,
            converged: true,
            residual: 0.0,
        }
    }

    fn local(pi: Vec<f64>, n: usize, beta: &[f64]) -> LocalContrastSolution {
        LocalContrastSolution {
            n,
            pi,
            lambdas: vec![0.0; n],
            d_g: 1,
            beta: beta.to_vec(),
            discrepancy: 0.0,
            residuals: vec![0.0; n],
            converged: true,
        }
    }

    #[test]
    fn basic_examples() {
        let a = sol(&[0.2, 0.3, 0.5], &[1.0, 2.0]);
        assert_eq!(learned_basic(&a, &a).unwrap().value, 0.0);

        let b = sol(&[0.2, 0.3, 0.5], &[4.0, 6.0]);
        let s = learned_basic(&a, &b).unwrap();
        assert_abs_diff_eq!(s.value, -12.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.distance_term, 12.5, epsilon = 1e-12);

        let obs = sol(&[0.5, 0.5], &[0.0]);
        let sim = sol(&[0.25, 0.75], &[0.0]);
        assert_abs_diff_eq!(
            learned_basic(&obs, &sim).unwrap().value,
            (0.75f64).ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            learned_basic(&obs, &sim).unwrap().value,
            -0.287682,
            epsilon = 1e-6
        );
    }

    #[test]
    fn basic_errors() {
        let obs = sol(&[0.5, 0.5], &[0.0]);
        let zero = sol(&[1.0, 0.0], &[0.0]);
        assert!(matches!(learned_basic(&obs, &zero), Err(Error::Domain(_))));
        let short = sol(&[1.0], &[0.0]);
        assert!(matches!(
            learned_basic(&obs, &short),
            Err(Error::LengthMismatch { .. })
        ));
        let mut nc = obs.clone();
        nc.converged = false;
        assert_eq!(learned_basic(&obs, &nc), Err(Error::NotConverged));
    }

    #[test]
    fn antisymmetric_log_ratio() {
        let a = sol(&[0.1, 0.6, 0.3], &[0.0]);
        let b = sol(&[0.3, 0.3, 0.4], &[1.0]);
        let ab = learned_basic(&a, &b).unwrap();
        let ba = learned_basic(&b, &a).unwrap();
        assert_abs_diff_eq!(ab.log_ratio_term, -ba.log_ratio_term, epsilon = 1e-14);
        let ab = learned_blockwise(&a, &b).unwrap();
        let ba = learned_blockwise(&b, &a).unwrap();
        assert_abs_diff_eq!(ab.log_ratio_term, -ba.log_ratio_term, epsilon = 1e-14);
    }

    #[test]
    fn multirep_examples() {
        let obs = sol(&[0.5, 0.5], &[0.0]);
        let sims = [sol(&[0.3, 0.7], &[0.0]), sol(&[0.5, 0.5], &[0.0])];
        let s = learned_multirep(&obs, &sims).unwrap();
        assert_abs_diff_eq!(s.value, (0.8f64).ln() + (1.2f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.value, -0.0408, epsilon = 1e-4);

        let one = sol(&[0.3, 0.7], &[2.0]);
        let basic = learned_basic(&obs, &one).unwrap();
        assert_eq!(
            learned_multirep(&obs, std::slice::from_ref(&one))
                .unwrap()
                .value,
            basic.value
        );
        let many = vec![one.clone(); 7];
        let m = learned_multirep(&obs, &many).unwrap();
        assert_abs_diff_eq!(m.value, basic.value, epsilon = 1e-12);
        assert_eq!(learned_multirep(&obs, &[]), Err(Error::EmptyReplications));
    }

    #[test]
    fn conditional_examples() {
        let obs = sol(&[1.0], &[0.0]);
        let l = local(vec![1.0], 1, &[0.0]);
        assert_eq!(learned_conditional(&obs, &l).unwrap().value, 0.0);

        let obs = sol(&[0.5, 0.5], &[0.0]);
        let l = local(vec![0.5; 4], 2, &[0.0]);
        assert_abs_diff_eq!(
            learned_conditional(&obs, &l).unwrap().value,
            -1.386294,
            epsilon = 1e-6
        );

        let third = 1.0 / 3.0;
        let obs = sol(&[third; 3], &[0.0]);
        let l = local(vec![third; 9], 3, &[0.0]);
        assert_abs_diff_eq!(
            learned_conditional(&obs, &l).unwrap().value,
            6.0 * third.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn subset_mask_rules() {
        let obs = sol(&[0.5, 0.5], &[0.0]);
        let l = local(vec![0.4, 0.6, 0.7, 0.3], 2, &[0.1]);
        let all = SubsetMask::all(2);
        assert_eq!(
            learned_subset(&obs, &l, &all).unwrap().value,
            learned_conditional(&obs, &l).unwrap().value
        );
        assert_eq!(
            learned_subset(&obs, &l, &SubsetMask::new(vec![false, false])),
            Err(Error::EmptyMask)
        );
    }

    #[test]
    fn blockwise_examples() {
        let a = sol(&[0.25; 4], &[1.0]);
        assert_eq!(learned_blockwise(&a, &a).unwrap().value, 0.0);
        let b = sol(&[0.25; 4], &[2.0]);
        assert_abs_diff_eq!(learned_blockwise(&a, &b).unwrap().value, -0.5);
    }
}
