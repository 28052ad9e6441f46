//! Random-walk Metropolis over θ with the learned statistic as log-likelihood.
//!
//! The target is `log p(θ) = ℓ(θ) + log p_prior(θ)`. Setting
//! `likelihood_only_acceptance` drops the prior ratio from the acceptance
//! step; out-of-support proposals are rejected either way.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Bounds, LearnedStatistic, ThetaPoint};
use crate::rng::{derive_seed, rng_from_seed, Rng};

const PROPOSAL_STREAM: u64 = 0x70726f70;
const SIMULATION_STREAM: u64 = 0x73696d75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    #[default]
    Flat,
    IndependentGaussian {
        mean: Vec<f64>,
        sd: Vec<f64>,
    },
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl PriorSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("prior: {msg}")));
        match self {
            PriorSpec::Flat => Ok(()),
            PriorSpec::IndependentGaussian { mean, sd } => {
                if mean.len() != dim || sd.len() != dim {
                    return bad("mean and sd must match the parameter dimension");
                }
                if sd.iter().any(|s| !(*s > 0.0 && s.is_finite()))
                    || mean.iter().any(|m| !m.is_finite())
                {
                    return bad("sd must be positive and mean finite");
                }
                Ok(())
            }
            PriorSpec::Uniform { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return bad("box must match the parameter dimension");
                }
                if lower
                    .iter()
                    .zip(upper)
                    .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
                {
                    return bad("box needs finite lower < upper");
                }
                Ok(())
            }
        }
    }

    /// Log density up to an additive constant; `−∞` outside the support.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            PriorSpec::Flat => 0.0,
            PriorSpec::IndependentGaussian { mean, sd } => theta
                .iter()
                .zip(mean.iter().zip(sd))
                .map(|(t, (m, s))| -0.5 * ((t - m) / s).powi(2) - s.ln())
                .sum(),
            PriorSpec::Uniform { lower, upper } => {
                let inside = theta
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(t, (l, u))| l <= t && t <= u);
                if inside {
                    -lower
                        .iter()
                        .zip(upper)
                        .map(|(l, u)| (u - l).ln())
                        .sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

fn default_resimulate() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_iters: usize,
    pub proposal_sd: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub burn_in: usize,
    /// Records the first iteration whose ℓ moved by at most this much.
    #[serde(default)]
    pub eps_tol: Option<f64>,
    /// Accept on the ℓ ratio alone, ignoring the prior ratio.
    #[serde(default)]
    pub likelihood_only_acceptance: bool,
    /// Draw fresh simulations at every proposal instead of reusing one seed.
    #[serde(default = "default_resimulate")]
    pub resimulate_per_proposal: bool,
}

impl McmcConfig {
    pub fn new(n_iters: usize, proposal_sd: Vec<f64>, seed: u64) -> Self {
        Self {
            n_iters,
            proposal_sd,
            seed,
            burn_in: 0,
            eps_tol: None,
            likelihood_only_acceptance: false,
            resimulate_per_proposal: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 || self.burn_in >= self.n_iters {
            return Err(Error::InvalidConfig(format!(
                "need burn_in < n_iters, got {} and {}",
                self.burn_in, self.n_iters
            )));
        }
        if self.proposal_sd.is_empty()
            || self
                .proposal_sd
                .iter()
                .any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "proposal_sd must be positive componentwise".into(),
            ));
        }
        if let Some(e) = self.eps_tol {
            if !(e > 0.0) {
                return Err(Error::InvalidConfig("eps_tol must be positive".into()));
            }
        }
        Ok(())
    }

    /// Seed handed to `ell` at iteration `k` (0 is the starting point).
    pub fn simulation_seed(&self, k: usize) -> u64 {
        let stream = derive_seed(self.seed, SIMULATION_STREAM);
        if self.resimulate_per_proposal {
            derive_seed(stream, k as u64)
        } else {
            stream
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// Row `k` is θ after iteration `k + 1`.
    pub samples: Vec<Vec<f64>>,
    pub loglik: Vec<f64>,
    pub accepted: Vec<bool>,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub burn_in: usize,
    pub theta0: Vec<f64>,
    pub loglik0: f64,
    /// First iteration (1-based) where `|ℓ_k − ℓ_{k−1}| ≤ eps_tol`.
    pub eps_first_hit: Option<usize>,
    /// Proposals rejected because `ell` returned an error.
    pub failed_evaluations: usize,
}

impl Chain {
    fn kept(&self) -> &[Vec<f64>] {
        &self.samples[self.burn_in.min(self.samples.len())..]
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let kept = self.kept();
        let d = self.theta0.len();
        let mut m = vec![0.0; d];
        for s in kept {
            m.iter_mut().zip(s).for_each(|(a, v)| *a += v);
        }
        m.iter_mut().for_each(|a| *a /= kept.len() as f64);
        m
    }

    pub fn posterior_sd(&self) -> Vec<f64> {
        let kept = self.kept();
        let mean = self.posterior_mean();
        let denom = (kept.len().max(2) - 1) as f64;
        (0..mean.len())
            .map(|j| {
                let ss: f64 = kept.iter().map(|s| (s[j] - mean[j]).powi(2)).sum();
                (ss / denom).sqrt()
            })
            .collect()
    }
}

/// Gaussian random-walk step; the result may leave the bounds.
pub fn propose(theta_prev: &ThetaPoint, cfg: &McmcConfig, rng: &mut Rng) -> ThetaPoint {
    let theta = theta_prev
        .theta
        .iter()
        .zip(&cfg.proposal_sd)
        .map(|(t, s)| {
            let z: f64 = rng.sample(StandardNormal);
            t + s * z
        })
        .collect();
    ThetaPoint {
        theta,
        bounds: theta_prev.bounds.clone(),
    }
}

pub fn accept_prob(
    l_prop: f64,
    l_prev: f64,
    logprior_prop: f64,
    logprior_prev: f64,
    cfg: &McmcConfig,
) -> f64 {
    if logprior_prop == f64::NEG_INFINITY || l_prop.is_nan() || l_prop == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut log_a = l_prop - l_prev;
    if !cfg.likelihood_only_acceptance {
        log_a += logprior_prop - logprior_prev;
    }
    if log_a.is_nan() {
        return 0.0;
    }
    log_a.min(0.0).exp()
}

/// Run one chain. `ell(θ, seed)` evaluates the learned statistic using
/// simulations drawn from `seed`.
pub fn run_chain<F>(
    ell: F,
    prior: &PriorSpec,
    theta0: &ThetaPoint,
    cfg: &McmcConfig,
) -> Result<Chain>
where
    F: Fn(&[f64], u64) -> Result<LearnedStatistic>,
{
    cfg.validate()?;
    let d = theta0.theta.len();
    if cfg.proposal_sd.len() != d {
        return Err(Error::LengthMismatch {
            expected: d,
            got: cfg.proposal_sd.len(),
        });
    }
    prior.validate(d)?;
    if !theta0.in_bounds() {
        return Err(Error::InitialPointInfeasible(format!(
            "theta0 {:?} outside bounds",
            theta0.theta
        )));
    }
    let lp0 = prior.log_density(&theta0.theta);
    if lp0 == f64::NEG_INFINITY {
        return Err(Error::InitialPointInfeasible(
            "theta0 has zero prior density".into(),
        ));
    }
    let l0 = ell(&theta0.theta, cfg.simulation_seed(0))
        .map_err(|e| Error::InitialPointInfeasible(e.to_string()))?
        .value;
    if !l0.is_finite() {
        return Err(Error::InitialPointInfeasible(format!("ell(theta0) = {l0}")));
    }

    let mut rng = rng_from_seed(derive_seed(cfg.seed, PROPOSAL_STREAM));
    let mut current = theta0.clone();
    let (mut l_cur, mut lp_cur) = (l0, lp0);
    let mut samples = Vec::with_capacity(cfg.n_iters);
    let mut loglik = Vec::with_capacity(cfg.n_iters);
    let mut accepted = Vec::with_capacity(cfg.n_iters);
    let mut failed = 0;
    let mut eps_first_hit = None;

    for k in 1..=cfg.n_iters {
        let prop = propose(&current, cfg, &mut rng);
        let lp_prop = if prop.in_bounds() {
            prior.log_density(&prop.theta)
        } else {
            f64::NEG_INFINITY
        };
        let l_prop = if lp_prop == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            match ell(&prop.theta, cfg.simulation_seed(k)) {
                Ok(s) => s.value,
                Err(_) => {
                    failed += 1;
                    f64::NEG_INFINITY
                }
            }
        };
        let a = accept_prob(l_prop, l_cur, lp_prop, lp_cur, cfg);
        // Always draw, so the stream position does not depend on `a`.
        let u: f64 = rng.random();
        let take = u < a;
        let l_prev = l_cur;
        if take {
            current = prop;
            l_cur = l_prop;
            lp_cur = lp_prop;
        }
        if let Some(eps) = cfg.eps_tol {
            if eps_first_hit.is_none() && (l_cur - l_prev).abs() <= eps {
                eps_first_hit = Some(k);
            }
        }
        samples.push(current.theta.clone());
        loglik.push(l_cur);
        accepted.push(take);
    }

    let acceptance_rate = accepted.iter().filter(|a| **a).count() as f64 / cfg.n_iters as f64;
    Ok(Chain {
        samples,
        loglik,
        accepted,
        acceptance_rate,
        seed: cfg.seed,
        burn_in: cfg.burn_in,
        theta0: theta0.theta.clone(),
        loglik0: l0,
        eps_first_hit,
        failed_evaluations: failed,
    })
}

/// Independent chains, one per seed, run concurrently.
pub fn run_chains<F>(
    ell: F,
    prior: &PriorSpec,
    theta0: &ThetaPoint,
    cfg: &McmcConfig,
    seeds: &[u64],
) -> Vec<Result<Chain>>
where
    F: Fn(&[f64], u64) -> Result<LearnedStatistic> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = McmcConfig {
                seed,
                ..cfg.clone()
            };
            run_chain(&ell, prior, theta0, &cfg)
        })
        .collect()
}

/// Prior box as θ bounds, when the prior has one.
pub fn prior_bounds(prior: &PriorSpec) -> Option<Bounds> {
    match prior {
        PriorSpec::Uniform { lower, upper } => Bounds::new(lower.clone(), upper.clone()).ok(),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use proptest::prelude::*;

    fn stat(v: f64) -> Result<LearnedStatistic> {
        Ok(LearnedStatistic::new(v, 0.0, Variant::Basic))
    }

    fn cfg(n: usize, sd: f64, seed: u64) -> McmcConfig {
        McmcConfig::new(n, vec![sd; 2], seed)
    }

    #[test]
    fn acceptance_examples() {
        let c = cfg(10, 1.0, 0);
        assert_eq!(accept_prob(1.0, 0.5, 0.0, 0.0, &c), 1.0);
        assert!((accept_prob(-2f64.ln(), 0.0, 0.0, 0.0, &c) - 0.5).abs() < 1e-15);
        assert_eq!(accept_prob(5.0, 0.0, f64::NEG_INFINITY, 0.0, &c), 0.0);
        let lo = McmcConfig {
            likelihood_only_acceptance: true,
            ..c.clone()
        };
        assert_eq!(accept_prob(0.0, 0.0, -3.0, 0.0, &lo), 1.0);
        assert!(accept_prob(0.0, 0.0, -3.0, 0.0, &c) < 0.06);
    }

    #[test]
    fn config_invariants() {
        assert!(cfg(10, 0.0, 0).validate().is_err());
        let mut c = cfg(10, 1.0, 0);
        c.burn_in = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn proposals_are_centered_and_replayable() {
        let c = cfg(1, 0.5, 0);
        let t = ThetaPoint::unbounded(vec![1.0, -2.0]);
        let mut a = rng_from_seed(9);
        let mut b = rng_from_seed(9);
        assert_eq!(propose(&t, &c, &mut a), propose(&t, &c, &mut b));
        let mut r = rng_from_seed(3);
        let mut mean = [0.0; 2];
        for _ in 0..10_000 {
            let p = propose(&t, &c, &mut r);
            mean[0] += p.theta[0] / 1e4;
            mean[1] += p.theta[1] / 1e4;
        }
        assert!((mean[0] - 1.0).abs() < 4.0 * 0.5 / 100.0);
        assert!((mean[1] + 2.0).abs() < 4.0 * 0.5 / 100.0);
    }

    #[test]
    fn constant_ell_always_accepts() {
        let t = ThetaPoint::unbounded(vec![0.0, 0.0]);
        let ch = run_chain(|_, _| stat(1.0), &PriorSpec::Flat, &t, &cfg(200, 1.0, 4)).unwrap();
        assert_eq!(ch.acceptance_rate, 1.0);
    }

    #[test]
    fn out_of_box_proposals_keep_chain_fixed() {
        let b = Bounds::new(vec![0.0, 0.0], vec![1e-9, 1e-9]).unwrap();
        let t = ThetaPoint::new(vec![5e-10, 5e-10], b).unwrap();
        let prior = PriorSpec::Uniform {
            lower: vec![0.0, 0.0],
            upper: vec![1e-9, 1e-9],
        };
        let ch = run_chain(|_, _| stat(0.0), &prior, &t, &cfg(100, 10.0, 1)).unwrap();
        assert_eq!(ch.acceptance_rate, 0.0);
        assert!(ch.samples.iter().all(|s| *s == t.theta));
    }

    #[test]
    fn failing_start_is_reported() {
        let t = ThetaPoint::unbounded(vec![0.0, 0.0]);
        let err = run_chain(
            |_, _| Err(Error::NoFeasibleBeta),
            &PriorSpec::Flat,
            &t,
            &cfg(5, 1.0, 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InitialPointInfeasible(_)));
    }

    #[test]
    fn gaussian_target_is_recovered() {
        let t = ThetaPoint::unbounded(vec![0.0, 0.0]);
        let mut c = cfg(20_000, 1.5, 11);
        c.burn_in = 2000;
        let ell = |th: &[f64], _| stat(-0.5 * ((th[0] - 1.0).powi(2) + (th[1] + 2.0).powi(2)));
        let ch = run_chain(ell, &PriorSpec::Flat, &t, &c).unwrap();
        let m = ch.posterior_mean();
        let s = ch.posterior_sd();
        assert!(
            (m[0] - 1.0).abs() < 0.1 && (m[1] + 2.0).abs() < 0.1,
            "{m:?}"
        );
        assert!(
            (s[0] - 1.0).abs() < 0.1 && (s[1] - 1.0).abs() < 0.1,
            "{s:?}"
        );
    }

    #[test]
    fn seeds_per_iteration() {
        let mut c = cfg(5, 1.0, 3);
        assert_ne!(c.simulation_seed(1), c.simulation_seed(2));
        c.resimulate_per_proposal = false;
        assert_eq!(c.simulation_seed(1), c.simulation_seed(2));
    }

    #[test]
    fn eps_marker_hits_first_rejection() {
        let t = ThetaPoint::unbounded(vec![0.0, 0.0]);
        let mut c = cfg(300, 3.0, 2);
        c.eps_tol = Some(1e-12);
        let ell = |th: &[f64], _| stat(-0.5 * (th[0].powi(2) + th[1].powi(2)));
        let ch = run_chain(ell, &PriorSpec::Flat, &t, &c).unwrap();
        let first_reject = ch.accepted.iter().position(|a| !a).map(|i| i + 1);
        assert_eq!(ch.eps_first_hit, first_reject);
        assert_eq!(ch.samples.len(), 300);
    }

    #[test]
    fn parallel_chains_match_sequential() {
        let t = ThetaPoint::unbounded(vec![0.0, 0.0]);
        let c = cfg(100, 1.0, 0);
        let ell = |th: &[f64], _: u64| stat(-th[0].abs() - th[1].abs());
        let par = run_chains(ell, &PriorSpec::Flat, &t, &c, &[1, 2, 3]);
        for (seed, res) in [1, 2, 3].into_iter().zip(par) {
            let seq = run_chain(ell, &PriorSpec::Flat, &t, &McmcConfig { seed, ..c.clone() });
            assert_eq!(res.unwrap(), seq.unwrap());
        }
    }

    proptest! {
        #[test]
        fn accept_prob_monotone_and_bounded(
            a in -50.0f64..50.0, b in -50.0f64..50.0, prev in -50.0f64..50.0,
            lp1 in -5.0f64..5.0, lp0 in -5.0f64..5.0,
        ) {
            let c = cfg(1, 1.0, 0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = accept_prob(lo, prev, lp1, lp0, &c);
            let p_hi = accept_prob(hi, prev, lp1, lp0, &c);
            prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
            prop_assert!(p_lo <= p_hi);
        }

        #[test]
        fn likelihood_only_is_shift_invariant(l in -20.0f64..20.0, prev in -20.0f64..20.0, s in -20.0f64..20.0) {
            let c = McmcConfig { likelihood_only_acceptance: true, ..cfg(1, 1.0, 0) };
            let a = accept_prob(l, prev, 0.0, 0.0, &c);
            let b = accept_prob(l + s, prev + s, 0.0, 0.0, &c);
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn rejections_repeat_previous_sample(seed in 0u64..1000) {
            let t = ThetaPoint::unbounded(vec![0.0, 0.0]);
            let ell = |th: &[f64], _: u64| stat(-2.0 * (th[0].powi(2) + th[1].powi(2)));
            let ch = run_chain(ell, &PriorSpec::Flat, &t, &cfg(50, 1.0, seed)).unwrap();
            let again = run_chain(ell, &PriorSpec::Flat, &t, &cfg(50, 1.0, seed)).unwrap();
            prop_assert_eq!(&ch, &again);
            let rate = ch.accepted.iter().filter(|a| **a).count() as f64 / 50.0;
            prop_assert_eq!(rate, ch.acceptance_rate);
            for k in 0..50 {
                if !ch.accepted[k] {
                    let prev = if k == 0 { &t.theta } else { &ch.samples[k - 1] };
                    prop_assert_eq!(&ch.samples[k], prev);
                }
            }
        }
    }
}
