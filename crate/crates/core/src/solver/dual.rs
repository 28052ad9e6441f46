//! Inner dual solve: for fixed β, find the multiplier λ whose tilted weights
//! satisfy the moment condition.
//!
//! With `φ` the branch's tilt function and `Φ` its antiderivative, the
//! unnormalized moment map `M(λ) = Σ r_i φ(λᵀg_i) g_i` is the gradient of
//! `F(λ) = Σ r_i Φ(λᵀg_i)`. `F` is convex when `φ` is increasing and concave
//! when it is decreasing, so damped Newton on `orientation · F` with an
//! Armijo line search converges to the unique root of `M` whenever one
//! exists inside the feasible region.

use nalgebra::{DMatrix, DVector};

use super::InnerSolverConfig;
use crate::error::{Error, Result};
use crate::model::CressieReadConfig;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const DIVERGENCE_NORM: f64 = 1e12;
const STALL_ITERS: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    pub pi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Moment map over a fixed `N × d_g` moment matrix with optional reference
/// weights `r_i` (uniform when absent).
#[derive(Debug, Clone, Copy)]
pub struct MomentMap<'a> {
    moments: &'a [f64],
    d_g: usize,
    reference: Option<&'a [f64]>,
    cfg: &'a CressieReadConfig,
}

impl<'a> MomentMap<'a> {
    pub fn new(
        moments: &'a [f64],
        d_g: usize,
        reference: Option<&'a [f64]>,
        cfg: &'a CressieReadConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if d_g == 0 || moments.is_empty() || !moments.len().is_multiple_of(d_g) {
            return Err(Error::Domain(format!(
                "moment matrix of length {} is not a nonempty multiple of d_g = {d_g}",
                moments.len()
            )));
        }
        if let Some(r) = reference {
            if r.len() != moments.len() / d_g {
                return Err(Error::LengthMismatch {
                    expected: moments.len() / d_g,
                    got: r.len(),
                });
            }
        }
        Ok(Self {
            moments,
            d_g,
            reference,
            cfg,
        })
    }

    pub fn len(&self) -> usize {
        self.moments.len() / self.d_g
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }

    pub fn d_g(&self) -> usize {
        self.d_g
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.moments[i * self.d_g..(i + 1) * self.d_g]
    }

    fn reference(&self, i: usize) -> f64 {
        self.reference.map_or(1.0, |r| r[i])
    }

    fn arg(&self, i: usize, lambda: &[f64]) -> f64 {
        self.row(i).iter().zip(lambda).map(|(g, l)| g * l).sum()
    }

    fn check_lambda(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.d_g {
            return Err(Error::LengthMismatch {
                expected: self.d_g,
                got: lambda.len(),
            });
        }
        Ok(())
    }

    fn infeasible(&self, i: usize, lambda: &[f64]) -> Error {
        Error::InfeasibleBase(format!(
            "base 1 + λᵀg = {:e} at row {i} is below the margin {:e}",
            1.0 + self.arg(i, lambda),
            self.cfg.feasibility_margin
        ))
    }

    /// Unnormalized weights `r_i φ(λᵀg_i)`.
    pub fn weights(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        self.check_lambda(lambda)?;
        (0..self.len())
            .map(|i| {
                let r = self.reference(i);
                if r == 0.0 {
                    return Ok(0.0);
                }
                self.cfg
                    .tilt(self.arg(i, lambda))
                    .map(|w| r * w)
                    .ok_or_else(|| self.infeasible(i, lambda))
            })
            .collect()
    }

    /// Normalized contrast probabilities.
    pub fn probabilities(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(lambda)?;
        let total: f64 = w.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InfeasibleBase(format!(
                "weight normalizer {total:e} is not positive and finite"
            )));
        }
        Ok(w.into_iter().map(|x| x / total).collect())
    }

    /// `M(λ) = Σ r_i φ(λᵀg_i) g_i`.
    pub fn value(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(lambda)?;
        Ok(self.weighted_sum(&w))
    }

    fn weighted_sum(&self, w: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.d_g];
        for (i, &wi) in w.iter().enumerate() {
            for (a, g) in m.iter_mut().zip(self.row(i)) {
                *a += wi * g;
            }
        }
        m
    }

    /// Jacobian of [`value`](Self::value): `Σ r_i φ'(λᵀg_i) g_i g_iᵀ`.
    pub fn jacobian(&self, lambda: &[f64]) -> Result<DMatrix<f64>> {
        self.check_lambda(lambda)?;
        let d = self.d_g;
        let mut jac = DMatrix::zeros(d, d);
        for i in 0..self.len() {
            let r = self.reference(i);
            if r == 0.0 {
                continue;
            }
            let dphi = self
                .cfg
                .tilt_derivative(self.arg(i, lambda))
                .ok_or_else(|| self.infeasible(i, lambda))?;
            let g = self.row(i);
            for a in 0..d {
                for b in 0..d {
                    jac[(a, b)] += r * dphi * g[a] * g[b];
                }
            }
        }
        Ok(jac)
    }

    /// Max-norm of the normalized moment condition `Σ π_i g_i`.
    pub fn residual(&self, lambda: &[f64]) -> Result<f64> {
        let pi = self.probabilities(lambda)?;
        Ok(max_norm(&self.weighted_sum(&pi)))
    }

    /// `orientation · F(λ)`, `+∞` outside the feasible region.
    fn merit(&self, lambda: &[f64]) -> f64 {
        let s = self.cfg.orientation();
        let mut total = 0.0;
        for i in 0..self.len() {
            let r = self.reference(i);
            if r == 0.0 {
                continue;
            }
            match self.cfg.potential(self.arg(i, lambda)) {
                Some(p) => total += r * p,
                None => return f64::INFINITY,
            }
        }
        let v = s * total;
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// Some coordinate of `g` with a strict common sign over all active rows
    /// rules out any simplex weighting.
    fn obviously_infeasible(&self) -> Option<usize> {
        (0..self.d_g).find(|&c| {
            let mut pos = true;
            let mut neg = true;
            for i in (0..self.len()).filter(|&i| self.reference(i) > 0.0) {
                let v = self.row(i)[c];
                pos &= v > 0.0;
                neg &= v < 0.0;
            }
            pos || neg
        })
    }

    /// Damped Newton from `λ = 0`.
    pub fn solve(&self, inner: &InnerSolverConfig) -> Result<DualSolution> {
        inner.validate()?;
        let d = self.d_g;
        let s = self.cfg.orientation();
        let mut lambda = vec![0.0; d];
        let mut residual = self.residual(&lambda)?;
        if residual <= inner.tol {
            return Ok(self.finish(lambda, residual, 0));
        }
        if let Some(c) = self.obviously_infeasible() {
            return Err(Error::InfeasibleBase(format!(
                "moment coordinate {c} has the same strict sign on every row; \
                 0 is outside the convex hull"
            )));
        }
        let mut best = (residual, lambda.clone());
        let (mut anchor, mut anchor_iter) = (residual, 0);

        for iter in 1..=inner.max_iters {
            let m = DVector::from_vec(self.value(&lambda)?);
            let hess = self.jacobian(&lambda)? * s;
            let grad = &m * s;
            let step = newton_direction(&hess, &grad);
            let slope = grad.dot(&step);
            let f0 = self.merit(&lambda);

            let full: Vec<f64> = lambda
                .iter()
                .zip(step.iter())
                .map(|(l, dl)| l + dl)
                .collect();
            let full_residual = self.residual(&full).unwrap_or(f64::INFINITY);
            // Near the root the merit is flat to rounding, so a full step that
            // halves the residual is taken without consulting it.
            let mut accepted = (full_residual <= 0.5 * residual).then(|| full.clone());
            let mut t = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                if accepted.is_some() {
                    break;
                }
                let trial: Vec<f64> = lambda
                    .iter()
                    .zip(step.iter())
                    .map(|(l, dl)| l + t * dl)
                    .collect();
                let f1 = self.merit(&trial);
                if f1.is_finite() && f1 <= f0 + ARMIJO * t * slope {
                    accepted = Some(trial);
                }
                t *= inner.backtrack_ratio;
            }
            // Otherwise any feasible full step that still shrinks the residual.
            let next = match accepted {
                Some(x) => x,
                None if full_residual < residual => full,
                None => break,
            };
            lambda = next;
            if max_norm(&lambda) > DIVERGENCE_NORM {
                return Err(Error::InfeasibleBase(
                    "multiplier diverged; 0 is not in the interior of the moment hull".into(),
                ));
            }
            residual = self.residual(&lambda)?;
            if residual < best.0 {
                best = (residual, lambda.clone());
            }
            if residual <= inner.tol {
                return Ok(self.finish(lambda, residual, iter));
            }
            // Newton halves the residual quickly near an interior root; a long
            // stall means the iterates are pinned against the boundary.
            if residual < 0.5 * anchor {
                (anchor, anchor_iter) = (residual, iter);
            } else if iter - anchor_iter >= STALL_ITERS {
                break;
            }
        }
        Err(Error::NoConvergence {
            iters: inner.max_iters,
            residual: best.0,
        })
    }

    fn finish(&self, lambda: Vec<f64>, residual: f64, iterations: usize) -> DualSolution {
        let pi = self
            .probabilities(&lambda)
            .expect("accepted iterate is feasible");
        DualSolution {
            lambda,
            pi,
            residual,
            iterations,
        }
    }
}

/// Solve `H d = −grad` for positive semidefinite `H`, ridging as needed.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let scale = hess.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        for k in 0..h.nrows() {
            h[(k, k)] += ridge;
        }
        if let Some(chol) = h.cholesky() {
            return -chol.solve(grad);
        }
        ridge = if ridge == 0.0 {
            1e-12 * scale
        } else {
            ridge * 100.0
        };
    }
    -grad / scale
}

pub(crate) fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(g: f64) -> CressieReadConfig {
        CressieReadConfig::general(g).unwrap()
    }

    #[test]
    fn zero_multiplier_gives_reference_weights() {
        let g = [1.0, -2.0, 0.5];
        let w = [0.2, 0.5, 0.3];
        let c = cfg(-0.5);
        let map = MomentMap::new(&g, 1, Some(&w), &c).unwrap();
        let pi = map.probabilities(&[0.0]).unwrap();
        for (a, b) in pi.iter().zip(&w) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn infeasible_base_is_reported() {
        let g = [1.0, -2.0];
        let c = cfg(2.0);
        let map = MomentMap::new(&g, 1, None, &c).unwrap();
        assert!(matches!(
            map.probabilities(&[1.0]),
            Err(Error::InfeasibleBase(_))
        ));
    }

    #[test]
    fn newton_solves_every_branch() {
        let g = [-1.0, 0.0, 4.0, 2.5, -3.0, 0.7];
        for c in [
            cfg(-2.0),
            cfg(-0.5),
            cfg(0.5),
            cfg(1.0),
            cfg(2.0),
            CressieReadConfig::exponential_tilting(),
            CressieReadConfig::empirical_likelihood(),
        ] {
            let map = MomentMap::new(&g, 1, None, &c).unwrap();
            let sol = map.solve(&InnerSolverConfig::default()).unwrap();
            assert!(sol.residual <= 1e-9, "{c:?}: {}", sol.residual);
            assert!((sol.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn direction_handles_singular_hessian() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let d = newton_direction(&h, &g);
        assert!(d.iter().all(|v| v.is_finite()));
        assert!(g.dot(&d) < 0.0);
    }
}
