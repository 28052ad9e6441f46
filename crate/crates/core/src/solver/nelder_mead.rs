//! Nelder-Mead simplex search used for the outer β minimization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadConfig {
    pub reflect: f64,
    pub expand: f64,
    pub contract: f64,
    pub shrink: f64,
    pub max_iters: usize,
    /// Spread of objective values across the simplex at convergence.
    pub f_tol: f64,
    /// Simplex diameter at convergence.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            reflect: 1.0,
            expand: 2.0,
            contract: 0.5,
            shrink: 0.5,
            max_iters: 500,
            f_tol: 1e-8,
            x_tol: 1e-8,
            initial_step: 0.1,
        }
    }
}

impl NelderMeadConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.reflect > 0.0
            && self.expand > self.reflect
            && self.contract > 0.0
            && self.contract < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.f_tol > 0.0
            && self.x_tol > 0.0
            && self.initial_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid Nelder-Mead coefficients: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
}

/// Simplex volume relative to `diameter^d` below which the simplex counts as
/// collapsed onto a lower-dimensional face.
const DEGENERATE_VOLUME: f64 = 1e-14;
const MAX_RESTARTS: usize = 2;

struct Vertex {
    x: Vec<f64>,
    value: f64,
    /// Insertion order, the secondary sort key.
    id: u64,
}

struct Search<'f, F> {
    f: &'f mut F,
    evaluations: usize,
    next_id: u64,
    any_finite: bool,
}

impl<F: FnMut(&[f64]) -> f64> Search<'_, F> {
    fn vertex(&mut self, x: Vec<f64>) -> Vertex {
        let mut value = (self.f)(&x);
        if value.is_nan() {
            value = f64::INFINITY;
        }
        self.any_finite |= value.is_finite();
        self.evaluations += 1;
        self.next_id += 1;
        Vertex {
            x,
            value,
            id: self.next_id,
        }
    }

    fn simplex_around(&mut self, center: Vertex, step: f64) -> Vec<Vertex> {
        let d = center.x.len();
        let mut simplex = Vec::with_capacity(d + 1);
        let base = center.x.clone();
        simplex.push(center);
        for j in 0..d {
            let mut x = base.clone();
            x[j] += step;
            simplex.push(self.vertex(x));
        }
        simplex
    }
}

/// Minimize `f` starting from `x0`. Non-finite values are treated as `+∞`.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    let d = x0.len();
    if d == 0 {
        return Err(Error::InvalidConfig("empty starting point".into()));
    }
    let mut search = Search {
        f: &mut f,
        evaluations: 0,
        next_id: 0,
        any_finite: false,
    };
    let first = search.vertex(x0.to_vec());
    let mut step = cfg.initial_step;
    let mut simplex = search.simplex_around(first, step);
    let mut restarts = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        simplex.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.id.cmp(&b.id)));

        let best = simplex[0].value;
        let worst = simplex[d].value;
        let diameter = diameter(&simplex);
        // A collapsed simplex with infinite vertices sits on the boundary of
        // the finite region.
        if best.is_finite()
            && diameter <= cfg.x_tol
            && (worst - best <= cfg.f_tol || worst.is_infinite())
        {
            converged = true;
            break;
        }
        // Collapsed without ever leaving the infeasible region.
        if best.is_infinite() && diameter <= cfg.x_tol {
            break;
        }
        if d > 1 && restarts < MAX_RESTARTS && diameter > cfg.x_tol {
            let vol = relative_volume(&simplex, diameter);
            if vol < DEGENERATE_VOLUME {
                restarts += 1;
                step *= 0.5;
                let incumbent = simplex.swap_remove(0);
                simplex = search.simplex_around(incumbent, step);
                continue;
            }
        }

        let mut centroid = vec![0.0; d];
        for v in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(&v.x) {
                *c += x / d as f64;
            }
        }
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, x)| c + t * (x - c))
                .collect()
        };

        let reflected = search.vertex(along(-cfg.reflect, &simplex[d].x));
        if reflected.value < simplex[0].value {
            let expanded = search.vertex(along(-cfg.reflect * cfg.expand, &simplex[d].x));
            simplex[d] = if expanded.value < reflected.value {
                expanded
            } else {
                reflected
            };
            continue;
        }
        if reflected.value < simplex[d - 1].value {
            simplex[d] = reflected;
            continue;
        }
        let contracted = if reflected.value < simplex[d].value {
            let c = search.vertex(along(-cfg.reflect * cfg.contract, &simplex[d].x));
            (c.value <= reflected.value).then_some(c)
        } else {
            let c = search.vertex(along(cfg.contract, &simplex[d].x));
            (c.value < simplex[d].value).then_some(c)
        };
        match contracted {
            Some(c) => simplex[d] = c,
            None => {
                let anchor = simplex[0].x.clone();
                let rest: Vec<Vertex> = simplex.drain(1..).collect();
                for v in rest {
                    let x: Vec<f64> = anchor
                        .iter()
                        .zip(&v.x)
                        .map(|(a, x)| a + cfg.shrink * (x - a))
                        .collect();
                    let nv = search.vertex(x);
                    simplex.push(nv);
                }
            }
        }
    }

    if !search.any_finite {
        return Err(Error::NoFeasibleBeta);
    }
    simplex.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.id.cmp(&b.id)));
    let best = simplex.swap_remove(0);
    Ok(Minimum {
        x: best.x,
        value: best.value,
        iterations,
        evaluations: search.evaluations,
        restarts,
        converged,
    })
}

fn diameter(simplex: &[Vertex]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, a) in simplex.iter().enumerate() {
        for b in &simplex[i + 1..] {
            let d2: f64 = a.x.iter().zip(&b.x).map(|(p, q)| (p - q).powi(2)).sum();
            m = m.max(d2.sqrt());
        }
    }
    m
}

fn relative_volume(simplex: &[Vertex], diameter: f64) -> f64 {
    let d = simplex.len() - 1;
    if diameter == 0.0 {
        return 0.0;
    }
    let edges = DMatrix::from_fn(d, d, |r, c| {
        (simplex[c + 1].x[r] - simplex[0].x[r]) / diameter
    });
    let factorial: f64 = (1..=d).map(|k| k as f64).product();
    edges.determinant().abs() / factorial
}
