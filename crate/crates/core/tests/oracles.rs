//! Fits and statistics checked against independent closed forms.

use approx::assert_relative_eq;
use crlearn::summary::learned_basic;
use crlearn::{
    cr_objective, fit_default, CressieReadConfig, DataMatrix, MomentModel, SolverConfig,
};

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-14 {
        return None;
    }
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][k] = b[r];
        }
        *xk = det(m) / d;
    }
    Some(x)
}

/// With three points and three constraints the probabilities are pinned by
/// β, so the profile objective is a one-dimensional function.
fn profile(y: [f64; 3], beta: f64) -> Option<(f64, [f64; 3])> {
    let g1 = y.map(|v| v - beta);
    let g2 = y.map(|v| (v - beta).powi(2) - 1.0);
    let pi = solve3([[1.0; 3], g1, g2], [1.0, 0.0, 0.0])?;
    if pi.iter().any(|p| *p <= 0.0) {
        return None;
    }
    Some((
        0.5 * pi.iter().map(|p| (3.0 * p).powi(2) - 1.0).sum::<f64>(),
        pi,
    ))
}

fn oracle_minimum(y: [f64; 3]) -> (f64, f64, [f64; 3]) {
    let f = |b: f64| profile(y, b).map_or(f64::INFINITY, |p| p.0);
    let (mut best, mut arg) = (f64::INFINITY, 0.0);
    let steps = 70_000;
    for k in 0..=steps {
        let b = -1.0 + 7.0 * k as f64 / steps as f64;
        let v = f(b);
        if v < best {
            best = v;
            arg = b;
        }
    }
    // Golden-section refinement inside the bracketing grid cell pair.
    let h = 7.0 / steps as f64;
    let (mut lo, mut hi) = (arg - h, arg + h);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let beta = 0.5 * (lo + hi);
    let (v, pi) = profile(y, beta).unwrap();
    (beta, v, pi)
}

#[test]
fn over_identified_quadratic_fit_matches_profile_oracle() {
    let y = [0.0, 1.0, 5.0];
    let (beta, value, pi) = oracle_minimum(y);
    let data = DataMatrix::column(&y).unwrap();
    let cr = CressieReadConfig::general(1.0).unwrap();
    let sol = fit_default(
        &data,
        &MomentModel::mean_unit_variance(),
        &cr,
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(sol.converged);
    assert!(
        (sol.beta[0] - beta).abs() < 1e-5,
        "{} vs {beta}",
        sol.beta[0]
    );
    assert_relative_eq!(sol.discrepancy, value, max_relative = 1e-7);
    for (a, b) in sol.pi.iter().zip(pi) {
        assert!((a - b).abs() < 1e-5, "{:?} vs {pi:?}", sol.pi);
    }
}

#[test]
fn just_identified_fit_is_uniform_at_sample_mean() {
    let y = [0.3, -1.2, 2.5, 0.9, 4.1];
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let data = DataMatrix::column(&y).unwrap();
    for cr in [
        CressieReadConfig::general(1.0).unwrap(),
        CressieReadConfig::general(-0.5).unwrap(),
        CressieReadConfig::general(2.0).unwrap(),
        CressieReadConfig::exponential_tilting(),
        CressieReadConfig::empirical_likelihood(),
    ] {
        let sol = fit_default(&data, &MomentModel::mean(1), &cr, &SolverConfig::default()).unwrap();
        assert!((sol.beta[0] - mean).abs() < 1e-7, "{cr:?}");
        for p in &sol.pi {
            assert!((p - 0.2).abs() < 1e-7, "{cr:?}: {:?}", sol.pi);
        }
        assert!(sol.discrepancy.abs() < 1e-9);
    }
}

#[test]
fn mean_variance_fit_recovers_moments() {
    let y = [1.0, 2.0, 4.0, 7.0];
    let mean = 3.5;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
    let data = DataMatrix::column(&y).unwrap();
    let sol = fit_default(
        &data,
        &MomentModel::mean_variance(),
        &CressieReadConfig::default(),
        &SolverConfig::default(),
    )
    .unwrap();
    assert!((sol.beta[0] - mean).abs() < 1e-6);
    assert!((sol.beta[1] - var).abs() < 1e-6);
}

#[test]
fn objective_closed_forms() {
    let pi = [0.1f64, 0.2, 0.3, 0.4];
    let n = 4.0f64;
    let general =
        |g: f64| pi.iter().map(|p| (n * p).powf(g + 1.0) - 1.0).sum::<f64>() / (g * (g + 1.0));
    for g in [1.0, -0.5, 2.0, -2.0, 0.3] {
        let v = cr_objective(&pi, &CressieReadConfig::general(g).unwrap()).unwrap();
        assert_relative_eq!(v, general(g), max_relative = 1e-12);
    }
    let et: f64 = pi.iter().map(|p| n * p * (n * p).ln()).sum();
    let el: f64 = -pi.iter().map(|p| (n * p).ln()).sum::<f64>();
    let v = cr_objective(&pi, &CressieReadConfig::exponential_tilting()).unwrap();
    assert_relative_eq!(v, et, max_relative = 1e-12);
    let v = cr_objective(&pi, &CressieReadConfig::empirical_likelihood()).unwrap();
    assert_relative_eq!(v, el, max_relative = 1e-12);
}

#[test]
fn learned_statistic_matches_hand_computation() {
    let obs_y = [0.2, 1.1, -0.7, 2.3, 0.5, 1.6];
    let sim_y = [0.9, -0.3, 1.8, 0.1, 2.7, 0.4];
    let m = MomentModel::mean_variance();
    let cr = CressieReadConfig::default();
    let s = SolverConfig::default();
    let obs = fit_default(&DataMatrix::column(&obs_y).unwrap(), &m, &cr, &s).unwrap();
    let sim = fit_default(&DataMatrix::column(&sim_y).unwrap(), &m, &cr, &s).unwrap();
    let stat = learned_basic(&obs, &sim).unwrap();
    let log_ratio: f64 = sim
        .pi
        .iter()
        .zip(&obs.pi)
        .map(|(a, b)| a.ln() - b.ln())
        .sum();
    let dist: f64 = 0.5
        * sim
            .beta
            .iter()
            .zip(&obs.beta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    assert_relative_eq!(stat.log_ratio_term, log_ratio, epsilon = 1e-12);
    assert_relative_eq!(stat.distance_term, dist, epsilon = 1e-12);
    assert_relative_eq!(stat.value, log_ratio - dist, epsilon = 1e-12);
}
