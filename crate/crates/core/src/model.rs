//! Shared domain types: data matrices, moment models, the Cressie-Read
//! configuration and the solution/statistic records every solver produces.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking that a probability vector lies on the simplex.
pub const SIMPLEX_SLACK: f64 = 1e-10;

/// Row-major `n × d_y` matrix of observations or simulation outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain(format!(
                "data matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(n * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::LengthMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(n, d, values)
    }

    /// Single-column matrix.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.cols)
    }

    /// New matrix whose row `k` is row `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.rows {
            return Err(Error::LengthMismatch {
                expected: self.rows,
                got: order.len(),
            });
        }
        let mut values = Vec::with_capacity(self.values.len());
        for &i in order {
            values.extend_from_slice(self.row(i));
        }
        Self::new(self.rows, self.cols, values)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::LengthMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidConfig(format!(
                "bounds must satisfy lower <= upper: {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Midpoint, falling back to 0 (or the finite side) on unbounded axes.
    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l.max(0.0),
                (false, true) => u.min(0.0),
                (false, false) => 0.0,
            })
            .collect()
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }
}

type MomentFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;
type SeedFn = dyn Fn(&DataMatrix) -> Vec<f64> + Send + Sync;

/// Moment function `g(y, β)` together with its dimensions and the box `𝔹`.
#[derive(Clone)]
pub struct MomentModel {
    name: String,
    d_y: usize,
    d_beta: usize,
    d_g: usize,
    eval: Arc<MomentFn>,
    seed: Option<Arc<SeedFn>>,
    beta_bounds: Bounds,
}

impl fmt::Debug for MomentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MomentModel")
            .field("name", &self.name)
            .field("d_y", &self.d_y)
            .field("d_beta", &self.d_beta)
            .field("d_g", &self.d_g)
            .field("beta_bounds", &self.beta_bounds)
            .finish()
    }
}

impl MomentModel {
    /// `eval(y, beta, out)` must write `d_g` finite values into `out`.
    pub fn new<F>(
        name: impl Into<String>,
        d_y: usize,
        d_beta: usize,
        d_g: usize,
        beta_bounds: Bounds,
        eval: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if d_y == 0 || d_beta == 0 || d_g == 0 {
            return Err(Error::InvalidConfig(
                "moment model dimensions must be positive".into(),
            ));
        }
        if beta_bounds.dim() != d_beta {
            return Err(Error::LengthMismatch {
                expected: d_beta,
                got: beta_bounds.dim(),
            });
        }
        Ok(Self {
            name: name.into(),
            d_y,
            d_beta,
            d_g,
            eval: Arc::new(eval),
            seed: None,
            beta_bounds,
        })
    }

    /// Attach a method-of-moments starting point.
    pub fn with_seed<F>(mut self, seed: F) -> Self
    where
        F: Fn(&DataMatrix) -> Vec<f64> + Send + Sync + 'static,
    {
        self.seed = Some(Arc::new(seed));
        self
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Result<Self> {
        if bounds.dim() != self.d_beta {
            return Err(Error::LengthMismatch {
                expected: self.d_beta,
                got: bounds.dim(),
            });
        }
        self.beta_bounds = bounds;
        Ok(self)
    }

    /// `g(y, β) = y − β`, exactly identified.
    pub fn mean(d_y: usize) -> Self {
        Self::new(
            "mean",
            d_y,
            d_y,
            d_y,
            Bounds::unbounded(d_y),
            |y, b, out| {
                for ((o, yv), bv) in out.iter_mut().zip(y).zip(b) {
                    *o = yv - bv;
                }
            },
        )
        .expect("valid dimensions")
        .with_seed(column_means)
    }

    /// `g(y, β) = (y − β₁, (y − β₁)² − β₂)` for scalar data, exactly identified.
    pub fn mean_variance() -> Self {
        let bounds = Bounds {
            lower: vec![f64::NEG_INFINITY, 0.0],
            upper: vec![f64::INFINITY, f64::INFINITY],
        };
        Self::new("mean_variance", 1, 2, 2, bounds, |y, b, out| {
            let e = y[0] - b[0];
            out[0] = e;
            out[1] = e * e - b[1];
        })
        .expect("valid dimensions")
        .with_seed(|data| {
            let m = column_means(data)[0];
            let n = data.rows() as f64;
            let v = data.iter_rows().map(|r| (r[0] - m).powi(2)).sum::<f64>() / n;
            vec![m, v]
        })
    }

    /// `g(y, β) = (y − β, (y − β)² − 1)` for scalar data: a location model
    /// with a known unit variance, over-identified (`d_g = 2`, `d_β = 1`).
    pub fn mean_unit_variance() -> Self {
        Self::new(
            "mean_unit_variance",
            1,
            1,
            2,
            Bounds::unbounded(1),
            |y, b, out| {
                let e = y[0] - b[0];
                out[0] = e;
                out[1] = e * e - 1.0;
            },
        )
        .expect("valid dimensions")
        .with_seed(column_means)
    }

    /// Least-squares score `g((x, y), β) = x·(y − xᵀβ)` with rows laid out as
    /// `(x₁, …, x_p, y)`.
    pub fn linear_score(p: usize) -> Self {
        Self::new(
            "linear_score",
            p + 1,
            p,
            p,
            Bounds::unbounded(p),
            move |row, b, out| {
                let (x, y) = row.split_at(p);
                let fitted: f64 = x.iter().zip(b).map(|(a, c)| a * c).sum();
                let resid = y[0] - fitted;
                for (o, xv) in out.iter_mut().zip(x) {
                    *o = xv * resid;
                }
            },
        )
        .expect("valid dimensions")
        .with_seed(move |data| {
            let n = data.rows();
            let x = DMatrix::from_fn(n, p, |i, j| data.row(i)[j]);
            let y = DVector::from_fn(n, |i, _| data.row(i)[p]);
            let xtx = x.transpose() * &x;
            let xty = x.transpose() * y;
            xtx.lu()
                .solve(&xty)
                .map(|b| b.iter().copied().collect())
                .unwrap_or_else(|| vec![0.0; p])
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn d_beta(&self) -> usize {
        self.d_beta
    }

    pub fn d_g(&self) -> usize {
        self.d_g
    }

    pub fn beta_bounds(&self) -> &Bounds {
        &self.beta_bounds
    }

    pub fn eval_into(&self, y: &[f64], beta: &[f64], out: &mut [f64]) {
        (self.eval)(y, beta, out)
    }

    pub fn eval(&self, y: &[f64], beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d_g];
        self.eval_into(y, beta, &mut out);
        out
    }

    /// Row-major `n × d_g` matrix of `g(y_i, β)`.
    pub fn moments(&self, data: &DataMatrix, beta: &[f64]) -> Result<Vec<f64>> {
        if data.cols() != self.d_y {
            return Err(Error::LengthMismatch {
                expected: self.d_y,
                got: data.cols(),
            });
        }
        if beta.len() != self.d_beta {
            return Err(Error::LengthMismatch {
                expected: self.d_beta,
                got: beta.len(),
            });
        }
        let mut out = vec![0.0; data.rows() * self.d_g];
        for (row, chunk) in data.iter_rows().zip(out.chunks_exact_mut(self.d_g)) {
            self.eval_into(row, beta, chunk);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "moment function '{}' returned a non-finite value",
                self.name
            )));
        }
        Ok(out)
    }

    /// Method-of-moments seed clamped into the box, else the box midpoint.
    pub fn default_beta(&self, data: &DataMatrix) -> Vec<f64> {
        match &self.seed {
            Some(seed) => {
                let b = seed(data);
                if b.len() == self.d_beta && b.iter().all(|v| v.is_finite()) {
                    self.beta_bounds.clamp(&b)
                } else {
                    self.beta_bounds.midpoint()
                }
            }
            None => self.beta_bounds.midpoint(),
        }
    }
}

fn column_means(data: &DataMatrix) -> Vec<f64> {
    let n = data.rows() as f64;
    let mut m = vec![0.0; data.cols()];
    for row in data.iter_rows() {
        for (a, v) in m.iter_mut().zip(row) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// Which member of the Cressie-Read family is in use.
///
/// The two limiting members are selected explicitly instead of evaluating
/// the general formula near its poles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `γ ∉ {−1, 0}`; weights `(1 + λᵀg)^{1/γ}`.
    #[default]
    General,
    /// Limit `γ → 0`: Kullback-Leibler / exponential tilting, weights `exp(λᵀg)`.
    #[serde(alias = "et", alias = "gamma_zero")]
    ExponentialTilting,
    /// Limit `γ → −1`: empirical likelihood, weights `1 / (1 + λᵀg)`.
    #[serde(alias = "el", alias = "gamma_minus_one")]
    EmpiricalLikelihood,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CressieReadConfig {
    pub gamma: f64,
    #[serde(default)]
    pub branch: Branch,
    #[serde(default = "default_margin")]
    pub feasibility_margin: f64,
}

fn default_margin() -> f64 {
    1e-10
}

impl Default for CressieReadConfig {
    fn default() -> Self {
        Self {
            gamma: -0.5,
            branch: Branch::General,
            feasibility_margin: default_margin(),
        }
    }
}

impl CressieReadConfig {
    pub fn general(gamma: f64) -> Result<Self> {
        let cfg = Self {
            gamma,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn exponential_tilting() -> Self {
        Self {
            gamma: 0.0,
            branch: Branch::ExponentialTilting,
            feasibility_margin: default_margin(),
        }
    }

    pub fn empirical_likelihood() -> Self {
        Self {
            gamma: -1.0,
            branch: Branch::EmpiricalLikelihood,
            feasibility_margin: default_margin(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.feasibility_margin > 0.0) {
            return Err(Error::InvalidConfig(
                "feasibility_margin must be positive".into(),
            ));
        }
        if self.branch == Branch::General
            && (!self.gamma.is_finite() || self.gamma == 0.0 || self.gamma == -1.0)
        {
            return Err(Error::Domain(format!(
                "gamma = {} is a pole of the general branch; select a limit branch",
                self.gamma
            )));
        }
        Ok(())
    }

    /// `+1` when the tilt weight increases with `λᵀg`, `−1` otherwise.
    pub fn orientation(&self) -> f64 {
        match self.branch {
            Branch::General if self.gamma > 0.0 => 1.0,
            Branch::General => -1.0,
            Branch::ExponentialTilting => 1.0,
            Branch::EmpiricalLikelihood => -1.0,
        }
    }

    /// `ln(1 + arg)` when the base clears the feasibility margin. Computed
    /// with `ln_1p` so small arguments keep their low bits; near γ = 0 the
    /// log is divided by γ and any rounding in `1 + arg` would be amplified.
    fn log_base(&self, arg: f64) -> Option<f64> {
        (1.0 + arg >= self.feasibility_margin).then(|| arg.ln_1p())
    }

    /// Unnormalized contrast weight for `arg = λᵀg`; `None` when the base is
    /// below the feasibility margin.
    pub fn tilt(&self, arg: f64) -> Option<f64> {
        match self.branch {
            Branch::General => self.log_base(arg).map(|l| (l / self.gamma).exp()),
            Branch::EmpiricalLikelihood => self.log_base(arg).map(|_| 1.0 / (1.0 + arg)),
            Branch::ExponentialTilting => Some(arg.exp()),
        }
    }

    /// Derivative of [`tilt`](Self::tilt) with respect to `arg`.
    pub fn tilt_derivative(&self, arg: f64) -> Option<f64> {
        match self.branch {
            Branch::General => self
                .log_base(arg)
                .map(|l| ((1.0 / self.gamma - 1.0) * l).exp() / self.gamma),
            Branch::EmpiricalLikelihood => self
                .log_base(arg)
                .map(|_| -1.0 / ((1.0 + arg) * (1.0 + arg))),
            Branch::ExponentialTilting => Some(arg.exp()),
        }
    }

    /// Antiderivative of [`tilt`](Self::tilt); its weighted sum is the dual
    /// objective whose stationary point satisfies the moment condition.
    pub fn potential(&self, arg: f64) -> Option<f64> {
        match self.branch {
            Branch::General => {
                let g = self.gamma;
                self.log_base(arg)
                    .map(|l| g / (g + 1.0) * (((g + 1.0) / g) * l).exp())
            }
            Branch::EmpiricalLikelihood => self.log_base(arg),
            Branch::ExponentialTilting => Some(arg.exp()),
        }
    }
}

/// Check that `pi` is a probability vector within [`SIMPLEX_SLACK`].
pub fn check_simplex(pi: &[f64]) -> Result<()> {
    if pi.is_empty() {
        return Err(Error::Domain("empty probability vector".into()));
    }
    if let Some(i) = pi
        .iter()
        .position(|p| !p.is_finite() || *p < -SIMPLEX_SLACK)
    {
        return Err(Error::Domain(format!(
            "pi[{i}] = {} is not a probability",
            pi[i]
        )));
    }
    let s: f64 = pi.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_SLACK {
        return Err(Error::Domain(format!("pi sums to {s}, not 1")));
    }
    Ok(())
}

/// Cressie-Read divergence of `pi` from a reference distribution `reference`:
/// `Σ r_i [(π_i / r_i)^{γ+1} − 1] / (γ(γ+1))`, with the continuous limits
/// `Σ π_i log(π_i / r_i)` (γ → 0) and `−Σ r_i log(π_i / r_i)` (γ → −1).
pub fn cr_divergence(pi: &[f64], reference: &[f64], cfg: &CressieReadConfig) -> Result<f64> {
    if pi.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            got: pi.len(),
        });
    }
    cfg.validate()?;
    let g = cfg.gamma;
    let mut total = 0.0;
    for (&p, &r) in pi.iter().zip(reference) {
        let p = p.max(0.0);
        if r <= 0.0 {
            if p > 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        let ratio = p / r;
        total += match cfg.branch {
            Branch::General => r * (ratio.powf(g + 1.0) - 1.0),
            Branch::ExponentialTilting => {
                if p == 0.0 {
                    0.0
                } else {
                    p * ratio.ln()
                }
            }
            Branch::EmpiricalLikelihood => -r * ratio.ln(),
        };
    }
    Ok(match cfg.branch {
        Branch::General => total / (g * (g + 1.0)),
        _ => total,
    })
}

/// The Cressie-Read criterion `(1/(γ(γ+1))) Σ [(Nπ_i)^{γ+1} − 1]`.
///
/// Limit branches return the continuous limits of the same expression:
/// `N Σ π_i log(Nπ_i)` for γ → 0 and `−Σ log(Nπ_i)` for γ → −1.
pub fn cr_objective(pi: &[f64], cfg: &CressieReadConfig) -> Result<f64> {
    check_simplex(pi)?;
    let n = pi.len();
    let uniform = vec![1.0 / n as f64; n];
    Ok(n as f64 * cr_divergence(pi, &uniform, cfg)?)
}

/// Output of a Cressie-Read fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastSolution {
    pub pi: Vec<f64>,
    /// Multiplier after absorbing η into the normalization.
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub discrepancy: f64,
    pub converged: bool,
    /// Max-norm of `Σ π_i g(y_i, β)`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Basic,
    MultiRep,
    Conditional,
    Subset,
    Blockwise,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Variant::Basic),
            "multirep" | "multi_rep" => Ok(Variant::MultiRep),
            "conditional" => Ok(Variant::Conditional),
            "subset" => Ok(Variant::Subset),
            "blockwise" => Ok(Variant::Blockwise),
            other => Err(Error::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

/// Learned summary statistic and its two additive parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnedStatistic {
    pub value: f64,
    pub log_ratio_term: f64,
    /// `½‖β^sim − β^obs‖²`
    pub distance_term: f64,
    pub variant: Variant,
}

impl LearnedStatistic {
    pub fn new(log_ratio_term: f64, distance_term: f64, variant: Variant) -> Self {
        Self {
            value: log_ratio_term - distance_term,
            log_ratio_term,
            distance_term,
            variant,
        }
    }
}

/// A simulator parameter inside its box `Θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub theta: Vec<f64>,
    pub bounds: Bounds,
}

impl ThetaPoint {
    pub fn new(theta: Vec<f64>, bounds: Bounds) -> Result<Self> {
        if !bounds.contains(&theta) {
            return Err(Error::BadTheta(format!(
                "theta {theta:?} outside bounds {bounds:?}"
            )));
        }
        Ok(Self { theta, bounds })
    }

    pub fn unbounded(theta: Vec<f64>) -> Self {
        let bounds = Bounds::unbounded(theta.len());
        Self { theta, bounds }
    }

    pub fn in_bounds(&self) -> bool {
        self.bounds.contains(&self.theta)
    }
}
