//! Overlapping blocks and block-smoothed moments for weakly dependent series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContrastSolution, CressieReadConfig, DataMatrix, MomentModel};
use crate::solver::{fit_moments, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockRule {
    Fixed,
    /// `m = max(1, ⌊n^{1/3}⌋)`, which grows with n while staying `o(√n)`.
    #[default]
    SqrtRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    #[serde(default)]
    pub block_len: usize,
    #[serde(default)]
    pub rule: BlockRule,
}

impl BlockConfig {
    pub fn fixed(block_len: usize) -> Self {
        Self {
            block_len,
            rule: BlockRule::Fixed,
        }
    }

    pub fn rate_rule() -> Self {
        Self {
            block_len: 0,
            rule: BlockRule::SqrtRule,
        }
    }

    pub fn resolve(&self, n: usize) -> Result<usize> {
        let m = match self.rule {
            BlockRule::Fixed => self.block_len,
            // Integer cube root; avoids float rounding at perfect cubes.
            BlockRule::SqrtRule => {
                let mut m = (n as f64).cbrt().floor() as usize;
                while (m + 1).pow(3) <= n {
                    m += 1;
                }
                while m > 0 && m.pow(3) > n {
                    m -= 1;
                }
                m.max(1)
            }
        };
        if m < 1 || m >= n {
            return Err(Error::BadBlockLen { m, n });
        }
        Ok(m)
    }
}

/// Overlapping windows `(k, …, k+m−1)` for `k = 0, …, n−m` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSet {
    n: usize,
    m: usize,
}

impl BlockSet {
    pub fn block_len(&self) -> usize {
        self.m
    }

    pub fn data_len(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        self.n - self.m + 1
    }

    pub fn block(&self, k: usize) -> std::ops::Range<usize> {
        k..k + self.m
    }

    pub fn iter(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.count()).map(|k| self.block(k))
    }
}

pub fn make_blocks(data: &DataMatrix, cfg: &BlockConfig) -> Result<BlockSet> {
    let n = data.rows();
    let m = cfg.resolve(n)?;
    Ok(BlockSet { n, m })
}

/// Row `k` is `(1/m) Σ_{s<m} g(y_{k+s}, β)`; returns the row-major
/// `(n−m+1) × d_g` matrix.
pub fn smoothed_moments(
    data: &DataMatrix,
    blocks: &BlockSet,
    beta: &[f64],
    model: &MomentModel,
) -> Result<Vec<f64>> {
    if blocks.data_len() != data.rows() {
        return Err(Error::LengthMismatch {
            expected: blocks.data_len(),
            got: data.rows(),
        });
    }
    let g = model.moments(data, beta)?;
    let d = model.d_g();
    let m = blocks.block_len() as f64;
    let mut out = vec![0.0; blocks.count() * d];
    for (k, range) in blocks.iter().enumerate() {
        let acc = &mut out[k * d..(k + 1) * d];
        for s in range {
            for (a, v) in acc.iter_mut().zip(&g[s * d..(s + 1) * d]) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= m);
    }
    Ok(out)
}

/// Cressie-Read fit treating each block's smoothed moment as one observation.
pub fn fit_blocks(
    data: &DataMatrix,
    model: &MomentModel,
    cfg: &CressieReadConfig,
    bcfg: &BlockConfig,
    solver: &SolverConfig,
    beta_init: &[f64],
) -> Result<ContrastSolution> {
    if data.cols() != model.d_y() {
        return Err(Error::LengthMismatch {
            expected: model.d_y(),
            got: data.cols(),
        });
    }
    let blocks = make_blocks(data, bcfg)?;
    fit_moments(
        |beta| smoothed_moments(data, &blocks, beta, model),
        model.d_g(),
        model.beta_bounds(),
        cfg,
        solver,
        beta_init,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::fit;

    fn col(v: &[f64]) -> DataMatrix {
        DataMatrix::column(v).unwrap()
    }

    #[test]
    fn block_windows() {
        let d = col(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = make_blocks(&d, &BlockConfig::fixed(2)).unwrap();
        assert_eq!(b.count(), 4);
        let windows: Vec<_> = b.iter().collect();
        assert_eq!(windows, vec![0..2, 1..3, 2..4, 3..5]);
        let b = make_blocks(&d, &BlockConfig::fixed(1)).unwrap();
        assert_eq!(b.count(), 5);
        assert!(matches!(
            make_blocks(&col(&[1.0, 2.0, 3.0]), &BlockConfig::fixed(3)),
            Err(Error::BadBlockLen { m: 3, n: 3 })
        ));
        assert!(make_blocks(&d, &BlockConfig::fixed(0)).is_err());
    }

    #[test]
    fn rate_rule_lengths() {
        assert_eq!(BlockConfig::rate_rule().resolve(8).unwrap(), 2);
        assert_eq!(BlockConfig::rate_rule().resolve(27).unwrap(), 3);
        assert_eq!(BlockConfig::rate_rule().resolve(26).unwrap(), 2);
        assert_eq!(BlockConfig::rate_rule().resolve(1000).unwrap(), 10);
        assert_eq!(BlockConfig::rate_rule().resolve(2).unwrap(), 1);
        assert!(BlockConfig::rate_rule().resolve(1).is_err());
    }

    #[test]
    fn smoothed_examples() {
        let model = MomentModel::mean(1);
        let d = col(&[1.0, 2.0, 3.0, 4.0]);
        let b = make_blocks(&d, &BlockConfig::fixed(2)).unwrap();
        assert_eq!(
            smoothed_moments(&d, &b, &[0.0], &model).unwrap(),
            vec![1.5, 2.5, 3.5]
        );
        let b1 = make_blocks(&d, &BlockConfig::fixed(1)).unwrap();
        assert_eq!(
            smoothed_moments(&d, &b1, &[0.5], &model).unwrap(),
            model.moments(&d, &[0.5]).unwrap()
        );
        let c = col(&[2.5; 6]);
        let b = make_blocks(&c, &BlockConfig::fixed(3)).unwrap();
        let rows = smoothed_moments(&c, &b, &[1.0], &model).unwrap();
        assert!(rows.iter().all(|r| *r == 1.5));
    }

    #[test]
    fn unit_blocks_reproduce_plain_fit() {
        let d = col(&[0.3, 1.7, -0.4, 2.2, 0.9, 1.1]);
        let model = MomentModel::mean_unit_variance();
        let cfg = CressieReadConfig::general(-0.5).unwrap();
        let solver = SolverConfig::default();
        let init = model.default_beta(&d);
        let a = fit(&d, &model, &cfg, &solver, &init).unwrap();
        let b = fit_blocks(&d, &model, &cfg, &BlockConfig::fixed(1), &solver, &init).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_data_is_uniform() {
        let d = col(&[4.0; 7]);
        let model = MomentModel::mean(1);
        let cfg = CressieReadConfig::general(1.0).unwrap();
        let sol = fit_blocks(
            &d,
            &model,
            &cfg,
            &BlockConfig::fixed(3),
            &SolverConfig::default(),
            &[4.0],
        )
        .unwrap();
        assert!(sol.pi.iter().all(|p| (p - 0.2).abs() < 1e-15));
        assert_eq!(sol.discrepancy, 0.0);
    }
}
