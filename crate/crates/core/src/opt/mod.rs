//! Minimum-variance portfolios: long-only, unconstrained and turnover-penalized.

mod active_set;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cov::CovarianceEstimate;
use crate::data::Month;
use crate::linalg::{psd_repair, symmetrize};
use crate::{Error, Result};
use active_set::Problem;

/// Diagonal jitter added after eigenvalue clipping when the clipped matrix
/// is (numerically) singular.
pub const PSD_JITTER: f64 = 1e-10;
/// Largest condition number accepted by the unconstrained solution.
pub const MAX_CONDITION: f64 = 1e12;
/// Default turnover penalty (5 basis points).
pub const DEFAULT_KAPPA: f64 = 0.0005;

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWeights {
    pub weights: DVector<f64>,
    pub as_of: Option<Month>,
    pub iterations: usize,
    /// Largest violation of the optimality conditions.
    pub kkt_residual: f64,
    /// Objective value (variance plus any turnover penalty).
    pub objective: f64,
}

impl PortfolioWeights {
    pub fn with_date(mut self, as_of: Month) -> Self {
        self.as_of = Some(as_of);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    LongOnly,
    Unconstrained,
    TurnoverPenalized { kappa: f64 },
}

impl OptimizerKind {
    pub fn label(&self) -> String {
        match self {
            OptimizerKind::LongOnly => "long_only".into(),
            OptimizerKind::Unconstrained => "unconstrained".into(),
            OptimizerKind::TurnoverPenalized { kappa } if *kappa == DEFAULT_KAPPA => "turnover_penalized".into(),
            OptimizerKind::TurnoverPenalized { kappa } => format!("turnover_penalized({kappa})"),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    /// `long_only`, `unconstrained`, `turnover_penalized` or `turnover_penalized(<kappa>)`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long_only" => Ok(OptimizerKind::LongOnly),
            "unconstrained" => Ok(OptimizerKind::Unconstrained),
            "turnover_penalized" => Ok(OptimizerKind::TurnoverPenalized { kappa: DEFAULT_KAPPA }),
            _ => {
                let kappa = s
                    .strip_prefix("turnover_penalized(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|k| k.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown optimizer '{s}'")))?;
                if !(kappa >= 0.0) || !kappa.is_finite() {
                    return Err(Error::Config(format!("turnover penalty must be non-negative, got {kappa}")));
                }
                Ok(OptimizerKind::TurnoverPenalized { kappa })
            }
        }
    }
}

fn check_matrix(sigma: &DMatrix<f64>) -> Result<()> {
    if !sigma.is_square() || sigma.nrows() == 0 {
        return Err(Error::Shape(format!(
            "covariance must be a non-empty square matrix, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance matrix".into()));
    }
    Ok(())
}

fn variance(sigma: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    (w.transpose() * sigma * w)[(0, 0)]
}

/// KKT residual for `min w'Sw + kappa |w - w0|_1`, `1'w = 1`, `w >= 0`.
fn kkt_residual(sigma: &DMatrix<f64>, w: &DVector<f64>, penalty: Option<(&DVector<f64>, f64)>, lambda: f64) -> f64 {
    let g = sigma * w * 2.0;
    let mut res = (w.sum() - 1.0).abs();
    for i in 0..w.len() {
        res = res.max((-w[i]).max(0.0));
        // admissible subgradient interval of the penalty at w_i
        let (lo, hi) = match penalty {
            Some((w0, kappa)) => {
                let d = w[i] - w0[i];
                if d.abs() <= 1e-12 {
                    (-kappa, kappa)
                } else {
                    (kappa * d.signum(), kappa * d.signum())
                }
            }
            None => (0.0, 0.0),
        };
        // stationarity: g_i + s_i - lambda = mu_i with mu_i >= 0 and mu_i w_i = 0
        let base = g[i] - lambda;
        let violation = if w[i] > 1e-12 {
            // need mu_i = 0, i.e. -base in [lo, hi]
            (lo + base).max(0.0).max(-(hi + base)).max(0.0)
        } else {
            // need base + s_i >= 0 for some s_i in [lo, hi]
            (-(base + hi)).max(0.0)
        };
        res = res.max(violation);
    }
    res
}

/// `min w'Sw` s.t. `1'w = 1`, `w >= 0`.
pub fn minvar_long_only(sigma: &CovarianceEstimate) -> Result<PortfolioWeights> {
    long_only_matrix(&sigma.matrix).map(|w| stamp(w, sigma))
}

/// Clip negative eigenvalues; add [`PSD_JITTER`] only if the result is not
/// safely positive definite, so well-conditioned inputs are solved as given.
fn repair(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let clipped = psd_repair(sigma, 0.0);
    let min_eig = clipped.symmetric_eigenvalues().min();
    if min_eig >= PSD_JITTER {
        clipped
    } else {
        psd_repair(sigma, PSD_JITTER)
    }
}

fn stamp(mut w: PortfolioWeights, sigma: &CovarianceEstimate) -> PortfolioWeights {
    w.as_of = sigma.as_of;
    w
}

pub fn long_only_matrix(sigma: &DMatrix<f64>) -> Result<PortfolioWeights> {
    check_matrix(sigma)?;
    let repaired = repair(sigma);
    let sol = Problem {
        sigma: &repaired,
        penalty: None,
    }
    .solve()?;
    Ok(PortfolioWeights {
        objective: variance(sigma, &sol.weights),
        kkt_residual: kkt_residual(&repaired, &sol.weights, None, sol.multiplier),
        weights: sol.weights,
        as_of: None,
        iterations: sol.iterations,
    })
}

/// `w = S^{-1} 1 / (1' S^{-1} 1)`.
pub fn minvar_unconstrained(sigma: &CovarianceEstimate) -> Result<PortfolioWeights> {
    unconstrained_matrix(&sigma.matrix).map(|w| stamp(w, sigma))
}

pub fn unconstrained_matrix(sigma: &DMatrix<f64>) -> Result<PortfolioWeights> {
    check_matrix(sigma)?;
    let mut s = sigma.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigenvalues();
    let (min, max) = (eig.min(), eig.max());
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::Conditioning { condition });
    }
    let n = s.nrows();
    let ones = DVector::from_element(n, 1.0);
    let x = s
        .clone()
        .cholesky()
        .ok_or(Error::Conditioning { condition })?
        .solve(&ones);
    let w = &x / x.sum();
    // stationarity 2Sw = lambda 1 with lambda = 2 / (1'S^{-1}1)
    let lambda = 2.0 / x.sum();
    let g = &s * &w * 2.0;
    let kkt = g.iter().map(|gi| (gi - lambda).abs()).fold((w.sum() - 1.0).abs(), f64::max);
    Ok(PortfolioWeights {
        objective: variance(&s, &w),
        kkt_residual: kkt,
        weights: w,
        as_of: None,
        iterations: 1,
    })
}

/// `min w'Sw + kappa |w - w0|_1` s.t. `1'w = 1`, `w >= 0`.
///
/// `kappa = 0` returns exactly the long-only solution.
pub fn minvar_turnover_penalized(
    sigma: &CovarianceEstimate,
    omega0: &DVector<f64>,
    kappa: f64,
) -> Result<PortfolioWeights> {
    turnover_matrix(&sigma.matrix, omega0, kappa).map(|w| stamp(w, sigma))
}

pub fn turnover_matrix(sigma: &DMatrix<f64>, omega0: &DVector<f64>, kappa: f64) -> Result<PortfolioWeights> {
    check_matrix(sigma)?;
    if omega0.len() != sigma.nrows() {
        return Err(Error::Shape(format!(
            "{} previous weights for {} assets",
            omega0.len(),
            sigma.nrows()
        )));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("turnover penalty must be non-negative, got {kappa}")));
    }
    if omega0.iter().any(|v| !v.is_finite()) || (omega0.sum() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "previous weights must be finite and sum to 1, got sum {}",
            omega0.sum()
        )));
    }
    if kappa == 0.0 {
        return long_only_matrix(sigma);
    }
    let repaired = repair(sigma);
    let sol = Problem {
        sigma: &repaired,
        penalty: Some((omega0, kappa)),
    }
    .solve()?;
    let w = sol.weights;
    Ok(PortfolioWeights {
        objective: variance(sigma, &w) + kappa * (&w - omega0).abs().sum(),
        kkt_residual: kkt_residual(&repaired, &w, Some((omega0, kappa)), sol.multiplier),
        weights: w,
        as_of: None,
        iterations: sol.iterations,
    })
}

pub fn solve(kind: OptimizerKind, sigma: &CovarianceEstimate, omega0: Option<&DVector<f64>>) -> Result<PortfolioWeights> {
    match kind {
        OptimizerKind::LongOnly => minvar_long_only(sigma),
        OptimizerKind::Unconstrained => minvar_unconstrained(sigma),
        OptimizerKind::TurnoverPenalized { kappa } => match omega0 {
            Some(w0) => minvar_turnover_penalized(sigma, w0, kappa),
            None => minvar_long_only(sigma),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, rows, v)
    }

    #[test]
    fn long_only_examples() {
        let w = long_only_matrix(&DMatrix::identity(3, 3)).unwrap();
        assert!(w.weights.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
        let w = long_only_matrix(&m(2, &[1.0, 0.0, 0.0, 4.0])).unwrap();
        assert!((w.weights[0] - 0.8).abs() < 1e-9 && (w.weights[1] - 0.2).abs() < 1e-9);
        let w = long_only_matrix(&m(2, &[1.0, 2.0, 2.0, 5.0])).unwrap();
        assert!((w.weights[0] - 1.0).abs() < 1e-12 && w.weights[1].abs() < 1e-12);
        assert!(w.kkt_residual <= 1e-8);
    }

    #[test]
    fn unconstrained_examples() {
        let w = unconstrained_matrix(&DMatrix::identity(4, 4)).unwrap();
        assert!(w.weights.iter().all(|x| (x - 0.25).abs() < 1e-14));
        let w = unconstrained_matrix(&m(2, &[1.0, 2.0, 2.0, 5.0])).unwrap();
        assert!((w.weights[0] - 1.5).abs() < 1e-12 && (w.weights[1] + 0.5).abs() < 1e-12);
        let rank1 = m(2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(unconstrained_matrix(&rank1), Err(Error::Conditioning { .. })));
    }

    #[test]
    fn penalty_extremes() {
        let s = m(3, &[0.04, 0.01, 0.0, 0.01, 0.09, 0.02, 0.0, 0.02, 0.16]);
        let w0 = DVector::from_vec(vec![0.2, 0.5, 0.3]);
        let lo = long_only_matrix(&s).unwrap();
        assert_eq!(turnover_matrix(&s, &w0, 0.0).unwrap().weights, lo.weights);
        let stuck = turnover_matrix(&s, &w0, 1e6).unwrap();
        assert!((stuck.weights - &w0).abs().max() < 1e-6);
        assert!(turnover_matrix(&s, &DVector::from_vec(vec![0.5, 0.5, 0.5]), 0.1).is_err());
        assert!(turnover_matrix(&s, &w0, -1.0).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let s = m(2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(long_only_matrix(&s), Err(Error::NonFinite(_))));
    }

    #[test]
    fn optimizer_labels() {
        for k in [
            OptimizerKind::LongOnly,
            OptimizerKind::Unconstrained,
            OptimizerKind::TurnoverPenalized { kappa: DEFAULT_KAPPA },
            OptimizerKind::TurnoverPenalized { kappa: 0.002 },
        ] {
            assert_eq!(k.label().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("short".parse::<OptimizerKind>().is_err());
    }
}
