use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FactorSeries, Month, ReturnsPanel};
use crate::{Error, Result};

/// Parameters of the synthetic factor-structured panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_assets: usize,
    pub n_dates: usize,
    pub k_true: usize,
    /// Scale of the idiosyncratic noise (monthly standard deviation).
    pub noise_scale: f64,
    pub seed: u64,
    pub start: Month,
}

impl SyntheticSpec {
    pub fn new(n_assets: usize, n_dates: usize, k_true: usize, noise_scale: f64, seed: u64) -> Self {
        Self {
            n_assets,
            n_dates,
            k_true,
            noise_scale,
            seed,
            start: Month { year: 1960, month: 1 },
        }
    }
}

/// A synthetic panel together with the factors that generated it.
#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub panel: ReturnsPanel,
    /// Columns `mkt` (equal-weighted market return), `f1..fK` (true factors)
    /// and `rf` (zero risk-free rate).
    pub factors: FactorSeries,
    /// K x N true loadings.
    pub loadings: DMatrix<f64>,
}

/// Exact factor model `r = mu + B'f + e` with Gaussian factors, loadings and
/// diagonal noise; prices follow the realised returns and caps are price times
/// a fixed share count.
pub fn generate_synthetic(
    n_assets: usize,
    n_dates: usize,
    k_true: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<ReturnsPanel> {
    Ok(generate(&SyntheticSpec::new(n_assets, n_dates, k_true, noise_scale, seed))?.panel)
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticPanel> {
    let (n, t, k) = (spec.n_assets, spec.n_dates, spec.k_true);
    if k > n {
        return Err(Error::InvalidParameter(format!("k_true {k} exceeds n_assets {n}")));
    }
    if n == 0 || t == 0 {
        return Err(Error::InvalidParameter("panel must have assets and dates".into()));
    }
    if !(spec.noise_scale >= 0.0) {
        return Err(Error::InvalidParameter("noise_scale must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");

    // first factor is market-like with positive loadings around one
    let factor_sd: Vec<f64> = (0..k).map(|i| 0.045 * 0.7f64.powi(i as i32)).collect();
    let loadings = DMatrix::from_fn(k, n, |i, _| {
        let z: f64 = std_normal.sample(&mut rng);
        if i == 0 {
            1.0 + 0.4 * z
        } else {
            z
        }
    });
    let mu: Vec<f64> = (0..n).map(|_| 0.004 + 0.006 * rng.random::<f64>()).collect();
    let idio_sd: Vec<f64> = (0..n)
        .map(|_| spec.noise_scale * (0.5 + rng.random::<f64>()))
        .collect();
    let factors = DMatrix::from_fn(t, k, |_, j| factor_sd[j] * std_normal.sample(&mut rng));
    let noise = DMatrix::from_fn(t, n, |_, j| idio_sd[j] * std_normal.sample(&mut rng));

    let mut returns = &factors * &loadings + noise;
    for (j, mut col) in returns.column_iter_mut().enumerate() {
        for v in col.iter_mut() {
            *v = (*v + mu[j]).max(-0.95);
        }
    }

    let shares: Vec<f64> = (0..n).map(|_| 1e6 * (1.0 + 99.0 * rng.random::<f64>())).collect();
    let mut prices = DMatrix::zeros(t, n);
    for j in 0..n {
        let mut p = 20.0 + 80.0 * rng.random::<f64>();
        for i in 0..t {
            p *= 1.0 + returns[(i, j)];
            prices[(i, j)] = p;
        }
    }
    let caps = DMatrix::from_fn(t, n, |i, j| prices[(i, j)] * shares[j]);

    let dates: Vec<Month> = (0..t).map(|i| spec.start.plus(i as i64)).collect();
    let width = n.to_string().len().max(3);
    let assets: Vec<String> = (0..n).map(|j| format!("S{:0width$}", j + 1)).collect();

    let mut names = vec!["mkt".to_string()];
    names.extend((1..=k).map(|i| format!("f{i}")));
    names.push("rf".into());
    let factor_values = DMatrix::from_fn(t, k + 2, |i, c| {
        if c == 0 {
            returns.row(i).mean()
        } else if c <= k {
            factors[(i, c - 1)]
        } else {
            0.0
        }
    });

    let panel = ReturnsPanel::new(dates.clone(), assets, returns, Some(prices), Some(caps))?;
    let factors = FactorSeries::new(dates, names, factor_values)?;
    Ok(SyntheticPanel {
        panel,
        factors,
        loadings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{covariance, sym_eigen_desc};

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic(8, 50, 2, 0.02, 7).unwrap();
        let b = generate_synthetic(8, 50, 2, 0.02, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(8, 50, 2, 0.02, 8).unwrap();
        assert_ne!(a.returns, c.returns);
    }

    #[test]
    fn noiseless_single_factor_is_rank_one() {
        let p = generate_synthetic(10, 120, 1, 0.0, 3).unwrap();
        let (vals, _) = sym_eigen_desc(&covariance(&p.returns));
        assert!(vals[0] > 1e-4);
        assert!(vals.iter().skip(1).all(|v| v.abs() < 1e-10), "{vals}");
    }

    #[test]
    fn rejects_too_many_factors() {
        assert!(generate_synthetic(3, 10, 4, 0.01, 1).is_err());
    }
}
