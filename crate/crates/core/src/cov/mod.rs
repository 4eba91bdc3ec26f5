//! Factor-model fits and the covariance estimators built on them: the sample
//! covariance, the static factor covariance `B' Sigma_f B + Sigma_u`, and three
//! dynamic variants in which one ingredient follows a GARCH or DCC path.

mod dcc;
mod dynamic;
mod garch;
mod ols;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use dcc::{dcc_fit, dcc_fit_with, dcc_from_marginals, DccFit, DccOptions};
pub use dynamic::{
    assemble_dynamic, dynamic_betas, dynamic_betas_with, factor_covariance, CovIngredients, DynamicBetas,
    DynamicOptions,
};
pub use garch::{garch11_fit, garch11_fit_with, garch_variance_path, Garch11Fit, GarchOptions, MIN_VOLATILITY_OBS};
pub use ols::{ols_fit, FactorModelFit};

use crate::data::Month;
use crate::linalg::{covariance, has_missing, pairwise_covariance, psd_repair, symmetrize};
use crate::stats::{paired_bootstrap_pvalue, BootstrapSettings};
use crate::{Error, Result};

/// Which estimator produced a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CovSpec {
    Sample,
    Static,
    /// Time-varying loadings.
    DynBeta,
    /// Time-varying factor covariance.
    DynFactor,
    /// Time-varying residual variances.
    DynError,
}

impl CovSpec {
    pub const FACTOR_SPECS: [CovSpec; 4] = [CovSpec::Static, CovSpec::DynBeta, CovSpec::DynFactor, CovSpec::DynError];

    pub fn label(self) -> &'static str {
        match self {
            CovSpec::Sample => "sample",
            CovSpec::Static => "static",
            CovSpec::DynBeta => "dyn_beta",
            CovSpec::DynFactor => "dyn_factor",
            CovSpec::DynError => "dyn_error",
        }
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, CovSpec::DynBeta | CovSpec::DynFactor | CovSpec::DynError)
    }
}

impl fmt::Display for CovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CovSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            CovSpec::Sample,
            CovSpec::Static,
            CovSpec::DynBeta,
            CovSpec::DynFactor,
            CovSpec::DynError,
        ]
        .into_iter()
        .find(|c| c.label() == s)
        .ok_or_else(|| Error::Config(format!("unknown covariance spec '{s}'")))
    }
}

/// A return covariance matrix with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub spec: CovSpec,
    pub as_of: Option<Month>,
}

impl CovarianceEstimate {
    /// Wraps `matrix` after symmetrising it.
    pub fn new(mut matrix: DMatrix<f64>, spec: CovSpec) -> Self {
        symmetrize(&mut matrix);
        Self {
            matrix,
            spec,
            as_of: None,
        }
    }

    pub fn with_date(mut self, as_of: Month) -> Self {
        self.as_of = Some(as_of);
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.symmetric_eigenvalues().min()
    }

    /// N x N CSV with the asset ids as header.
    pub fn write_csv<W: Write>(&self, assets: &[String], writer: W) -> Result<()> {
        if assets.len() != self.dim() {
            return Err(Error::Shape(format!("{} asset ids for a {}x{} matrix", assets.len(), self.dim(), self.dim())));
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(assets)?;
        for row in self.matrix.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unbiased pairwise-complete sample covariance (divisor T-1).
///
/// With missing cells the pairwise matrix need not be PSD; negative
/// eigenvalues are then clipped to zero.
pub fn sample_cov(r: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    if r.nrows() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: r.nrows(),
        });
    }
    if r.iter().any(|v| v.is_infinite()) {
        return Err(Error::NonFinite("return matrix".into()));
    }
    let m = if has_missing(r) {
        psd_repair(&pairwise_covariance(r), 0.0)
    } else {
        covariance(r)
    };
    Ok(CovarianceEstimate::new(m, CovSpec::Sample))
}

/// `B' Sigma_f B + diag(sigma_u^2)` for K x N loadings.
pub fn factor_implied(loadings: &DMatrix<f64>, factor_cov: &DMatrix<f64>, residual_var: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (k, n) = loadings.shape();
    if factor_cov.shape() != (k, k) || residual_var.len() != n {
        return Err(Error::Shape(format!(
            "loadings {k}x{n}, factor covariance {}x{}, {} residual variances",
            factor_cov.nrows(),
            factor_cov.ncols(),
            residual_var.len()
        )));
    }
    let mut m = loadings.transpose() * factor_cov * loadings;
    for i in 0..n {
        m[(i, i)] += residual_var[i];
    }
    symmetrize(&mut m);
    Ok(m)
}

/// Static exact-factor covariance from an OLS fit and its factor sample.
pub fn static_factor_cov(fit: &FactorModelFit, f: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    if f.ncols() != fit.n_factors() {
        return Err(Error::Shape(format!(
            "fit has {} factors, factor matrix has {} columns",
            fit.n_factors(),
            f.ncols()
        )));
    }
    let m = factor_implied(&fit.loadings, &covariance(f), &fit.residual_variances())?;
    Ok(CovarianceEstimate::new(m, CovSpec::Static))
}

/// How far an estimate sits from the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureComparison {
    /// `sqrt(tr(Sigma'Sigma) / tr(S'S))`.
    pub eig: f64,
    /// Relative l1 distance of the entries.
    pub mag: f64,
    /// Fraction of the N^2 entries with the same (strict) sign.
    pub dir: f64,
}

pub fn compare_structure(sigma: &CovarianceEstimate, sample: &CovarianceEstimate) -> Result<StructureComparison> {
    compare_matrices(&sigma.matrix, &sample.matrix)
}

pub fn compare_matrices(sigma: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<StructureComparison> {
    if sigma.shape() != s.shape() || !sigma.is_square() {
        return Err(Error::Shape(format!(
            "cannot compare {}x{} with {}x{}",
            sigma.nrows(),
            sigma.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    let n = s.nrows();
    let ss = s.norm_squared();
    let l1: f64 = s.iter().map(|v| v.abs()).sum();
    if n == 0 || ss == 0.0 || l1 == 0.0 {
        return Err(Error::Degenerate("reference covariance is zero".into()));
    }
    let eig = (sigma.norm_squared() / ss).sqrt();
    let mag = s.iter().zip(sigma.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / l1;
    let same = s.iter().zip(sigma.iter()).filter(|(a, b)| *a * *b > 0.0).count();
    Ok(StructureComparison {
        eig,
        mag,
        dir: same as f64 / (n * n) as f64,
    })
}

/// Circular-block-bootstrap p-value for equal means of two measure series.
pub fn bootstrap_structure_pvalue(a: &[f64], b: &[f64], settings: &BootstrapSettings) -> Result<f64> {
    if settings.block_length > a.len() {
        return Err(Error::InvalidParameter(format!(
            "block length {} exceeds the series length {}",
            settings.block_length,
            a.len()
        )));
    }
    paired_bootstrap_pvalue(a, b, settings, crate::linalg::mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_cov_examples() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let s = sample_cov(&r).unwrap();
        assert_eq!(s.matrix, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        let c = sample_cov(&DMatrix::from_element(5, 3, 0.7)).unwrap();
        assert!(c.matrix.iter().all(|v| *v == 0.0));
        assert!(matches!(sample_cov(&DMatrix::zeros(1, 3)), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn static_cov_special_cases() {
        let f = DMatrix::from_fn(30, 2, |i, j| ((i * (j + 2)) as f64).cos());
        // B = I, no residuals
        let fit = ols_fit(&f, &f).unwrap();
        let s = static_factor_cov(&fit, &f).unwrap();
        assert!((s.matrix - covariance(&f)).abs().max() < 1e-12);
        // B = 0: returns unrelated to the factors by construction
        let fit = FactorModelFit {
            intercepts: DVector::zeros(2),
            loadings: DMatrix::zeros(2, 2),
            residuals: f.clone(),
            factor_means: DVector::zeros(2),
        };
        let s = static_factor_cov(&fit, &f).unwrap();
        let v = covariance(&f);
        assert_eq!(s.matrix, DMatrix::from_diagonal(&v.diagonal()));
    }

    #[test]
    fn structure_identities() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = compare_matrices(&s, &s).unwrap();
        assert_eq!((c.eig, c.mag, c.dir), (1.0, 0.0, 1.0));
        let c = compare_matrices(&(&s * 2.0), &s).unwrap();
        assert!((c.eig - 2.0).abs() < 1e-15 && (c.mag - 1.0).abs() < 1e-15 && c.dir == 1.0);
        assert_eq!(compare_matrices(&(-&s), &s).unwrap().dir, 0.0);
        assert!(compare_matrices(&s, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn bootstrap_structure_edges() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let set = BootstrapSettings {
            resamples: 200,
            ..BootstrapSettings::default()
        };
        assert_eq!(bootstrap_structure_pvalue(&a, &a, &set).unwrap(), 1.0);
        let bad = BootstrapSettings { block_length: 51, ..set };
        assert!(matches!(bootstrap_structure_pvalue(&a, &a, &bad), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn spec_labels_roundtrip() {
        for s in [CovSpec::Sample, CovSpec::Static, CovSpec::DynBeta, CovSpec::DynFactor, CovSpec::DynError] {
            assert_eq!(s.label().parse::<CovSpec>().unwrap(), s);
        }
        assert!("dyn".parse::<CovSpec>().is_err());
    }
}
