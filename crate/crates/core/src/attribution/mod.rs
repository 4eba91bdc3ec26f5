//! Explaining latent factors with observed proxies, and volatility regimes.

mod lasso;
mod regime;
mod regression;

pub use lasso::{lambda_max, lasso_fit, lasso_importance, LassoFit, LassoImportance};
pub use regime::{markov_switching_fit, median_split, RegimeOptions, RegimePath};
pub use regression::{
    group_importance, load_grouping, ols_nw, read_grouping, variable_importance_zero, RegressionReport,
};

use nalgebra::{DMatrix, DVector};

use crate::Result;

/// Regress every latent factor (column of `factors`) on the proxies.
pub fn explain_factors(factors: &DMatrix<f64>, proxies: &DMatrix<f64>, lags: usize) -> Result<Vec<RegressionReport>> {
    factors
        .column_iter()
        .map(|f| ols_nw(&DVector::from_column_slice(f.as_slice()), proxies, lags))
        .collect()
}
