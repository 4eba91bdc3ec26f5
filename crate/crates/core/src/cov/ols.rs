use nalgebra::{DMatrix, DVector};

use crate::linalg::column_means;
use crate::{Error, Result};

/// Time-invariant factor model `r_t = a + B' f_t + u_t` fitted asset by asset.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelFit {
    /// N intercepts.
    pub intercepts: DVector<f64>,
    /// K x N loadings; column i holds asset i's betas.
    pub loadings: DMatrix<f64>,
    /// T x N residuals; missing where the return was missing.
    pub residuals: DMatrix<f64>,
    /// K factor means over the estimation sample.
    pub factor_means: DVector<f64>,
}

impl FactorModelFit {
    pub fn n_assets(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn n_factors(&self) -> usize {
        self.loadings.nrows()
    }

    /// Residual variances (divisor T-1) over the present observations.
    pub fn residual_variances(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_assets(),
            self.residuals
                .column_iter()
                .map(|c| crate::linalg::variance(c.iter().copied())),
        )
    }

    /// Apply the fitted intercepts and loadings to new data: `u = r - a - F B`.
    pub fn residuals_for(&self, r: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if r.ncols() != self.n_assets() || f.ncols() != self.n_factors() || r.nrows() != f.nrows() {
            return Err(Error::Shape(format!(
                "returns {}x{} and factors {}x{} do not match a fit with N={} K={}",
                r.nrows(),
                r.ncols(),
                f.nrows(),
                f.ncols(),
                self.n_assets(),
                self.n_factors()
            )));
        }
        let mut u = r - f * &self.loadings;
        for (j, mut col) in u.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.intercepts[j]);
        }
        Ok(u)
    }
}

/// Relative singular-value threshold below which the design is collinear.
const COLLINEAR_TOL: f64 = 1e-10;

/// Least-squares coefficients `[a; b]` of `y` on `[1, F]` via a thin SVD.
struct Design {
    svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Design {
    fn new(f: &DMatrix<f64>) -> Result<Self> {
        let t = f.nrows();
        let k = f.ncols();
        let mut z = DMatrix::from_element(t, k + 1, 1.0);
        z.columns_mut(1, k).copy_from(f);
        let svd = z.svd(true, true);
        let max = svd.singular_values.max();
        let min = svd.singular_values.min();
        if !(max > 0.0) || min <= COLLINEAR_TOL * max {
            return Err(Error::Collinear(format!(
                "factor design with {k} columns has condition number {:.3e}",
                max / min
            )));
        }
        Ok(Self { svd })
    }

    fn solve(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.svd.solve(y, 0.0).expect("U and V were computed")
    }
}

/// Per-asset OLS with intercept of `r` (T x N, missing as NaN) on `f` (T x K).
///
/// Assets with missing returns are fitted on their present rows only.
pub fn ols_fit(r: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<FactorModelFit> {
    let (t, n) = r.shape();
    let k = f.ncols();
    if f.nrows() != t {
        return Err(Error::Shape(format!("returns have {t} rows, factors have {}", f.nrows())));
    }
    if t < k + 2 {
        return Err(Error::InsufficientData { needed: k + 2, got: t });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("factor matrix".into()));
    }
    if r.iter().any(|v| v.is_infinite()) {
        return Err(Error::NonFinite("return matrix".into()));
    }

    let factor_means = column_means(f);
    let mut intercepts = DVector::zeros(n);
    let mut loadings = DMatrix::zeros(k, n);
    let mut residuals = DMatrix::from_element(t, n, f64::NAN);

    let complete: Vec<usize> = (0..n).filter(|&j| r.column(j).iter().all(|v| !v.is_nan())).collect();
    if !complete.is_empty() {
        let design = Design::new(f)?;
        let y = crate::linalg::select_columns(r, &complete);
        let coef = design.solve(&y);
        for (c, &j) in complete.iter().enumerate() {
            intercepts[j] = coef[(0, c)];
            loadings.column_mut(j).copy_from(&coef.view((1, c), (k, 1)));
        }
    }
    for j in 0..n {
        if complete.contains(&j) {
            continue;
        }
        let rows: Vec<usize> = (0..t).filter(|&i| !r[(i, j)].is_nan()).collect();
        if rows.len() < k + 2 {
            return Err(Error::InsufficientData {
                needed: k + 2,
                got: rows.len(),
            });
        }
        let design = Design::new(&crate::linalg::select_rows(f, &rows))?;
        let y = DMatrix::from_iterator(rows.len(), 1, rows.iter().map(|&i| r[(i, j)]));
        let coef = design.solve(&y);
        intercepts[j] = coef[(0, 0)];
        loadings.column_mut(j).copy_from(&coef.view((1, 0), (k, 1)));
    }
    let fitted = f * &loadings;
    for j in 0..n {
        for i in 0..t {
            if !r[(i, j)].is_nan() {
                residuals[(i, j)] = r[(i, j)] - intercepts[j] - fitted[(i, j)];
            }
        }
    }
    Ok(FactorModelFit {
        intercepts,
        loadings,
        residuals,
        factor_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(t: usize, n: usize, seed: f64) -> DMatrix<f64> {
        DMatrix::from_fn(t, n, |i, j| ((i as f64 + 1.0) * (j as f64 + seed)).sin() * 0.05)
    }

    #[test]
    fn factors_equal_returns_give_identity_loadings() {
        let r = wave(30, 3, 1.3);
        let fit = ols_fit(&r, &r).unwrap();
        assert!((fit.loadings.clone() - DMatrix::identity(3, 3)).abs().max() < 1e-10);
        assert!(fit.residuals.abs().max() < 1e-12);
    }

    #[test]
    fn no_factors_leaves_demeaned_returns() {
        let r = wave(20, 2, 0.7);
        let fit = ols_fit(&r, &DMatrix::zeros(20, 0)).unwrap();
        let means = column_means(&r);
        assert!((fit.intercepts.clone() - &means).abs().max() < 1e-14);
        for j in 0..2 {
            for i in 0..20 {
                assert!((fit.residuals[(i, j)] - (r[(i, j)] - means[j])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exact_single_factor() {
        let f = wave(40, 1, 2.1);
        let r = &f * 2.0;
        let fit = ols_fit(&r, &f).unwrap();
        assert!((fit.loadings[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(fit.residuals.norm() <= 1e-12);
        // residuals have zero mean with an intercept
        let g = wave(40, 2, 0.4);
        let fit = ols_fit(&g, &f).unwrap();
        assert!(column_means(&fit.residuals).abs().max() < 1e-10);
    }

    #[test]
    fn collinear_and_short_inputs_rejected() {
        let f = wave(30, 1, 1.0);
        let mut ff = DMatrix::zeros(30, 2);
        ff.set_column(0, &f.column(0));
        ff.set_column(1, &(f.column(0) * 3.0));
        assert!(matches!(ols_fit(&wave(30, 2, 0.2), &ff), Err(Error::Collinear(_))));
        assert!(matches!(ols_fit(&wave(2, 2, 0.2), &wave(2, 1, 0.1)), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn missing_rows_are_dropped_per_asset() {
        let f = wave(30, 1, 1.7);
        let mut r = &f * 1.5;
        r[(3, 0)] = f64::NAN;
        let fit = ols_fit(&r, &f).unwrap();
        assert!((fit.loadings[(0, 0)] - 1.5).abs() < 1e-12);
        assert!(fit.residuals[(3, 0)].is_nan());
        let u = fit.residuals_for(&(&f * 1.5), &f).unwrap();
        assert!(u.abs().max() < 1e-12);
    }
}
