use nalgebra::{DMatrix, DVector};

use super::regression::scale_to_100;
use crate::data::split_ranges;
use crate::{Error, Result};

const TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 100_000;

/// Lasso coefficients on the original scale of the regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub intercept: f64,
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * &self.coefficients + DVector::from_element(x.nrows(), self.intercept)
    }

    pub fn support(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }
}

struct Standardized {
    z: DMatrix<f64>,
    yc: DVector<f64>,
    x_mean: DVector<f64>,
    x_sd: DVector<f64>,
    y_mean: f64,
}

/// Centre `y`, and centre and scale each column of `x` to unit variance
/// (divisor T). Constant columns are left at zero.
fn standardize(y: &DVector<f64>, x: &DMatrix<f64>) -> Standardized {
    let t = x.nrows() as f64;
    let x_mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / t));
    let x_sd = DVector::from_iterator(
        x.ncols(),
        x.column_iter()
            .zip(x_mean.iter())
            .map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t).sqrt()),
    );
    let z = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        if x_sd[j] > 0.0 {
            (x[(i, j)] - x_mean[j]) / x_sd[j]
        } else {
            0.0
        }
    });
    let y_mean = y.mean();
    Standardized {
        z,
        yc: y.add_scalar(-y_mean),
        x_mean,
        x_sd,
        y_mean,
    }
}

/// Smallest penalty at which every coefficient is zero: `max_j |z_j'y| / T`
/// on the standardized design.
pub fn lambda_max(y: &DVector<f64>, x: &DMatrix<f64>) -> f64 {
    let s = standardize(y, x);
    (s.z.transpose() * &s.yc).amax() / x.nrows() as f64
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Minimise `(1/2T) ||y - b0 - X b||^2 + lambda ||b||_1` over the
/// standardized regressors by cyclic coordinate descent, stopping when no
/// coefficient moves by more than 1e-7.
pub fn lasso_fit(y: &DVector<f64>, x: &DMatrix<f64>, lambda: f64) -> Result<LassoFit> {
    if y.len() != x.nrows() {
        return Err(Error::Shape(format!("{} observations vs {} regressor rows", y.len(), x.nrows())));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lasso penalty {lambda}")));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso input".into()));
    }
    let s = standardize(y, x);
    let (t, p) = (x.nrows() as f64, x.ncols());
    if p == 0 || lambda >= (s.z.transpose() * &s.yc).amax() / t {
        return Ok(LassoFit {
            intercept: s.y_mean,
            coefficients: DVector::zeros(p),
            lambda,
            sweeps: 0,
        });
    }
    let active: Vec<bool> = s.x_sd.iter().map(|sd| *sd > 0.0).collect();
    let mut b: DVector<f64> = DVector::zeros(p);
    let mut resid = s.yc.clone();
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in (0..p).filter(|&j| active[j]) {
            let zj = s.z.column(j);
            let rho = zj.dot(&resid) / t + b[j];
            let new = soft_threshold(rho, lambda);
            let delta = new - b[j];
            if delta != 0.0 {
                resid.axpy(-delta, &zj, 1.0);
                b[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < TOL {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::Fit(format!("lasso did not converge in {MAX_SWEEPS} sweeps")));
        }
    }
    let coefficients = DVector::from_fn(p, |j, _| if active[j] { b[j] / s.x_sd[j] } else { 0.0 });
    let intercept = s.y_mean - coefficients.dot(&s.x_mean);
    Ok(LassoFit {
        intercept,
        coefficients,
        lambda,
        sweeps,
    })
}

/// Lasso fit with the penalty chosen on a held-out block, plus per-variable
/// importance.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoImportance {
    pub fit: LassoFit,
    /// `(lambda, validation MSE)` along the searched path.
    pub path: Vec<(f64, f64)>,
    /// R² lost by zeroing each regressor in the fitted prediction, scaled to 100.
    pub importance: Vec<f64>,
}

fn r2(y: &DVector<f64>, pred: &DVector<f64>) -> f64 {
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    1.0 - (y - pred).norm_squared() / sst
}

/// Choose lambda from `n_lambda` log-spaced values between `lambda_max` and
/// `lambda_max * 1e-4` (plus zero) by fitting on the first
/// `1 - validation_fraction` of the rows and scoring MSE on the rest; refit
/// on all rows and score each regressor by the drop in R² when its column is
/// zeroed in the prediction.
pub fn lasso_importance(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    validation_fraction: f64,
    n_lambda: usize,
) -> Result<LassoImportance> {
    let (tr, va) = split_ranges(y.len(), validation_fraction)?;
    let (y_t, x_t) = (y.rows_range(tr.clone()).into_owned(), x.rows_range(tr).into_owned());
    let (y_v, x_v) = (y.rows_range(va.clone()).into_owned(), x.rows_range(va).into_owned());
    let top = lambda_max(&y_t, &x_t);
    let mut grid: Vec<f64> = (0..n_lambda.max(1))
        .map(|i| top * 10f64.powf(-4.0 * i as f64 / (n_lambda.max(2) - 1) as f64))
        .collect();
    grid.push(0.0);

    let mut path = Vec::with_capacity(grid.len());
    let mut best = (f64::INFINITY, 0.0);
    for &lambda in &grid {
        let fit = lasso_fit(&y_t, &x_t, lambda)?;
        let mse = (&y_v - fit.predict(&x_v)).norm_squared() / y_v.len() as f64;
        path.push((lambda, mse));
        // ties go to the larger penalty, which comes first
        if mse < best.0 {
            best = (mse, lambda);
        }
    }
    let fit = lasso_fit(y, x, best.1)?;
    let full = r2(y, &fit.predict(x));
    let raw: Vec<f64> = (0..x.ncols())
        .map(|j| {
            let mut xz = x.clone();
            xz.column_mut(j).fill(0.0);
            full - r2(y, &fit.predict(&xz))
        })
        .collect();
    Ok(LassoImportance {
        fit,
        path,
        importance: scale_to_100(&raw),
    })
}
