use nalgebra::{DMatrix, DVector};

use super::dcc::{dcc_fit_with, dcc_from_marginals, DccFit, DccOptions};
use super::garch::{garch11_fit_with, Garch11Fit};
use super::ols::{ols_fit, FactorModelFit};
use super::{factor_implied, CovSpec, CovarianceEstimate};
use crate::linalg::covariance;
use crate::{Error, Result};

const RIDGE: f64 = 1e-8;

/// Conditional betas and intercepts of one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicBetas {
    /// T x K betas.
    pub betas: DMatrix<f64>,
    /// T intercepts `rbar - beta_t' fbar`.
    pub intercepts: Vec<f64>,
    pub boundary: bool,
}

/// Solve `H_ff beta = h_fr` for the joint conditional covariance `h` of
/// `(f_1..f_K, r)`, falling back to a small ridge when `H_ff` is singular.
fn conditional_beta(h: &DMatrix<f64>, k: usize) -> DVector<f64> {
    let hff = h.view((0, 0), (k, k)).into_owned();
    let hfr = h.view((0, k), (k, 1)).column(0).into_owned();
    if let Some(ch) = hff.clone().cholesky() {
        return ch.solve(&hfr);
    }
    log::warn!("singular conditional factor covariance; using a ridge of {RIDGE:e}");
    let ridged = hff + DMatrix::identity(k, k) * RIDGE;
    match ridged.clone().cholesky() {
        Some(ch) => ch.solve(&hfr),
        None => ridged.pseudo_inverse(1e-14).expect("non-negative eps") * hfr,
    }
}

pub fn dynamic_betas(r: &[f64], f: &DMatrix<f64>, opts: &DccOptions) -> Result<DynamicBetas> {
    dynamic_betas_with(r, f, None, opts)
}

/// Betas from a joint DCC on `(F, r)`. Factor marginals may be supplied to
/// avoid refitting them for every asset.
pub fn dynamic_betas_with(
    r: &[f64],
    f: &DMatrix<f64>,
    factor_marginals: Option<&[Garch11Fit]>,
    opts: &DccOptions,
) -> Result<DynamicBetas> {
    let (t, k) = f.shape();
    if r.len() != t {
        return Err(Error::Shape(format!("return series has {} dates, factors {t}", r.len())));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("dynamic betas need at least one factor".into()));
    }
    let mut joint = DMatrix::zeros(t, k + 1);
    joint.columns_mut(0, k).copy_from(f);
    joint.set_column(k, &DVector::from_column_slice(r));
    let dcc: DccFit = match factor_marginals {
        Some(m) => {
            if m.len() != k {
                return Err(Error::Shape(format!("{} factor marginals for {k} factors", m.len())));
            }
            let mut marginals = m.to_vec();
            marginals.push(garch11_fit_with(r, &opts.garch)?);
            dcc_from_marginals(&joint, marginals, opts)?
        }
        None => dcc_fit_with(&joint, opts)?,
    };
    let rbar = r.iter().sum::<f64>() / t as f64;
    let fbar: Vec<f64> = f.column_iter().map(|c| c.mean()).collect();
    let mut betas = DMatrix::zeros(t, k);
    let mut intercepts = Vec::with_capacity(t);
    for (s, h) in dcc.covariances.iter().enumerate() {
        let b = conditional_beta(h, k);
        intercepts.push(rbar - b.iter().zip(&fbar).map(|(x, y)| x * y).sum::<f64>());
        betas.set_row(s, &b.transpose());
    }
    Ok(DynamicBetas {
        betas,
        intercepts,
        boundary: dcc.boundary,
    })
}

/// Ingredients of a factor-implied covariance. Static pieces come from the
/// OLS fit; exactly one time-varying piece is needed per dynamic spec.
#[derive(Debug, Clone, Default)]
pub struct CovIngredients {
    /// K x N static loadings.
    pub loadings: Option<DMatrix<f64>>,
    /// K x K static factor covariance.
    pub factor_cov: Option<DMatrix<f64>>,
    /// N static residual variances.
    pub residual_var: Option<DVector<f64>>,
    /// Per-date K x N loadings.
    pub loadings_path: Option<Vec<DMatrix<f64>>>,
    /// Per-date K x K factor covariances.
    pub factor_cov_path: Option<Vec<DMatrix<f64>>>,
    /// T x N conditional residual variances.
    pub residual_var_path: Option<DMatrix<f64>>,
}

impl CovIngredients {
    /// Static pieces from an OLS fit and the factor sample.
    pub fn from_fit(fit: &FactorModelFit, f: &DMatrix<f64>) -> Self {
        Self {
            loadings: Some(fit.loadings.clone()),
            factor_cov: Some(covariance(f)),
            residual_var: Some(fit.residual_variances()),
            ..Self::default()
        }
    }
}

fn need<'a, T>(x: &'a Option<T>, what: &str) -> Result<&'a T> {
    x.as_ref().ok_or_else(|| Error::Assembly(format!("missing {what}")))
}

fn at<'a, T>(path: &'a [T], t: usize, what: &str) -> Result<&'a T> {
    path.get(t)
        .ok_or_else(|| Error::Assembly(format!("{what} has {} dates, requested index {t}", path.len())))
}

/// Combine the ingredients into `Sigma_t` for the requested spec at date index `t`.
pub fn assemble_dynamic(spec: CovSpec, ing: &CovIngredients, t: usize) -> Result<CovarianceEstimate> {
    let matrix = match spec {
        CovSpec::Sample => {
            return Err(Error::Assembly("the sample covariance is not factor-implied".into()));
        }
        CovSpec::Static => factor_implied(
            need(&ing.loadings, "loadings")?,
            need(&ing.factor_cov, "factor covariance")?,
            need(&ing.residual_var, "residual variances")?,
        )?,
        CovSpec::DynBeta => {
            let path = need(&ing.loadings_path, "loadings path")?;
            factor_implied(
                at(path, t, "loadings path")?,
                need(&ing.factor_cov, "factor covariance")?,
                need(&ing.residual_var, "residual variances")?,
            )?
        }
        CovSpec::DynFactor => {
            let path = need(&ing.factor_cov_path, "factor covariance path")?;
            factor_implied(
                need(&ing.loadings, "loadings")?,
                at(path, t, "factor covariance path")?,
                need(&ing.residual_var, "residual variances")?,
            )?
        }
        CovSpec::DynError => {
            let path = need(&ing.residual_var_path, "residual variance path")?;
            if t >= path.nrows() {
                return Err(Error::Assembly(format!(
                    "residual variance path has {} dates, requested index {t}",
                    path.nrows()
                )));
            }
            factor_implied(
                need(&ing.loadings, "loadings")?,
                need(&ing.factor_cov, "factor covariance")?,
                &path.row(t).transpose(),
            )?
        }
    };
    Ok(CovarianceEstimate::new(matrix, spec))
}

/// Settings for the volatility models used by the dynamic specs.
#[derive(Debug, Clone, Default)]
pub struct DynamicOptions {
    pub dcc: DccOptions,
}

/// Factor-implied covariance of `r` (T x N, NaN for missing) given factors
/// `f` (T x K), evaluated at the final in-window date.
///
/// Missing returns are replaced by their fitted values (zero residual) before
/// the volatility models see them.
pub fn factor_covariance(
    spec: CovSpec,
    r: &DMatrix<f64>,
    f: &DMatrix<f64>,
    opts: &DynamicOptions,
) -> Result<CovarianceEstimate> {
    if spec == CovSpec::Sample {
        return super::sample_cov(r);
    }
    let fit = ols_fit(r, f)?;
    let mut ing = CovIngredients::from_fit(&fit, f);
    let (t, n) = r.shape();
    let k = f.ncols();
    let last = t - 1;
    match spec {
        CovSpec::Sample | CovSpec::Static => {}
        CovSpec::DynError => {
            let mut path = DMatrix::zeros(t, n);
            for j in 0..n {
                let u: Vec<f64> = fit
                    .residuals
                    .column(j)
                    .iter()
                    .map(|v| if v.is_nan() { 0.0 } else { *v })
                    .collect();
                match garch11_fit_with(&u, &opts.dcc.garch) {
                    Ok(g) => path.set_column(j, &DVector::from_vec(g.variances)),
                    // a numerically constant residual keeps its static variance
                    Err(Error::Degenerate(_)) => path.column_mut(j).fill(crate::linalg::variance(u.iter().copied())),
                    Err(e) => return Err(e),
                }
            }
            ing.residual_var_path = Some(path);
        }
        CovSpec::DynFactor => {
            let path = if k == 1 {
                let col: Vec<f64> = f.column(0).iter().copied().collect();
                let g = garch11_fit_with(&col, &opts.dcc.garch)?;
                g.variances.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect()
            } else {
                dcc_fit_with(f, &opts.dcc)?.covariances
            };
            ing.factor_cov_path = Some(path);
        }
        CovSpec::DynBeta => {
            let marginals: Vec<Garch11Fit> = f
                .column_iter()
                .map(|c| garch11_fit_with(&c.iter().copied().collect::<Vec<_>>(), &opts.dcc.garch))
                .collect::<Result<_>>()?;
            let fitted = f * &fit.loadings;
            let mut path = vec![DMatrix::zeros(k, n); t];
            for j in 0..n {
                let rj: Vec<f64> = (0..t)
                    .map(|i| {
                        let v = r[(i, j)];
                        if v.is_nan() {
                            fit.intercepts[j] + fitted[(i, j)]
                        } else {
                            v
                        }
                    })
                    .collect();
                let db = dynamic_betas_with(&rj, f, Some(&marginals), &opts.dcc)?;
                for (s, b) in path.iter_mut().enumerate() {
                    b.set_column(j, &db.betas.row(s).transpose());
                }
            }
            ing.loadings_path = Some(path);
        }
    }
    assemble_dynamic(spec, &ing, last)
}
