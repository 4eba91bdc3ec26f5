use nalgebra::{DMatrix, DVector};

use super::{AeTraining, FactorMethod, HyperParams};
use crate::autoenc::{train, AutoencoderParams, AutoencoderSpec};
use crate::cov::{factor_implied, ols_fit, static_factor_cov};
use crate::data::split_ranges;
use crate::dimred::{pca_fit, project, simpls_fit, spca_fit, spls_fit, FactorBasis, SparsityParams};
use crate::linalg::{covariance, fill_missing_with_means, rows_range, variance};
use crate::opt::long_only_matrix;
use crate::{Error, Result};

/// A fitted map from predictors to factors.
#[derive(Debug, Clone)]
pub(crate) enum Extractor {
    Basis(FactorBasis),
    Network(AutoencoderParams),
}

impl Extractor {
    pub(crate) fn factors(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Extractor::Basis(b) => project(x, b),
            Extractor::Network(p) => p.encode(x),
        }
    }
}

/// Settings shared by every fit inside one window.
#[derive(Debug, Clone)]
pub struct TuningContext<'a> {
    pub ae: &'a AeTraining,
    pub validation_fraction: f64,
    pub seed: u64,
}

/// Fit the extractor on `(x, r)`. Autoencoders train on `x` and stop early on
/// `monitor`, or on the final `validation_fraction` of `x` when `monitor` is
/// `None` (then training uses only the rows before it).
fn fit_extractor(
    method: FactorMethod,
    hp: &HyperParams,
    x: &DMatrix<f64>,
    r: &DMatrix<f64>,
    monitor: Option<&DMatrix<f64>>,
    ctx: &TuningContext<'_>,
    seed: u64,
) -> Result<Extractor> {
    let k = hp.k;
    let basis = match method {
        FactorMethod::Pca => pca_fit(x, k)?,
        FactorMethod::Spca => spca_fit(x, k, SparsityParams::spca(hp.lambda1, hp.lambda2))?,
        FactorMethod::Pls => simpls_fit(x, &fill_missing_with_means(r), k)?,
        FactorMethod::Spls => spls_fit(x, &fill_missing_with_means(r), k, hp.eta)?,
        FactorMethod::Aen(depth) => {
            let mut spec = AutoencoderSpec::new(x.ncols(), k, depth);
            spec.activity_l1 = hp.activity_l1;
            spec.activity_l2 = ctx.ae.activity_l2;
            spec.weight_decay = ctx.ae.weight_decay;
            spec.adam = ctx.ae.adam;
            spec.batch_size = ctx.ae.batch_size;
            spec.max_epochs = ctx.ae.max_epochs;
            spec.patience = ctx.ae.patience;
            spec.seed = seed;
            let params = match monitor {
                Some(m) => train(&spec, x, m)?,
                None => {
                    let (tr, va) = split_ranges(x.nrows(), ctx.validation_fraction)?;
                    train(&spec, &rows_range(x, tr), &rows_range(x, va))?
                }
            };
            return Ok(Extractor::Network(params));
        }
        other => {
            return Err(Error::Config(format!("{other} has no latent factor extractor")));
        }
    };
    if basis.any_degenerate() {
        return Err(Error::Degenerate(format!("{method} with {hp} produced an all-zero component")));
    }
    Ok(Extractor::Basis(basis))
}

fn derive_seed(base: u64, point: usize, stage: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((point as u64) << 8)
        .wrapping_add(stage)
}

/// Outcome of validating a grid.
#[derive(Debug, Clone)]
pub struct Selection {
    pub chosen: HyperParams,
    /// Validation loss (portfolio variance) or failure message per grid point.
    pub losses: Vec<(HyperParams, std::result::Result<f64, String>)>,
}

/// Choose hyperparameters by the validation portfolio variance.
///
/// `r` is the window's T x N return block (NaN for missing) and `x` the
/// matching predictors without missing cells. For every grid point the
/// long-only weights solved on the training covariance are scored with the
/// validation covariance, whose factor part comes from a refit on the
/// validation block and whose residuals come from the training parameters.
/// `points` must be ordered by preference; the first minimiser wins.
pub fn validate_select(
    r: &DMatrix<f64>,
    x: &DMatrix<f64>,
    method: FactorMethod,
    points: &[HyperParams],
    ctx: &TuningContext<'_>,
) -> Result<Selection> {
    if points.is_empty() {
        return Err(Error::Config(format!("empty hyperparameter grid for {method}")));
    }
    if r.nrows() != x.nrows() {
        return Err(Error::Shape(format!("{} return rows vs {} predictor rows", r.nrows(), x.nrows())));
    }
    let (tr, va) = split_ranges(r.nrows(), ctx.validation_fraction)?;
    let (r_t, r_v) = (rows_range(r, tr.clone()), rows_range(r, va.clone()));
    let (x_t, x_v) = (rows_range(x, tr), rows_range(x, va));

    let mut losses = Vec::with_capacity(points.len());
    for (i, hp) in points.iter().enumerate() {
        let score = (|| -> Result<f64> {
            let needed = hp.k + 2;
            for block in [&r_t, &r_v] {
                if block.nrows() < needed {
                    return Err(Error::InsufficientData {
                        needed,
                        got: block.nrows(),
                    });
                }
            }
            let ext_t = fit_extractor(method, hp, &x_t, &r_t, Some(&x_v), ctx, derive_seed(ctx.seed, i, 1))?;
            let f_tt = ext_t.factors(&x_t)?;
            let fit_t = ols_fit(&r_t, &f_tt)?;
            let w = long_only_matrix(&static_factor_cov(&fit_t, &f_tt)?.matrix)?.weights;

            let ext_v = fit_extractor(method, hp, &x_v, &r_v, None, ctx, derive_seed(ctx.seed, i, 2))?;
            let f_vv = ext_v.factors(&x_v)?;
            let fit_v = ols_fit(&r_v, &f_vv)?;
            let u = fit_t.residuals_for(&r_v, &ext_t.factors(&x_v)?)?;
            let resid = DVector::from_iterator(u.ncols(), u.column_iter().map(|c| variance(c.iter().copied())));
            let sigma_v = factor_implied(&fit_v.loadings, &covariance(&f_vv), &resid)?;
            let loss = (w.transpose() * &sigma_v * &w)[(0, 0)];
            if !loss.is_finite() {
                return Err(Error::NonFinite("validation loss".into()));
            }
            Ok(loss)
        })();
        losses.push((*hp, score.map_err(|e| e.to_string())));
    }

    let best = losses
        .iter()
        .filter_map(|(hp, l)| l.as_ref().ok().map(|l| (hp, *l)))
        .fold(None::<(HyperParams, f64)>, |acc, (hp, l)| match acc {
            Some((_, b)) if l >= b => acc,
            _ => Some((*hp, l)),
        });
    match best {
        Some((chosen, _)) => Ok(Selection { chosen, losses }),
        None => Err(Error::Tuning(
            losses
                .iter()
                .map(|(hp, l)| format!("{hp}: {}", l.as_ref().err().map(String::as_str).unwrap_or("")))
                .collect(),
        )),
    }
}

/// Refit the extractor on the whole window and return its factors (T x K).
/// Autoencoders stop early on the window's validation block.
pub fn fit_factors(
    r: &DMatrix<f64>,
    x: &DMatrix<f64>,
    method: FactorMethod,
    hp: &HyperParams,
    ctx: &TuningContext<'_>,
) -> Result<DMatrix<f64>> {
    let (_, va) = split_ranges(x.nrows(), ctx.validation_fraction)?;
    let monitor = rows_range(x, va);
    let ext = fit_extractor(method, hp, x, r, Some(&monitor), ctx, derive_seed(ctx.seed, usize::MAX >> 8, 3))?;
    ext.factors(x)
}
