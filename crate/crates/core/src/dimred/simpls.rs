use nalgebra::{DMatrix, DVector, SVD};

use super::{check_input, DimRedMethod, FactorBasis, SparsityParams};
use crate::linalg::{center_columns, column_means, fix_column_signs};
use crate::{Error, Result};

/// Dominant left singular vector of `s`, i.e. the leading eigenvector of `s s'`.
fn dominant_direction(s: &DMatrix<f64>) -> DVector<f64> {
    let svd = SVD::new(s.clone(), true, false);
    let u = svd.u.expect("requested U");
    let best = (0..svd.singular_values.len())
        .max_by(|&a, &b| {
            svd.singular_values[a]
                .total_cmp(&svd.singular_values[b])
                .then(b.cmp(&a))
        })
        .unwrap_or(0);
    let mut z = u.column(best).into_owned();
    // deterministic orientation before thresholding
    let imax = z.iamax();
    if z[imax] < 0.0 {
        z.neg_mut();
    }
    z
}

fn soft_threshold_fraction(z: &DVector<f64>, eta: f64) -> DVector<f64> {
    let cut = eta * z.amax();
    z.map(|v| v.signum() * (v.abs() - cut).max(0.0))
}

/// Shared SIMPLS loop. With `eta = None` this is de Jong's SIMPLS; with a
/// threshold each direction is soft-thresholded before the scores and the
/// loading-space deflation are computed.
fn simpls_core(x: &DMatrix<f64>, r: &DMatrix<f64>, k: usize, eta: Option<f64>) -> Result<FactorBasis> {
    check_input(x, "predictor matrix")?;
    if r.nrows() != x.nrows() {
        return Err(Error::Shape(format!(
            "predictors have {} rows, responses {}",
            x.nrows(),
            r.nrows()
        )));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response matrix contains missing or non-finite values".into()));
    }
    let p = x.ncols();
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!("K = {k} must lie in 1..={p}")));
    }
    let means = column_means(x);
    let xc = center_columns(x, &means);
    let rc = center_columns(r, &column_means(r));

    let mut s = xc.transpose() * &rc;
    let s_norm0 = s.norm();
    if s_norm0 <= f64::EPSILON * (xc.norm() * rc.norm()).max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("cross-covariance between predictors and responses is zero".into()));
    }

    let mut weights = DMatrix::zeros(p, k);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    for comp in 0..k {
        if s.norm() <= 1e-12 * s_norm0 {
            return Err(Error::Degenerate(format!(
                "cross-product matrix exhausted after {comp} components"
            )));
        }
        let z = dominant_direction(&s);
        let dir = match eta {
            None => z,
            Some(eta) => {
                let c = soft_threshold_fraction(&z, eta);
                if c.iter().all(|v| *v == 0.0) {
                    return Err(Error::Degenerate("soft threshold removed every weight".into()));
                }
                c
            }
        };
        let w = &dir / dir.norm();
        let mut t = &xc * &w;
        let t_norm = t.norm();
        if t_norm <= 1e-12 * xc.norm() {
            return Err(Error::Degenerate(format!("component {} has zero score variance", comp + 1)));
        }
        t /= t_norm;
        let loading = xc.transpose() * &t;
        let mut v = loading.clone();
        // Gram-Schmidt twice for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let v_norm = v.norm();
        if v_norm <= 1e-14 * loading.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::Degenerate(format!("loading of component {} is dependent", comp + 1)));
        }
        v /= v_norm;
        let vs = v.transpose() * &s;
        s -= &v * vs;
        basis.push(v);
        weights.set_column(comp, &w);
    }
    fix_column_signs(&mut weights);
    let method = if eta.is_some() {
        DimRedMethod::Spls
    } else {
        DimRedMethod::Simpls
    };
    Ok(FactorBasis {
        method,
        weights,
        means,
        params: SparsityParams::spls(eta.unwrap_or(0.0)),
        degenerate: vec![false; k],
    })
}

/// SIMPLS weight vectors (unit norm) for predictors `x` and responses `r`.
pub fn simpls_fit(x: &DMatrix<f64>, r: &DMatrix<f64>, k: usize) -> Result<FactorBasis> {
    simpls_core(x, r, k, None)
}

/// Sparse PLS with the soft-threshold estimator `c_j = sign(z_j)(|z_j| - eta max|z|)_+`.
pub fn spls_fit(x: &DMatrix<f64>, r: &DMatrix<f64>, k: usize, eta: f64) -> Result<FactorBasis> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta = {eta} must lie in [0, 1)")));
    }
    simpls_core(x, r, k, Some(eta))
}
