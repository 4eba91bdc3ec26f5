use nalgebra::{DMatrix, SVD};

use super::{check_input, DimRedMethod, FactorBasis, SparsityParams};
use crate::linalg::{center_columns, column_means, fix_column_signs};
use crate::{Error, Result};

/// Right singular vectors of the column-centred data, sorted by singular value.
pub(crate) fn principal_axes(xc: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (t, p) = xc.shape();
    // Thin SVD of the taller orientation; V of X is U of X' when p > T.
    let (sv, vecs) = if t >= p {
        let svd = SVD::new(xc.clone(), false, true);
        let v = svd.v_t.expect("requested V^T").transpose();
        (svd.singular_values, v)
    } else {
        let svd = SVD::new(xc.transpose(), true, false);
        (svd.singular_values, svd.u.expect("requested U"))
    };
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| sv[i]).collect();
    let mut axes = DMatrix::zeros(p, order.len());
    for (dst, &src) in order.iter().enumerate() {
        axes.set_column(dst, &vecs.column(src));
    }
    (values, axes)
}

pub(crate) fn numerical_rank(singular_values: &[f64], shape: (usize, usize)) -> usize {
    let max = singular_values.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    let tol = shape.0.max(shape.1) as f64 * f64::EPSILON * max;
    singular_values.iter().filter(|&&s| s > tol).count()
}

/// First `k` principal component weight vectors (orthonormal columns, largest
/// singular value first, largest-magnitude entry positive).
pub fn pca_fit(x: &DMatrix<f64>, k: usize) -> Result<FactorBasis> {
    check_input(x, "predictor matrix")?;
    let (t, p) = x.shape();
    if k == 0 || k > t.min(p) {
        return Err(Error::InvalidParameter(format!(
            "K = {k} must lie in 1..={}",
            t.min(p)
        )));
    }
    let means = column_means(x);
    let xc = center_columns(x, &means);
    let (sv, axes) = principal_axes(&xc);
    let rank = numerical_rank(&sv, xc.shape());
    if k > rank {
        return Err(Error::Rank {
            requested: k,
            attainable: rank,
        });
    }
    let mut weights = axes.columns(0, k).into_owned();
    fix_column_signs(&mut weights);
    Ok(FactorBasis {
        method: DimRedMethod::Pca,
        weights,
        means,
        params: SparsityParams::default(),
        degenerate: vec![false; k],
    })
}
