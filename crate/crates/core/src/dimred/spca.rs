use nalgebra::{DMatrix, DVector, SVD};

use super::enet::{elastic_net_gram, ElasticNetOptions};
use super::pca::principal_axes;
use super::{check_input, DimRedMethod, FactorBasis, SparsityParams};
use crate::linalg::{center_columns, column_means, fix_column_signs};
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const RELATIVE_TOLERANCE: f64 = 1e-6;

/// Objective values recorded after every half-step of the alternating scheme.
#[derive(Debug, Clone, Default)]
pub struct SpcaTrace {
    pub objectives: Vec<f64>,
    pub iterations: usize,
}

fn objective(gram: &DMatrix<f64>, total: f64, a: &DMatrix<f64>, c: &DMatrix<f64>, params: &SparsityParams) -> f64 {
    // |X - X C A'|^2 = tr(G) - 2 tr(A'GC) + tr(C'GC) when A'A = I
    let gc = gram * c;
    let cross = (a.transpose() * &gc).trace();
    let quad = (c.transpose() * &gc).trace();
    total - 2.0 * cross + quad + params.lambda2 * c.norm_squared() + params.lambda1 * c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Sparse principal components by alternating elastic-net regressions (for the
/// sparse weights `C`) and an orthogonal Procrustes step (for `A`).
pub fn spca_fit(x: &DMatrix<f64>, k: usize, params: SparsityParams) -> Result<FactorBasis> {
    spca_fit_traced(x, k, params).map(|(b, _)| b)
}

pub fn spca_fit_traced(x: &DMatrix<f64>, k: usize, params: SparsityParams) -> Result<(FactorBasis, SpcaTrace)> {
    check_input(x, "predictor matrix")?;
    let (t, p) = x.shape();
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!("K = {k} must lie in 1..={p}")));
    }
    if params.lambda1 < 0.0 || params.lambda2 < 0.0 {
        return Err(Error::InvalidParameter("sparsity penalties must be non-negative".into()));
    }
    if p > t && params.lambda2 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lambda2 must be positive when p ({p}) exceeds T ({t})"
        )));
    }
    let means = column_means(x);
    let xc = center_columns(x, &means);
    let gram = xc.transpose() * &xc;
    let total = gram.trace();

    let (_, axes) = principal_axes(&xc);
    let mut a = DMatrix::zeros(p, k);
    for j in 0..k.min(axes.ncols()) {
        a.set_column(j, &axes.column(j));
    }
    let mut c = a.clone();
    let opts = ElasticNetOptions::default();
    let mut trace = SpcaTrace::default();
    let mut previous = objective(&gram, total, &a, &c, &params);
    trace.objectives.push(previous);

    for it in 0..MAX_ITERATIONS {
        trace.iterations = it + 1;
        for j in 0..k {
            let b: DVector<f64> = &gram * a.column(j);
            let init = c.column(j).into_owned();
            let (cj, _) = elastic_net_gram(&gram, &b, params.lambda1, params.lambda2, &init, &opts);
            c.set_column(j, &cj);
        }
        trace.objectives.push(objective(&gram, total, &a, &c, &params));
        if c.iter().all(|v| *v == 0.0) {
            break;
        }

        let m = &gram * &c;
        let svd = SVD::new(m, true, true);
        let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
        a = u * v_t;
        let current = objective(&gram, total, &a, &c, &params);
        trace.objectives.push(current);
        let scale = previous.abs().max(f64::MIN_POSITIVE);
        if (previous - current).abs() <= RELATIVE_TOLERANCE * scale {
            break;
        }
        previous = current;
    }

    let mut weights = c;
    let mut degenerate = vec![false; k];
    for (j, mut col) in weights.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            degenerate[j] = true;
        } else {
            col /= norm;
        }
    }
    fix_column_signs(&mut weights);
    Ok((
        FactorBasis {
            method: DimRedMethod::Spca,
            weights,
            means,
            params,
            degenerate,
        },
        trace,
    ))
}
