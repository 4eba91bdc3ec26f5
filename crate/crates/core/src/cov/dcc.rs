use nalgebra::DMatrix;

use super::garch::{
    check_series, garch11_fit_with, persistence_split, persistence_split_inverse, Garch11Fit, GarchOptions,
};
use crate::optimize::{nelder_mead_restarted, SimplexOptions};
use crate::{Error, Result};

/// Estimates on or near the edge of the admissible region get flagged.
const BOUNDARY_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct DccFit {
    pub marginals: Vec<Garch11Fit>,
    pub a: f64,
    pub b: f64,
    /// Mean outer product of the standardized residuals.
    pub qbar: DMatrix<f64>,
    /// Conditional correlation matrices, one per date.
    pub correlations: Vec<DMatrix<f64>>,
    /// Conditional covariance matrices `D_t R_t D_t`, one per date.
    pub covariances: Vec<DMatrix<f64>>,
    /// Correlation-stage log-likelihood (without constants).
    pub log_likelihood: f64,
    /// `(a, b)` at or near the boundary, or forced to zero by a singular `qbar`.
    pub boundary: bool,
}

impl DccFit {
    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn last_covariance(&self) -> &DMatrix<f64> {
        self.covariances.last().expect("fit has at least one date")
    }
}

#[derive(Debug, Clone)]
pub struct DccOptions {
    /// Hold `(a, b)` fixed instead of estimating them.
    pub fixed: Option<(f64, f64)>,
    pub garch: GarchOptions,
    pub starts: Vec<(f64, f64)>,
    pub simplex: SimplexOptions,
    pub restarts: usize,
}

impl Default for DccOptions {
    fn default() -> Self {
        Self {
            fixed: None,
            garch: GarchOptions::default(),
            starts: vec![(0.05, 0.90)],
            simplex: SimplexOptions::default(),
            restarts: 2,
        }
    }
}

/// In-place Cholesky of a d x d row-major matrix; returns log-determinant.
fn cholesky_in_place(m: &mut [f64], d: usize) -> Option<f64> {
    let mut logdet = 0.0;
    for j in 0..d {
        let mut s = m[j * d + j];
        for k in 0..j {
            s -= m[j * d + k] * m[j * d + k];
        }
        if !(s > 1e-14) {
            return None;
        }
        let l = s.sqrt();
        m[j * d + j] = l;
        logdet += 2.0 * l.ln();
        for i in (j + 1)..d {
            let mut s = m[i * d + j];
            for k in 0..j {
                s -= m[i * d + k] * m[j * d + k];
            }
            m[i * d + j] = s / l;
        }
    }
    Some(logdet)
}

/// Squared norm of `L^{-1} x` for a lower-triangular row-major `L`.
fn forward_quad(l: &[f64], x: &[f64], d: usize, work: &mut [f64]) -> f64 {
    let mut q = 0.0;
    for i in 0..d {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * d + k] * work[k];
        }
        work[i] = s / l[i * d + i];
        q += work[i] * work[i];
    }
    q
}

/// Row-major copy of `Q_t` normalised to a correlation matrix.
fn normalize_into(q: &[f64], d: usize, out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = q[i * d + j] / (q[i * d + i] * q[j * d + j]).sqrt();
        }
    }
}

/// Runs the correlation recursion over `eps` (row-major T x d). Returns the
/// negative correlation log-likelihood and, when requested, the `R_t` path.
fn dcc_filter(eps: &[f64], d: usize, qbar: &[f64], a: f64, b: f64, keep: bool) -> (f64, Vec<Vec<f64>>) {
    let t_len = eps.len() / d;
    let mut q = qbar.to_vec();
    let mut r = vec![0.0; d * d];
    let mut work = vec![0.0; d];
    let mut path = Vec::new();
    let mut nll = 0.0;
    let c = 1.0 - a - b;
    for t in 0..t_len {
        if t > 0 {
            let prev = &eps[(t - 1) * d..t * d];
            for i in 0..d {
                for j in 0..d {
                    q[i * d + j] = c * qbar[i * d + j] + a * prev[i] * prev[j] + b * q[i * d + j];
                }
            }
        }
        normalize_into(&q, d, &mut r);
        if keep {
            path.push(r.clone());
        }
        let x = &eps[t * d..(t + 1) * d];
        match cholesky_in_place(&mut r, d) {
            Some(logdet) => {
                let quad = forward_quad(&r, x, d, &mut work);
                let norm2: f64 = x.iter().map(|v| v * v).sum();
                nll += logdet + quad - norm2;
            }
            None => {
                if !keep {
                    return (f64::INFINITY, path);
                }
                nll = f64::INFINITY;
            }
        }
    }
    (0.5 * nll, path)
}

pub fn dcc_fit(series: &DMatrix<f64>) -> Result<DccFit> {
    dcc_fit_with(series, &DccOptions::default())
}

/// Two-step Gaussian QML: univariate GARCH(1,1) marginals, then `(a, b)` from
/// the correlation likelihood of the standardized residuals.
pub fn dcc_fit_with(series: &DMatrix<f64>, opts: &DccOptions) -> Result<DccFit> {
    let d = series.ncols();
    if d < 2 {
        return Err(Error::InvalidParameter(format!("DCC needs at least 2 series, got {d}")));
    }
    let mut marginals = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<f64> = series.column(j).iter().copied().collect();
        marginals.push(garch11_fit_with(&col, &opts.garch)?);
    }
    dcc_from_marginals(series, marginals, opts)
}

/// Correlation stage only, reusing already fitted marginals (one per column).
pub fn dcc_from_marginals(series: &DMatrix<f64>, marginals: Vec<Garch11Fit>, opts: &DccOptions) -> Result<DccFit> {
    let (t_len, d) = series.shape();
    if marginals.len() != d {
        return Err(Error::Shape(format!("{} marginals for {d} series", marginals.len())));
    }
    for j in 0..d {
        let col: Vec<f64> = series.column(j).iter().copied().collect();
        check_series(&col)?;
        if marginals[j].variances.len() != t_len {
            return Err(Error::Shape(format!(
                "marginal {j} has {} variances for {t_len} dates",
                marginals[j].variances.len()
            )));
        }
    }
    let mut eps = vec![0.0; t_len * d];
    for (j, m) in marginals.iter().enumerate() {
        for t in 0..t_len {
            eps[t * d + j] = (series[(t, j)] - m.mean) / m.variances[t].sqrt();
        }
    }
    let mut qbar = vec![0.0; d * d];
    for t in 0..t_len {
        let x = &eps[t * d..(t + 1) * d];
        for i in 0..d {
            for j in 0..d {
                qbar[i * d + j] += x[i] * x[j];
            }
        }
    }
    qbar.iter_mut().for_each(|v| *v /= t_len as f64);

    let mut rbar = vec![0.0; d * d];
    normalize_into(&qbar, d, &mut rbar);
    let singular = {
        let mut c = rbar.clone();
        cholesky_in_place(&mut c, d).is_none() || {
            let m = DMatrix::from_row_slice(d, d, &rbar);
            m.symmetric_eigenvalues().min() < 1e-10
        }
    };

    let (a, b, boundary) = if singular {
        // perfectly correlated standardized residuals: the correlation path is
        // the constant unconditional correlation
        (0.0, 0.0, true)
    } else if let Some((a, b)) = opts.fixed {
        if a < 0.0 || b < 0.0 || a + b >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "fixed DCC parameters ({a}, {b}) are not admissible"
            )));
        }
        (a, b, false)
    } else {
        let mut best: Option<(f64, f64, f64)> = None;
        for &(a0, b0) in &opts.starts {
            let (tp, ts) = persistence_split_inverse(a0, b0);
            let res = nelder_mead_restarted(
                |x| {
                    let (a, b) = persistence_split(x[0], x[1]);
                    dcc_filter(&eps, d, &qbar, a, b, false).0
                },
                &[tp, ts],
                &opts.simplex,
                opts.restarts,
            );
            let (a, b) = persistence_split(res.x[0], res.x[1]);
            if best.is_none_or(|bst| res.value < bst.2) {
                best = Some((a, b, res.value));
            }
        }
        let (a, b, value) = best.ok_or_else(|| Error::InvalidParameter("no DCC starting values".into()))?;
        if !value.is_finite() {
            return Err(Error::Fit(format!("DCC likelihood is not finite at a={a}, b={b}")));
        }
        let boundary = a < BOUNDARY_TOL || b < BOUNDARY_TOL || a + b > 1.0 - 10.0 * BOUNDARY_TOL;
        (a, b, boundary)
    };

    let (nll, path) = dcc_filter(&eps, d, &qbar, a, b, true);
    let correlations: Vec<DMatrix<f64>> = path.into_iter().map(|r| DMatrix::from_row_slice(d, d, &r)).collect();
    let covariances = correlations
        .iter()
        .enumerate()
        .map(|(t, r)| {
            let sd: Vec<f64> = marginals.iter().map(|m| m.variances[t].sqrt()).collect();
            DMatrix::from_fn(d, d, |i, j| sd[i] * r[(i, j)] * sd[j])
        })
        .collect();
    if boundary {
        log::debug!("DCC estimate on the boundary: a={a:.3e}, b={b:.3e}");
    }
    Ok(DccFit {
        marginals,
        a,
        b,
        qbar: DMatrix::from_row_slice(d, d, &qbar),
        correlations,
        covariances,
        log_likelihood: -nll,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_helpers() {
        let mut m = vec![4.0, 2.0, 2.0, 3.0];
        let logdet = cholesky_in_place(&mut m, 2).unwrap();
        assert!((logdet - 8.0f64.ln()).abs() < 1e-14);
        let mut w = vec![0.0; 2];
        // x' A^{-1} x for A = [[4,2],[2,3]], x = (1, 1): A^{-1} = [[3,-2],[-2,4]]/8
        let q = forward_quad(&m, &[1.0, 1.0], 2, &mut w);
        assert!((q - 3.0 / 8.0).abs() < 1e-14);
        assert!(cholesky_in_place(&mut [1.0, 1.0, 1.0, 1.0], 2).is_none());
    }
}
