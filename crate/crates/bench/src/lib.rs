//! Fixtures shared by the benchmarks.

use latentmv_core::data::{generate_synthetic, rank_transform};
use latentmv_core::Result;
use nalgebra::DMatrix;

/// A `t x n` block of synthetic factor-model returns and its rank transform.
pub fn window(n: usize, t: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let panel = generate_synthetic(n, t, 3, 0.05, seed)?;
    let x = rank_transform(&panel.returns);
    Ok((panel.returns, x))
}

/// Sample covariance of the columns of `r`.
pub fn covariance(r: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = r.row_mean();
    let mut c = r.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c.transpose() * &c / (r.nrows() as f64 - 1.0)
}
