//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Column means ignoring missing (NaN) cells. Columns with no data get 0.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.ncols(),
        x.column_iter().map(|col| {
            let (sum, n) = col
                .iter()
                .filter(|v| !v.is_nan())
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        }),
    )
}

pub fn center_columns(x: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

pub fn has_missing(x: &DMatrix<f64>) -> bool {
    x.iter().any(|v| v.is_nan())
}

/// Replace missing cells with `value`.
pub fn fill_missing(x: &DMatrix<f64>, value: f64) -> DMatrix<f64> {
    x.map(|v| if v.is_nan() { value } else { v })
}

/// Replace missing cells with their column mean.
pub fn fill_missing_with_means(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        for v in col.iter_mut() {
            if v.is_nan() {
                *v = means[j];
            }
        }
    }
    out
}

/// Unbiased sample covariance of the columns of a complete matrix (divisor T-1).
pub fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows();
    let k = x.ncols();
    if t < 2 {
        return DMatrix::zeros(k, k);
    }
    let c = center_columns(x, &column_means(x));
    let mut s = c.transpose() * &c;
    s /= (t - 1) as f64;
    symmetrize(&mut s);
    s
}

/// Pairwise-complete covariance: each entry uses the rows where both columns are
/// present, with means taken over those rows and divisor n_ij - 1.
pub fn pairwise_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    if !has_missing(x) {
        return covariance(x);
    }
    let n = x.ncols();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let pairs: Vec<(f64, f64)> = x
                .column(i)
                .iter()
                .zip(x.column(j).iter())
                .filter(|(a, b)| !a.is_nan() && !b.is_nan())
                .map(|(a, b)| (*a, *b))
                .collect();
            let m = pairs.len();
            let v = if m < 2 {
                0.0
            } else {
                let ma = pairs.iter().map(|p| p.0).sum::<f64>() / m as f64;
                let mb = pairs.iter().map(|p| p.1).sum::<f64>() / m as f64;
                pairs.iter().map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>() / (m - 1) as f64
            };
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Sample variance (divisor n-1) of the present values of a slice.
pub fn variance(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Clip eigenvalues below zero and add `jitter` to the diagonal.
pub fn psd_repair(m: &DMatrix<f64>, jitter: f64) -> DMatrix<f64> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym.clone());
    let mut out = if eig.eigenvalues.iter().any(|&l| l < 0.0) {
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let mut r = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        symmetrize(&mut r);
        r
    } else {
        sym
    };
    for i in 0..out.nrows() {
        out[(i, i)] += jitter;
    }
    out
}

/// Flip each column so its largest-magnitude entry is positive (first such entry on ties).
pub fn fix_column_signs(w: &mut DMatrix<f64>) {
    for mut col in w.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Select rows by index.
pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Select columns by index.
pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

pub fn rows_range(x: &DMatrix<f64>, range: std::ops::Range<usize>) -> DMatrix<f64> {
    x.rows(range.start, range.len()).into_owned()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
