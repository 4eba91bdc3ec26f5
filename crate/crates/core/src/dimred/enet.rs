use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct ElasticNetOptions {
    pub tolerance: f64,
    pub max_passes: usize,
}

impl Default for ElasticNetOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            max_passes: 10_000,
        }
    }
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Coordinate descent for `c'Gc - 2b'c + lambda2 |c|^2 + lambda1 |c|_1` given
/// the Gram matrix `G = X'X` and `b = X'y`. Warm-started from `init`.
///
/// Returns the solution and the number of passes used.
pub fn elastic_net_gram(
    gram: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
    init: &DVector<f64>,
    opts: &ElasticNetOptions,
) -> (DVector<f64>, usize) {
    let p = b.len();
    let mut c = init.clone();
    // gc = G c kept in sync incrementally
    let mut gc = gram * &c;
    let mut passes = 0;
    while passes < opts.max_passes {
        passes += 1;
        let mut max_change = 0.0f64;
        let mut max_coef = 0.0f64;
        for j in 0..p {
            let gjj = gram[(j, j)];
            let denom = gjj + lambda2;
            let old = c[j];
            let new = if denom <= 0.0 {
                0.0
            } else {
                let partial = b[j] - (gc[j] - gjj * old);
                soft(partial, 0.5 * lambda1) / denom
            };
            let delta = new - old;
            if delta != 0.0 {
                c[j] = new;
                for i in 0..p {
                    gc[i] += gram[(i, j)] * delta;
                }
            }
            max_change = max_change.max(delta.abs());
            max_coef = max_coef.max(new.abs());
        }
        if max_change <= opts.tolerance * max_coef.max(1.0) {
            break;
        }
    }
    (c, passes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unpenalised_solves_normal_equations() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let (c, _) = elastic_net_gram(&g, &b, 0.0, 0.0, &DVector::zeros(2), &ElasticNetOptions::default());
        let exact = g.clone().lu().solve(&b).unwrap();
        assert!((c - exact).amax() < 1e-6);
    }

    #[test]
    fn large_l1_zeroes_everything() {
        let g = DMatrix::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (c, _) = elastic_net_gram(&g, &b, 10.0, 0.0, &DVector::zeros(3), &ElasticNetOptions::default());
        assert!(c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn orthogonal_design_soft_thresholds() {
        let g = DMatrix::identity(3, 3) * 2.0;
        let b = DVector::from_vec(vec![1.0, -2.0, 0.1]);
        let (c, _) = elastic_net_gram(&g, &b, 0.4, 1.0, &DVector::zeros(3), &ElasticNetOptions::default());
        // c_j = soft(b_j, 0.2) / (2 + 1)
        let expect = [0.8 / 3.0, -1.8 / 3.0, 0.0];
        for j in 0..3 {
            assert!((c[j] - expect[j]).abs() < 1e-12);
        }
    }
}
