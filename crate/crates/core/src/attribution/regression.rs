use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// OLS fit of one series on a set of regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    /// Intercept first, then one coefficient per regressor column.
    pub coefficients: DVector<f64>,
    /// Newey-West t-statistics, same layout as `coefficients`.
    pub t_stats: DVector<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    /// R² lost by zeroing each regressor, scaled to sum to 100.
    pub importance: Vec<f64>,
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    z.view_mut((0, 1), (x.nrows(), x.ncols())).copy_from(x);
    z
}

fn check(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::Shape(format!("{} observations vs {} regressor rows", y.len(), x.nrows())));
    }
    let needed = x.ncols() + 2;
    if y.len() < needed {
        return Err(Error::InsufficientData { needed, got: y.len() });
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression input".into()));
    }
    Ok(())
}

/// `(Z'Z)^-1` after a rank check on the design.
fn gram_inverse(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = z.clone().svd(false, false).singular_values;
    let (max, min) = (sv.max(), sv.min());
    if !(min > 1e-10 * max) {
        return Err(Error::Collinear(format!(
            "design singular values range from {min:.3e} to {max:.3e}"
        )));
    }
    (z.transpose() * z)
        .try_inverse()
        .ok_or_else(|| Error::Collinear("normal equations are singular".into()))
}

fn r_squared(y: &DVector<f64>, resid: &DVector<f64>) -> f64 {
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    1.0 - resid.norm_squared() / sst
}

/// R² of OLS with intercept; columns listed in `drop` are left out.
fn fit_r2(y: &DVector<f64>, x: &DMatrix<f64>, drop: Option<usize>) -> Result<f64> {
    let keep: Vec<usize> = (0..x.ncols()).filter(|j| Some(*j) != drop).collect();
    let z = with_intercept(&x.select_columns(&keep));
    let beta = gram_inverse(&z)? * z.transpose() * y;
    Ok(r_squared(y, &(y - &z * beta)))
}

fn constant_response(y: &DVector<f64>) -> bool {
    let mean = y.mean();
    y.iter().all(|v| (v - mean).abs() <= 1e-14 * (1.0 + mean.abs()))
}

/// Clip negatives to zero and rescale to sum to 100 (all zeros stay zero).
pub(crate) fn scale_to_100(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        clipped.iter().map(|v| v / total * 100.0).collect()
    } else {
        clipped
    }
}

/// Importance of each regressor as the drop in R² when its observations are
/// set to zero and the model is refit, clipped at zero and scaled to 100.
pub fn variable_importance_zero(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    check(y, x)?;
    if constant_response(y) {
        return Err(Error::Degenerate("constant response".into()));
    }
    let full = fit_r2(y, x, None)?;
    // a zeroed column is absorbed by the refit exactly like a dropped one
    let raw = (0..x.ncols())
        .map(|j| Ok(full - fit_r2(y, x, Some(j))?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(scale_to_100(&raw))
}

/// OLS with intercept and Newey-West (Bartlett kernel) standard errors using
/// `lags` lags; `lags = 0` gives the White (HC0) covariance.
pub fn ols_nw(y: &DVector<f64>, x: &DMatrix<f64>, lags: usize) -> Result<RegressionReport> {
    check(y, x)?;
    if constant_response(y) {
        return Err(Error::Degenerate("constant response".into()));
    }
    let (t, p) = (x.nrows(), x.ncols());
    let z = with_intercept(x);
    let bread = gram_inverse(&z)?;
    let beta = &bread * z.transpose() * y;
    let u = y - &z * &beta;

    let k = p + 1;
    let scores = DMatrix::from_fn(t, k, |i, j| z[(i, j)] * u[i]);
    let mut meat = scores.transpose() * &scores;
    for l in 1..=lags.min(t - 1) {
        let w = 1.0 - l as f64 / (lags + 1) as f64;
        let lead = scores.rows(l, t - l);
        let lag = scores.rows(0, t - l);
        let gamma = lead.transpose() * lag;
        meat += (&gamma + gamma.transpose()) * w;
    }
    let v = &bread * meat * &bread;
    let t_stats = DVector::from_fn(k, |j, _| beta[j] / v[(j, j)].sqrt());

    let r2 = r_squared(y, &u);
    let adj_r2 = 1.0 - (1.0 - r2) * (t - 1) as f64 / (t - p - 1) as f64;
    Ok(RegressionReport {
        coefficients: beta,
        t_stats,
        r2,
        adj_r2,
        importance: variable_importance_zero(y, x)?,
    })
}

/// Sum variable importances by group and rescale to 100. Every group named in
/// `grouping` appears in the output (sorted by name), even when empty.
pub fn group_importance(
    importances: &[(String, f64)],
    grouping: &HashMap<String, String>,
) -> Result<Vec<(String, f64)>> {
    let mut sums: BTreeMap<&str, f64> = grouping.values().map(|g| (g.as_str(), 0.0)).collect();
    for (var, v) in importances {
        let g = grouping.get(var).ok_or_else(|| Error::Mapping(var.clone()))?;
        *sums.get_mut(g.as_str()).expect("group collected above") += v;
    }
    let names: Vec<String> = sums.keys().map(|s| s.to_string()).collect();
    let scaled = scale_to_100(&sums.values().copied().collect::<Vec<_>>());
    Ok(names.into_iter().zip(scaled).collect())
}

/// Read a `variable,group` CSV with a header row.
pub fn read_grouping<R: Read>(reader: R) -> Result<HashMap<String, String>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut map = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected variable,group but found {} fields", rec.len()),
            });
        }
        map.insert(rec[0].trim().to_string(), rec[1].trim().to_string());
    }
    Ok(map)
}

pub fn load_grouping(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    read_grouping(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_relation() {
        let x = DMatrix::from_fn(20, 1, |i, _| (i as f64).sin());
        let y = x.column(0) * 2.0;
        let rep = ols_nw(&y, &x, 3).unwrap();
        assert!((rep.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(rep.coefficients[0].abs() < 1e-12);
        assert!((rep.adj_r2 - 1.0).abs() < 1e-12);
        assert_eq!(rep.importance, vec![100.0]);
    }

    #[test]
    fn collinear_design_is_rejected() {
        let x = DMatrix::from_fn(20, 2, |i, j| (i as f64) * (j + 1) as f64);
        let y = DVector::from_fn(20, |i, _| (i as f64).cos());
        assert!(matches!(ols_nw(&y, &x, 0), Err(Error::Collinear(_))));
    }

    #[test]
    fn grouping() {
        let g: HashMap<String, String> = [("a", "size"), ("b", "size"), ("c", "value")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let imp = vec![("a".to_string(), 10.0), ("b".to_string(), 20.0), ("c".to_string(), 70.0)];
        let out = group_importance(&imp, &g).unwrap();
        assert_eq!(out, vec![("size".to_string(), 30.0), ("value".to_string(), 70.0)]);
        let one: HashMap<String, String> = [("a", "all"), ("b", "all")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let out = group_importance(&[("a".into(), 3.0), ("b".into(), 1.0)], &one).unwrap();
        assert_eq!(out, vec![("all".to_string(), 100.0)]);
        assert_eq!(
            group_importance(&[], &g).unwrap(),
            vec![("size".to_string(), 0.0), ("value".to_string(), 0.0)]
        );
        assert!(matches!(group_importance(&[("z".into(), 1.0)], &g), Err(Error::Mapping(_))));
        let parsed = read_grouping("variable,group\na,size\nc,value\n".as_bytes()).unwrap();
        assert_eq!(parsed["c"], "value");
    }
}
