use latentmv_core::cov::{
    assemble_dynamic, bootstrap_structure_pvalue, dcc_fit, dcc_fit_with, dynamic_betas, dynamic_betas_with,
    factor_covariance, garch11_fit_with, ols_fit, sample_cov, static_factor_cov, CovIngredients, CovSpec, DccOptions,
    DynamicOptions, GarchOptions,
};
use latentmv_core::data::{generate, SyntheticSpec};
use latentmv_core::dimred::{pca_fit, project};
use latentmv_core::stats::BootstrapSettings;
use latentmv_core::Error;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(t: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(t, n, |_, _| StandardNormal.sample(&mut rng))
}

/// Covariance by explicit double loops, independent of the library helpers.
fn naive_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, n) = x.shape();
    let means: Vec<f64> = (0..n).map(|j| (0..t).map(|i| x[(i, j)]).sum::<f64>() / t as f64).collect();
    DMatrix::from_fn(n, n, |a, b| {
        (0..t).map(|i| (x[(i, a)] - means[a]) * (x[(i, b)] - means[b])).sum::<f64>() / (t - 1) as f64
    })
}

fn synthetic_returns(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
    generate(&SyntheticSpec::new(n, t, 3, 0.05, seed)).unwrap().panel.returns
}

#[test]
fn full_rank_pca_factor_covariance_equals_sample_covariance() {
    let r = synthetic_returns(10, 120, 3);
    let basis = pca_fit(&r, 10).unwrap();
    let f = project(&r, &basis).unwrap();
    let fit = ols_fit(&r, &f).unwrap();
    let sigma = static_factor_cov(&fit, &f).unwrap();
    let oracle = naive_cov(&r);
    let err = (sigma.matrix - &oracle).abs().max();
    assert!(err <= 1e-8, "max deviation {err:e}");
}

#[test]
fn sample_covariance_matches_oracle_and_is_psd() {
    let r = gaussian(50, 6, 11);
    let s = sample_cov(&r).unwrap();
    assert!((s.matrix.clone() - naive_cov(&r)).abs().max() < 1e-12);
    assert_eq!(s.matrix, s.matrix.transpose());
    assert!(s.min_eigenvalue() >= -1e-10);
}

#[test]
fn pairwise_sample_covariance_is_repaired_to_psd() {
    let mut r = gaussian(12, 5, 2);
    for (i, j) in [(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (5, 0), (6, 1)] {
        r[(i, j)] = f64::NAN;
    }
    let s = sample_cov(&r).unwrap();
    assert!(s.min_eigenvalue() >= -1e-10);
}

#[test]
fn static_diagonal_dominates_factor_part() {
    let r = synthetic_returns(15, 100, 4);
    let basis = pca_fit(&r, 3).unwrap();
    let f = project(&r, &basis).unwrap();
    let fit = ols_fit(&r, &f).unwrap();
    let sigma = static_factor_cov(&fit, &f).unwrap();
    let part = fit.loadings.transpose() * naive_cov(&f) * &fit.loadings;
    for i in 0..15 {
        assert!(sigma.matrix[(i, i)] >= part[(i, i)] - 1e-15);
    }
    assert!(sigma.min_eigenvalue() >= -1e-10);
}

#[test]
fn duplicated_series_have_unit_conditional_correlation() {
    let x = gaussian(300, 1, 5);
    let mut two = DMatrix::zeros(300, 2);
    two.set_column(0, &x.column(0));
    two.set_column(1, &x.column(0));
    let fit = dcc_fit(&two).unwrap();
    assert!(fit.boundary);
    for r in &fit.correlations {
        assert!((r[(0, 1)] - 1.0).abs() < 1e-8);
        assert!((r[(0, 0)] - 1.0).abs() < 1e-10 && (r[(1, 1)] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn fixed_zero_dcc_gives_constant_unconditional_correlation() {
    let x = gaussian(400, 3, 9) * 0.04;
    let opts = DccOptions {
        fixed: Some((0.0, 0.0)),
        ..DccOptions::default()
    };
    let fit = dcc_fit_with(&x, &opts).unwrap();
    // oracle: correlation of the standardized residuals from the marginals
    let eps = DMatrix::from_fn(400, 3, |t, j| {
        let m = &fit.marginals[j];
        (x[(t, j)] - m.mean) / m.variances[t].sqrt()
    });
    let q = eps.transpose() * &eps / 400.0;
    let rbar = DMatrix::from_fn(3, 3, |i, j| q[(i, j)] / (q[(i, i)] * q[(j, j)]).sqrt());
    for r in &fit.correlations {
        assert!((r - &rbar).abs().max() < 1e-12);
    }
    for h in &fit.covariances {
        assert!(h.symmetric_eigenvalues().min() >= -1e-12);
    }
}

#[test]
fn return_equal_to_factor_has_unit_beta() {
    let f = gaussian(250, 1, 12) * 0.05;
    let r: Vec<f64> = f.column(0).iter().copied().collect();
    let b = dynamic_betas(&r, &f, &DccOptions::default()).unwrap();
    assert!(b.betas.iter().all(|v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn homoskedastic_betas_match_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let t = 1000;
    let f = DMatrix::from_fn(t, 2, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.04 * z
    });
    let r: Vec<f64> = (0..t)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.004 + 0.8 * f[(i, 0)] - 0.3 * f[(i, 1)] + 0.02 * z
        })
        .collect();
    let opts = DccOptions {
        fixed: Some((0.0, 0.0)),
        garch: GarchOptions {
            fixed: Some((0.0, 0.0)),
            ..GarchOptions::default()
        },
        ..DccOptions::default()
    };
    let dynb = dynamic_betas(&r, &f, &opts).unwrap();
    let ols = ols_fit(&DMatrix::from_column_slice(t, 1, &r), &f).unwrap();
    for s in 0..t {
        for k in 0..2 {
            assert!((dynb.betas[(s, k)] - ols.loadings[(k, 0)]).abs() < 1e-3, "t={s} k={k}");
        }
    }
}

#[test]
fn single_factor_beta_is_covariance_over_variance() {
    let f = gaussian(300, 1, 31) * 0.05;
    let noise = gaussian(300, 1, 32) * 0.02;
    let r: Vec<f64> = (0..300).map(|i| 1.2 * f[(i, 0)] + noise[(i, 0)]).collect();
    let opts = DccOptions::default();
    let b = dynamic_betas(&r, &f, &opts).unwrap();
    let mut joint = DMatrix::zeros(300, 2);
    joint.set_column(0, &f.column(0));
    joint.set_column(1, &DVector::from_column_slice(&r));
    let dcc = dcc_fit_with(&joint, &opts).unwrap();
    for (s, h) in dcc.covariances.iter().enumerate() {
        assert!((b.betas[(s, 0)] - h[(0, 1)] / h[(0, 0)]).abs() < 1e-12);
    }
    // reusing the factor marginal gives the same path
    let fm = dcc.marginals[0].clone();
    let b2 = dynamic_betas_with(&r, &f, Some(&[fm]), &opts).unwrap();
    assert_eq!(b.betas, b2.betas);
}

fn static_ingredients(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, CovIngredients) {
    let r = synthetic_returns(8, 200, seed);
    let basis = pca_fit(&r, 2).unwrap();
    let f = project(&r, &basis).unwrap();
    let fit = ols_fit(&r, &f).unwrap();
    let ing = CovIngredients::from_fit(&fit, &f);
    (r, f, ing)
}

#[test]
fn dynamic_assembly_reduces_to_static() {
    let (r, f, ing) = static_ingredients(6);
    let t = r.nrows();
    let fit = ols_fit(&r, &f).unwrap();
    let stat = static_factor_cov(&fit, &f).unwrap();
    let via_assembly = assemble_dynamic(CovSpec::Static, &ing, 0).unwrap();
    assert!((via_assembly.matrix.clone() - &stat.matrix).abs().max() < 1e-14);

    // constant beta path
    let beta_path = CovIngredients {
        loadings_path: Some(vec![ing.loadings.clone().unwrap(); t]),
        ..ing.clone()
    };
    assert_eq!(
        assemble_dynamic(CovSpec::DynBeta, &beta_path, t - 1).unwrap().matrix,
        via_assembly.matrix
    );

    // a correlation path without dynamics and constant marginals is the static factor covariance
    let factor_path = CovIngredients {
        factor_cov_path: Some(vec![ing.factor_cov.clone().unwrap(); t]),
        ..ing.clone()
    };
    let dynf = assemble_dynamic(CovSpec::DynFactor, &factor_path, t - 1).unwrap();
    assert!((dynf.matrix - &stat.matrix).abs().max() < 1e-8);

    // with (a, b) = (0, 0) and constant-variance marginals the only gap is omega
    // versus the sample variance of each factor
    let opts = DccOptions {
        fixed: Some((0.0, 0.0)),
        garch: GarchOptions {
            fixed: Some((0.0, 0.0)),
            ..GarchOptions::default()
        },
        ..DccOptions::default()
    };
    let dcc = dcc_fit_with(&f, &opts).unwrap();
    let sf = ing.factor_cov.clone().unwrap();
    let last = dcc.last_covariance();
    let gap = (last - &sf).abs().max();
    let var_gap = (0..2)
        .map(|j| (dcc.marginals[j].omega - sf[(j, j)]).abs())
        .fold(0.0, f64::max);
    assert!(gap <= 2.0 * var_gap + 1e-12, "gap {gap:e} vs variance gap {var_gap:e}");
}

#[test]
fn constant_garch_residual_path_shifts_only_the_diagonal() {
    let (r, f, ing) = static_ingredients(8);
    let t = r.nrows();
    let fit = ols_fit(&r, &f).unwrap();
    let opts = GarchOptions {
        fixed: Some((0.0, 0.0)),
        ..GarchOptions::default()
    };
    let mut path = DMatrix::zeros(t, 8);
    let mut omegas = Vec::new();
    for j in 0..8 {
        let u: Vec<f64> = fit.residuals.column(j).iter().copied().collect();
        let g = garch11_fit_with(&u, &opts).unwrap();
        omegas.push(g.omega);
        path.set_column(j, &DVector::from_vec(g.variances));
    }
    let dyn_ing = CovIngredients {
        residual_var_path: Some(path),
        ..ing.clone()
    };
    let dynm = assemble_dynamic(CovSpec::DynError, &dyn_ing, t - 1).unwrap().matrix;
    let stat = assemble_dynamic(CovSpec::Static, &ing, 0).unwrap().matrix;
    let resid_var = ing.residual_var.clone().unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let want = if i == j { omegas[i] - resid_var[i] } else { 0.0 };
            assert!((dynm[(i, j)] - stat[(i, j)] - want).abs() < 1e-10);
        }
        // QML omega under constant variance is the mean square over dates 2..T
        let u = fit.residuals.column(i);
        let oracle = u.iter().skip(1).map(|v| v * v).sum::<f64>() / (t - 1) as f64;
        assert!((omegas[i] / oracle - 1.0).abs() < 1e-4, "{} vs {oracle}", omegas[i]);
    }
}

#[test]
fn missing_ingredients_are_assembly_errors() {
    let (_, _, ing) = static_ingredients(10);
    for spec in [CovSpec::DynBeta, CovSpec::DynFactor, CovSpec::DynError] {
        assert!(matches!(assemble_dynamic(spec, &ing, 0), Err(Error::Assembly(_))));
    }
    assert!(matches!(
        assemble_dynamic(CovSpec::Static, &CovIngredients::default(), 0),
        Err(Error::Assembly(_))
    ));
}

#[test]
fn every_spec_yields_a_valid_covariance() {
    let synth = generate(&SyntheticSpec::new(12, 150, 2, 0.04, 13)).unwrap();
    let r = synth.panel.returns;
    let f = synth.factors.aligned(&synth.panel.dates, &["f1".into(), "f2".into()]).unwrap();
    let single = f.columns(0, 1).into_owned();
    for factors in [&f, &single] {
        for spec in [CovSpec::Sample, CovSpec::Static, CovSpec::DynBeta, CovSpec::DynFactor, CovSpec::DynError] {
            let c = factor_covariance(spec, &r, factors, &DynamicOptions::default()).unwrap();
            assert_eq!(c.spec, spec);
            assert_eq!(c.matrix, c.matrix.transpose());
            assert!(c.min_eigenvalue() >= -1e-10, "{spec}");
        }
    }
}

#[test]
fn shifted_measure_series_are_significantly_different() {
    let a: Vec<f64> = gaussian(480, 1, 40).iter().copied().collect();
    let b: Vec<f64> = gaussian(480, 1, 41).iter().map(|v| v + 1.0).collect();
    let p = bootstrap_structure_pvalue(&a, &b, &BootstrapSettings::default()).unwrap();
    assert!(p < 0.01, "p = {p}");
    let bad = BootstrapSettings {
        block_length: 481,
        ..BootstrapSettings::default()
    };
    assert!(bootstrap_structure_pvalue(&a, &b, &bad).is_err());
}
