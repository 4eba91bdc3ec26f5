use latentmv_core::cov::{dcc_fit, garch11_fit};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn simulate_garch(omega: f64, alpha: f64, beta: f64, t: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = omega / (1.0 - alpha - beta);
    let mut out = Vec::with_capacity(t);
    let burn = 500;
    for i in 0..t + burn {
        let z: f64 = StandardNormal.sample(&mut rng);
        let e = h.sqrt() * z;
        if i >= burn {
            out.push(e);
        }
        h = omega + alpha * e * e + beta * h;
    }
    out
}

/// Bivariate DCC with unit-variance GARCH marginals (0.05, 0.05, 0.90).
fn simulate_dcc(a: f64, b: f64, rho: f64, t: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (om, al, be) = (0.05, 0.05, 0.90);
    let mut h = [1.0f64, 1.0];
    let qbar = [[1.0, rho], [rho, 1.0]];
    let mut q = qbar;
    let mut prev = [0.0, 0.0];
    let burn = 500;
    let mut out = DMatrix::zeros(t, 2);
    for i in 0..t + burn {
        if i > 0 {
            for r in 0..2 {
                for c in 0..2 {
                    q[r][c] = (1.0 - a - b) * qbar[r][c] + a * prev[r] * prev[c] + b * q[r][c];
                }
            }
        }
        let corr = q[0][1] / (q[0][0] * q[1][1]).sqrt();
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let eps = [z1, corr * z1 + (1.0 - corr * corr).sqrt() * z2];
        let e = [h[0].sqrt() * eps[0], h[1].sqrt() * eps[1]];
        if i >= burn {
            out[(i - burn, 0)] = e[0];
            out[(i - burn, 1)] = e[1];
        }
        for k in 0..2 {
            h[k] = om + al * e[k] * e[k] + be * h[k];
        }
        prev = eps;
    }
    out
}

#[test]
fn garch_recovers_known_parameters_on_average() {
    let (mut o, mut a, mut b) = (0.0, 0.0, 0.0);
    let seeds = 20;
    for s in 0..seeds {
        let x = simulate_garch(0.1, 0.1, 0.85, 4000, 100 + s);
        let fit = garch11_fit(&x).unwrap();
        o += fit.omega;
        a += fit.alpha;
        b += fit.beta;
    }
    let n = seeds as f64;
    let (o, a, b) = (o / n, a / n, b / n);
    println!("mean estimates omega={o:.4} alpha={a:.4} beta={b:.4}");
    assert!((o - 0.1).abs() <= 0.05 && (a - 0.1).abs() <= 0.05 && (b - 0.85).abs() <= 0.05);
}

#[test]
fn garch_on_iid_noise_has_low_persistence() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..4000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let fit = garch11_fit(&x).unwrap();
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let s2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    println!("iid fit alpha={} beta={} uv={} s2={s2}", fit.alpha, fit.beta, fit.unconditional_variance());
    assert!(fit.alpha + fit.beta < 0.3);
    assert!((fit.unconditional_variance() / s2 - 1.0).abs() < 0.1);
    assert!(fit.variances.iter().all(|v| *v > 0.0));
}

#[test]
fn dcc_recovers_known_parameters_on_average() {
    let (mut a, mut b) = (0.0, 0.0);
    let seeds = 20;
    for s in 0..seeds {
        let x = simulate_dcc(0.05, 0.90, 0.4, 4000, 500 + s);
        let fit = dcc_fit(&x).unwrap();
        a += fit.a;
        b += fit.b;
    }
    let (a, b) = (a / seeds as f64, b / seeds as f64);
    println!("mean DCC estimates a={a:.4} b={b:.4}");
    assert!((a - 0.05).abs() <= 0.10 && (b - 0.90).abs() <= 0.10);
}
