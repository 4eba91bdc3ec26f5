use crate::optimize::{nelder_mead_restarted, SimplexOptions};
use crate::{Error, Result};

/// Minimum series length for the volatility models.
pub const MIN_VOLATILITY_OBS: usize = 100;

/// Upper bound on persistence imposed by the parameter transform.
const MAX_PERSISTENCE: f64 = 0.9999;

#[derive(Debug, Clone, PartialEq)]
pub struct Garch11Fit {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Sample mean removed before fitting.
    pub mean: f64,
    /// Conditional variances `sigma^2_1..sigma^2_T`.
    pub variances: Vec<f64>,
    /// Gaussian log-likelihood without the `2 pi` constant.
    pub log_likelihood: f64,
    pub converged: bool,
    /// The constant-variance model was preferred by the likelihood-ratio pretest.
    pub restricted: bool,
}

impl Garch11Fit {
    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.persistence())
    }

    /// Final in-sample conditional variance.
    pub fn last_variance(&self) -> f64 {
        *self.variances.last().expect("fit has at least one observation")
    }

    /// Demeaned series divided by its conditional standard deviation.
    pub fn standardize(&self, series: &[f64]) -> Vec<f64> {
        series
            .iter()
            .zip(&self.variances)
            .map(|(x, v)| (x - self.mean) / v.sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GarchOptions {
    /// Hold `(alpha, beta)` fixed and estimate only `omega`.
    pub fixed: Option<(f64, f64)>,
    pub simplex: SimplexOptions,
    /// Nelder-Mead restarts from the incumbent after each start converges.
    pub restarts: usize,
    /// Critical value of the likelihood-ratio test of `alpha = beta = 0`.
    /// When the unrestricted fit does not beat the constant-variance fit by
    /// this margin the latter is returned, since `beta` is not identified
    /// without ARCH effects. `None` disables the pretest.
    pub pretest: Option<f64>,
}

impl Default for GarchOptions {
    fn default() -> Self {
        Self {
            fixed: None,
            simplex: SimplexOptions::default(),
            restarts: 2,
            pretest: Some(LR_CRITICAL_5PCT_2DF),
        }
    }
}

/// 95% quantile of the chi-square distribution with two degrees of freedom.
pub const LR_CRITICAL_5PCT_2DF: f64 = 5.991464547107979;

/// Starting `(alpha, beta)` pairs; omega follows from variance targeting.
const STARTS: [(f64, f64); 3] = [(0.05, 0.90), (0.10, 0.60), (0.03, 0.10)];

/// `sigma^2_1 = s2`, `sigma^2_t = omega + alpha e^2_{t-1} + beta sigma^2_{t-1}`.
pub fn garch_variance_path(e: &[f64], omega: f64, alpha: f64, beta: f64, s2: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(e.len());
    let mut h = s2;
    for t in 0..e.len() {
        if t > 0 {
            h = omega + alpha * e[t - 1] * e[t - 1] + beta * h;
        }
        out.push(h);
    }
    out
}

/// Negative log-likelihood `0.5 sum(ln h_t + e_t^2 / h_t)`.
fn garch_nll(e: &[f64], omega: f64, alpha: f64, beta: f64, s2: f64) -> f64 {
    let mut h = s2;
    let mut nll = 0.0;
    for t in 0..e.len() {
        if t > 0 {
            h = omega + alpha * e[t - 1] * e[t - 1] + beta * h;
        }
        if !(h > 0.0) {
            return f64::INFINITY;
        }
        nll += h.ln() + e[t] * e[t] / h;
    }
    0.5 * nll
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unconstrained `(theta_p, theta_s)` to `(a, b)` with `a, b >= 0`, `a + b < 0.9999`.
pub(crate) fn persistence_split(theta_p: f64, theta_s: f64) -> (f64, f64) {
    let p = MAX_PERSISTENCE * sigmoid(theta_p);
    let a = p * sigmoid(theta_s);
    (a, p - a)
}

pub(crate) fn persistence_split_inverse(a: f64, b: f64) -> (f64, f64) {
    let p = (a + b).clamp(1e-6, MAX_PERSISTENCE * (1.0 - 1e-6));
    let share = (a / p).clamp(1e-6, 1.0 - 1e-6);
    (logit(p / MAX_PERSISTENCE), logit(share))
}

pub(crate) fn check_series(series: &[f64]) -> Result<()> {
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("observation {} of the volatility series", i + 1)));
    }
    if series.len() < MIN_VOLATILITY_OBS {
        return Err(Error::InsufficientData {
            needed: MIN_VOLATILITY_OBS,
            got: series.len(),
        });
    }
    Ok(())
}

pub fn garch11_fit(series: &[f64]) -> Result<Garch11Fit> {
    garch11_fit_with(series, &GarchOptions::default())
}

/// Gaussian QML fit of a GARCH(1,1) to the demeaned series.
///
/// Parameters are searched in transformed coordinates (`ln omega` and a
/// logistic split of the persistence), so every trial point is admissible.
/// Several variance-targeted starts are tried and the best likelihood kept,
/// subject to the constant-variance pretest in [`GarchOptions::pretest`].
pub fn garch11_fit_with(series: &[f64], opts: &GarchOptions) -> Result<Garch11Fit> {
    check_series(series)?;
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let e: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let s2 = e.iter().map(|x| x * x).sum::<f64>() / (n - 1.0);
    if !(s2 > 1e-24 * (1.0 + mean * mean)) {
        return Err(Error::Degenerate("volatility series is constant".into()));
    }

    let mut restricted = false;
    let (omega, alpha, beta, value, converged) = match opts.fixed {
        Some((alpha, beta)) => {
            if alpha < 0.0 || beta < 0.0 || alpha + beta >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "fixed GARCH parameters ({alpha}, {beta}) are not stationary"
                )));
            }
            let (omega, value, converged) = fit_omega(&e, alpha, beta, s2, opts);
            (omega, alpha, beta, value, converged)
        }
        None => {
            let mut best: Option<(Vec<f64>, f64, bool)> = None;
            for &(a0, b0) in &STARTS {
                let (tp, ts) = persistence_split_inverse(a0, b0);
                let x0 = [(s2 * (1.0 - a0 - b0)).ln(), tp, ts];
                let res = nelder_mead_restarted(
                    |x| {
                        let (a, b) = persistence_split(x[1], x[2]);
                        garch_nll(&e, x[0].exp(), a, b, s2)
                    },
                    &x0,
                    &opts.simplex,
                    opts.restarts,
                );
                if best.as_ref().is_none_or(|b| res.value < b.1) {
                    best = Some((res.x, res.value, res.converged));
                }
            }
            let (x, value, converged) = best.expect("at least one start");
            let (a, b) = persistence_split(x[1], x[2]);
            match opts.pretest {
                Some(critical) => {
                    let (omega0, value0, conv0) = fit_omega(&e, 0.0, 0.0, s2, opts);
                    if 2.0 * (value0 - value) < critical {
                        restricted = true;
                        (omega0, 0.0, 0.0, value0, conv0)
                    } else {
                        (x[0].exp(), a, b, value, converged)
                    }
                }
                None => (x[0].exp(), a, b, value, converged),
            }
        }
    };
    if !value.is_finite() || !(omega > 0.0) {
        return Err(Error::Fit(format!(
            "GARCH likelihood search ended at omega={omega:e}, alpha={alpha}, beta={beta}, value={value}"
        )));
    }
    let variances = garch_variance_path(&e, omega, alpha, beta, s2);
    Ok(Garch11Fit {
        omega,
        alpha,
        beta,
        mean,
        variances,
        log_likelihood: -value,
        converged,
        restricted,
    })
}

/// QML estimate of `omega` alone with `(alpha, beta)` held fixed.
fn fit_omega(e: &[f64], alpha: f64, beta: f64, s2: f64, opts: &GarchOptions) -> (f64, f64, bool) {
    let x0 = [(s2 * (1.0 - alpha - beta)).ln()];
    let res = nelder_mead_restarted(
        |x| garch_nll(e, x[0].exp(), alpha, beta, s2),
        &x0,
        &opts.simplex,
        opts.restarts,
    );
    (res.x[0].exp(), res.value, res.converged)
}
