use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeOptions {
    pub max_iter: usize,
    /// Convergence when the log-likelihood gains less than `tol * (1 + |ll|)`.
    pub tol: f64,
    /// Random starts in addition to the 2-means start.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            restarts: 5,
            seed: 0,
        }
    }
}

/// Two-state Gaussian switching model `r_t = mu_s + e_t`, `e_t ~ N(0, sigma_s^2)`.
/// State 0 is the low-volatility state.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
    /// `transition[i][j] = P(s_t = j | s_{t-1} = i)`.
    pub transition: [[f64; 2]; 2],
    /// Filtered state probabilities per date.
    pub filtered: Vec<[f64; 2]>,
    /// True where the filtered probability of the low state is below 0.5.
    pub high: Vec<bool>,
    pub log_likelihood: f64,
    /// Log-likelihood after every EM iteration of the selected start.
    pub trace: Vec<f64>,
}

impl RegimePath {
    pub fn p_low(&self) -> Vec<f64> {
        self.filtered.iter().map(|p| p[0]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Params {
    mu: [f64; 2],
    var: [f64; 2],
    p: [[f64; 2]; 2],
    init: [f64; 2],
}

struct Pass {
    filtered: Vec<[f64; 2]>,
    predicted: Vec<[f64; 2]>,
    ll: f64,
}

fn hamilton_filter(y: &[f64], th: &Params) -> Pass {
    let mut filtered = Vec::with_capacity(y.len());
    let mut predicted = Vec::with_capacity(y.len());
    let mut prev = th.init;
    let mut ll = 0.0;
    for (t, &v) in y.iter().enumerate() {
        let pred = if t == 0 {
            th.init
        } else {
            [
                prev[0] * th.p[0][0] + prev[1] * th.p[1][0],
                prev[0] * th.p[0][1] + prev[1] * th.p[1][1],
            ]
        };
        let logd: [f64; 2] =
            std::array::from_fn(|s| -0.5 * (LN_2PI + th.var[s].ln() + (v - th.mu[s]).powi(2) / th.var[s]));
        let m = logd[0].max(logd[1]);
        let joint = [pred[0] * (logd[0] - m).exp(), pred[1] * (logd[1] - m).exp()];
        let total = joint[0] + joint[1];
        ll += m + total.ln();
        let post = [joint[0] / total, joint[1] / total];
        predicted.push(pred);
        filtered.push(post);
        prev = post;
    }
    Pass { filtered, predicted, ll }
}

/// One EM step: Kim smoother for the E-step, closed-form M-step.
fn em_step(y: &[f64], th: &Params, pass: &Pass, var_floor: f64) -> Params {
    let n = y.len();
    let mut smooth = vec![[0.0; 2]; n];
    smooth[n - 1] = pass.filtered[n - 1];
    let mut trans = [[0.0; 2]; 2];
    for t in (0..n - 1).rev() {
        let f = pass.filtered[t];
        let ratio: [f64; 2] = std::array::from_fn(|j| {
            let pr = pass.predicted[t + 1][j];
            if pr > 0.0 {
                smooth[t + 1][j] / pr
            } else {
                0.0
            }
        });
        for i in 0..2 {
            let mut s = 0.0;
            for j in 0..2 {
                let joint = f[i] * th.p[i][j] * ratio[j];
                trans[i][j] += joint;
                s += joint;
            }
            smooth[t][i] = s;
        }
    }
    let mut out = *th;
    for s in 0..2 {
        let w: f64 = smooth.iter().map(|p| p[s]).sum();
        if w <= 1e-12 {
            continue;
        }
        let mu = smooth.iter().zip(y).map(|(p, v)| p[s] * v).sum::<f64>() / w;
        let var = smooth.iter().zip(y).map(|(p, v)| p[s] * (v - mu).powi(2)).sum::<f64>() / w;
        out.mu[s] = mu;
        out.var[s] = var.max(var_floor);
    }
    for i in 0..2 {
        let row = trans[i][0] + trans[i][1];
        if row > 1e-12 {
            for j in 0..2 {
                out.p[i][j] = (trans[i][j] / row).clamp(1e-8, 1.0 - 1e-8);
            }
        }
    }
    out.init = smooth[0];
    out
}

/// Two-means split of the squared deviations; returns the start parameters.
fn two_means_start(y: &[f64], var_floor: f64) -> Params {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sq: Vec<f64> = y.iter().map(|v| (v - mean).powi(2)).collect();
    let (mut c0, mut c1) = sq.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut low: Vec<bool> = vec![true; y.len()];
    for _ in 0..100 {
        let next: Vec<bool> = sq.iter().map(|v| (v - c0).abs() <= (v - c1).abs()).collect();
        let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0.0, 0.0, 0.0);
        for (v, l) in sq.iter().zip(&next) {
            if *l {
                s0 += v;
                n0 += 1.0;
            } else {
                s1 += v;
                n1 += 1.0;
            }
        }
        let stable = next == low;
        low = next;
        if n0 == 0.0 || n1 == 0.0 {
            break;
        }
        c0 = s0 / n0;
        c1 = s1 / n1;
        if stable {
            break;
        }
    }
    if low.iter().all(|l| *l) || low.iter().all(|l| !*l) {
        // no spread at all: split the sample in half by magnitude
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.sort_by(|&a, &b| sq[a].total_cmp(&sq[b]));
        low = vec![false; y.len()];
        for &i in &idx[..y.len() / 2] {
            low[i] = true;
        }
    }
    let moments = |want: bool| {
        let v: Vec<f64> = y.iter().zip(&low).filter(|(_, l)| **l == want).map(|(v, _)| *v).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
        (m, var.max(var_floor))
    };
    let (m0, v0) = moments(true);
    let (m1, v1) = moments(false);
    Params {
        mu: [m0, m1],
        var: [v0, v1],
        p: [[0.95, 0.05], [0.05, 0.95]],
        init: [0.5, 0.5],
    }
}

fn perturbed(base: &Params, rng: &mut impl Rng) -> Params {
    let jitter: Normal<f64> = Normal::new(0.0, 0.5).expect("valid normal");
    let mut th = *base;
    for s in 0..2 {
        th.var[s] *= jitter.sample(rng).exp();
        th.mu[s] += 0.25 * th.var[s].sqrt() * jitter.sample(rng);
        let stay = rng.random_range(0.6..0.99);
        th.p[s][s] = stay;
        th.p[s][1 - s] = 1.0 - stay;
    }
    th
}

/// Run EM from `start`; the error carries the trace when it does not converge.
fn run_em(y: &[f64], start: Params, opts: &RegimeOptions, var_floor: f64) -> std::result::Result<(Params, Pass, Vec<f64>), Vec<f64>> {
    let mut th = start;
    let mut pass = hamilton_filter(y, &th);
    let mut trace = vec![pass.ll];
    for _ in 0..opts.max_iter {
        let next = em_step(y, &th, &pass, var_floor);
        let next_pass = hamilton_filter(y, &next);
        let gain = next_pass.ll - pass.ll;
        th = next;
        pass = next_pass;
        trace.push(pass.ll);
        if gain.abs() < opts.tol * (1.0 + pass.ll.abs()) {
            return Ok((th, pass, trace));
        }
    }
    Err(trace)
}

/// Fit the switching model by EM from a 2-means start plus random restarts,
/// keeping the highest likelihood.
pub fn markov_switching_fit(y: &[f64], opts: &RegimeOptions) -> Result<RegimePath> {
    if y.len() < 100 {
        return Err(Error::InsufficientData {
            needed: 100,
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regime series".into()));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let total_var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let var_floor = (1e-6 * total_var).max(1e-300);

    let base = two_means_start(y, var_floor);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![base];
    starts.extend((0..opts.restarts).map(|_| perturbed(&base, &mut rng)));

    let mut best: Option<(Params, Pass, Vec<f64>)> = None;
    let mut failures = Vec::new();
    for start in starts {
        match run_em(y, start, opts, var_floor) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.1.ll > b.1.ll) {
                    best = Some(fit);
                }
            }
            Err(trace) => failures.push(trace),
        }
    }
    let Some((mut th, mut pass, trace)) = best else {
        let tail: Vec<String> = failures
            .iter()
            .map(|t| format!("{:.6}", t.last().copied().unwrap_or(f64::NAN)))
            .collect();
        return Err(Error::Fit(format!(
            "EM did not converge in {} iterations from any start (final log-likelihoods {})",
            opts.max_iter,
            tail.join(", ")
        )));
    };
    if th.var[1] < th.var[0] {
        th.mu.swap(0, 1);
        th.var.swap(0, 1);
        th.p = [[th.p[1][1], th.p[1][0]], [th.p[0][1], th.p[0][0]]];
        for f in &mut pass.filtered {
            f.swap(0, 1);
        }
    }
    Ok(RegimePath {
        mu: th.mu,
        sigma: [th.var[0].sqrt(), th.var[1].sqrt()],
        transition: th.p,
        high: pass.filtered.iter().map(|p| p[0] < 0.5).collect(),
        filtered: pass.filtered,
        log_likelihood: pass.ll,
        trace,
    })
}

/// Split dates at the median: strictly above is high, everything else low.
pub fn median_split(y: &[f64]) -> (Vec<bool>, Vec<bool>) {
    let m = crate::stats::median(y);
    let high: Vec<bool> = y.iter().map(|v| *v > m).collect();
    let low = high.iter().map(|h| !h).collect();
    (high, low)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_split_examples() {
        assert_eq!(median_split(&[1.0, 2.0, 3.0, 4.0]).0, [false, false, true, true]);
        assert_eq!(median_split(&[5.0; 4]).1, [true; 4]);
        assert_eq!(median_split(&[1.0]), (vec![false], vec![true]));
    }
}
