//! Primal active-set method for
//!
//! ```text
//! min  w' S w + kappa * sum_i |w_i - w0_i|   s.t.  sum w = 1,  w >= 0
//! ```
//!
//! Each coordinate's domain `[0, inf)` is cut at its kink `w0_i` into segments
//! on which the objective is an ordinary quadratic with a linear term `+-kappa`.
//! A coordinate is either pinned at a breakpoint (0 or the kink) or free inside
//! one segment. With `kappa = 0` and no kinks this is the textbook long-only
//! active-set method.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    /// Pinned at `value` (0 or the kink).
    Pinned(f64),
    /// Free in `[lo, hi]` with linear coefficient `slope`.
    Free { lo: f64, hi: f64, slope: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct Problem<'a> {
    pub sigma: &'a DMatrix<f64>,
    /// Kink locations and penalty; `None` for the plain long-only problem.
    pub penalty: Option<(&'a DVector<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub weights: DVector<f64>,
    pub iterations: usize,
    pub multiplier: f64,
}

const STEP_TOL: f64 = 1e-13;
const DUAL_TOL: f64 = 1e-13;

impl Problem<'_> {
    fn n(&self) -> usize {
        self.sigma.nrows()
    }

    fn kink(&self, i: usize) -> Option<f64> {
        self.penalty.and_then(|(w0, _)| (w0[i] > 0.0).then_some(w0[i]))
    }

    fn kappa(&self) -> f64 {
        self.penalty.map_or(0.0, |p| p.1)
    }

    /// Linear coefficient of the segment lying above / below `value`.
    fn slope_above(&self, i: usize, value: f64) -> f64 {
        match self.kink(i) {
            Some(k) if value < k => -self.kappa(),
            _ => self.kappa(),
        }
    }

    fn slope_below(&self, i: usize, value: f64) -> Option<f64> {
        match self.kink(i) {
            Some(k) if value > 0.0 && value <= k => Some(-self.kappa()),
            _ if value > 0.0 => Some(self.kappa()),
            _ => None,
        }
    }

    fn segment_above(&self, i: usize, value: f64) -> State {
        match self.kink(i) {
            Some(k) if value < k => State::Free {
                lo: 0.0,
                hi: k,
                slope: -self.kappa(),
            },
            Some(k) => State::Free {
                lo: k,
                hi: f64::INFINITY,
                slope: self.kappa(),
            },
            None => State::Free {
                lo: 0.0,
                hi: f64::INFINITY,
                slope: self.kappa(),
            },
        }
    }

    fn segment_below(&self, i: usize, value: f64) -> State {
        match self.kink(i) {
            Some(k) if value <= k => State::Free {
                lo: 0.0,
                hi: k,
                slope: -self.kappa(),
            },
            Some(k) => State::Free {
                lo: k,
                hi: f64::INFINITY,
                slope: self.kappa(),
            },
            None => State::Free {
                lo: 0.0,
                hi: f64::INFINITY,
                slope: self.kappa(),
            },
        }
    }

    /// State of a coordinate sitting at `value`.
    fn classify(&self, i: usize, value: f64) -> State {
        if value == 0.0 || self.kink(i) == Some(value) {
            State::Pinned(value)
        } else {
            self.segment_above(i, value)
        }
    }

    /// Minimise over the free coordinates with the pinned ones held fixed.
    /// Returns the free minimiser (in free-set order) and the multiplier of the
    /// budget constraint.
    fn equality_step(&self, w: &DVector<f64>, states: &[State], free: &[usize]) -> Result<(Vec<f64>, f64)> {
        let m = free.len();
        let mut pinned_sum = 0.0;
        let mut is_free = vec![false; self.n()];
        for &i in free {
            is_free[i] = true;
        }
        for (i, s) in states.iter().enumerate() {
            if let State::Pinned(v) = s {
                pinned_sum += v;
            }
            debug_assert!(is_free[i] == matches!(s, State::Free { .. }));
        }
        let mut kkt = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = 2.0 * self.sigma[(i, j)];
            }
            kkt[(a, m)] = -1.0;
            kkt[(m, a)] = 1.0;
            let slope = match states[i] {
                State::Free { slope, .. } => slope,
                State::Pinned(_) => unreachable!(),
            };
            let cross: f64 = (0..self.n())
                .filter(|&j| !is_free[j])
                .map(|j| self.sigma[(i, j)] * w[j])
                .sum();
            rhs[a] = -slope - 2.0 * cross;
        }
        rhs[m] = 1.0 - pinned_sum;
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular equality-constrained subproblem".into()))?;
        Ok((sol.rows(0, m).iter().copied().collect(), sol[m]))
    }

    pub(crate) fn solve(&self) -> Result<Solution> {
        let n = self.n();
        let mut w = DVector::from_element(n, 1.0 / n as f64);
        let mut states: Vec<State> = (0..n).map(|i| self.classify(i, w[i])).collect();
        let max_iter = 50 * n + 200;
        let mut multiplier = 0.0;

        for iter in 1..=max_iter {
            let free: Vec<usize> = (0..n).filter(|&i| matches!(states[i], State::Free { .. })).collect();
            if !free.is_empty() {
                let (target, lambda) = self.equality_step(&w, &states, &free)?;
                let step: Vec<f64> = free.iter().zip(&target).map(|(&i, t)| t - w[i]).collect();
                let size = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
                multiplier = lambda;
                if size > STEP_TOL {
                    // ratio test against the segment bounds; lowest index wins ties
                    let mut alpha = 1.0;
                    let mut blocking: Option<(usize, f64)> = None;
                    for (a, &i) in free.iter().enumerate() {
                        let State::Free { lo, hi, .. } = states[i] else { unreachable!() };
                        let p = step[a];
                        let (bound, ratio) = if p < 0.0 {
                            (lo, (lo - w[i]) / p)
                        } else if p > 0.0 && hi.is_finite() {
                            (hi, (hi - w[i]) / p)
                        } else {
                            continue;
                        };
                        if ratio < alpha {
                            alpha = ratio.max(0.0);
                            blocking = Some((i, bound));
                        }
                    }
                    for (a, &i) in free.iter().enumerate() {
                        w[i] += alpha * step[a];
                    }
                    if let Some((i, bound)) = blocking {
                        w[i] = bound;
                        states[i] = State::Pinned(bound);
                        continue;
                    }
                }
            }

            // optimality of the pinned coordinates
            let g = self.sigma * &w * 2.0;
            let mut worst: Option<(usize, f64, bool)> = None;
            let pinned: Vec<usize> = (0..n).filter(|&i| matches!(states[i], State::Pinned(_))).collect();
            if free.is_empty() {
                // no free coordinate fixes the multiplier: pick the best pair move
                let up = pinned
                    .iter()
                    .map(|&i| (i, g[i] + self.slope_above(i, w[i])))
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                let down = pinned
                    .iter()
                    .filter_map(|&i| self.slope_below(i, w[i]).map(|s| (i, g[i] + s)))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
                match (up, down) {
                    (Some((j, u)), Some((i, d))) if u < d - DUAL_TOL => {
                        states[j] = self.segment_above(j, w[j]);
                        states[i] = self.segment_below(i, w[i]);
                        continue;
                    }
                    (Some((_, u)), Some((_, d))) => multiplier = 0.5 * (u + d),
                    (Some((_, u)), None) => multiplier = u,
                    _ => {}
                }
                return Ok(Solution {
                    weights: w,
                    iterations: iter,
                    multiplier,
                });
            }
            for &i in &pinned {
                let up = g[i] + self.slope_above(i, w[i]) - multiplier;
                if up < -DUAL_TOL && worst.is_none_or(|(_, v, _)| up < v) {
                    worst = Some((i, up, true));
                }
                if let Some(s) = self.slope_below(i, w[i]) {
                    let down = -(g[i] + s - multiplier);
                    if down < -DUAL_TOL && worst.is_none_or(|(_, v, _)| down < v) {
                        worst = Some((i, down, false));
                    }
                }
            }
            match worst {
                None => {
                    return Ok(Solution {
                        weights: w,
                        iterations: iter,
                        multiplier,
                    })
                }
                Some((i, _, upward)) => {
                    states[i] = if upward {
                        self.segment_above(i, w[i])
                    } else {
                        self.segment_below(i, w[i])
                    };
                }
            }
        }
        Err(Error::Solver(format!("active-set method did not terminate in {max_iter} iterations")))
    }
}
