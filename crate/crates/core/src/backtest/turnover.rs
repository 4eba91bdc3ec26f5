use std::collections::BTreeMap;

use nalgebra::DVector;

use super::{BacktestResult, Rebalance};
use crate::data::ReturnsPanel;
use crate::{Error, Result};

/// Weights after they drift with the returns `r` (missing treated as 0):
/// `w (1 + r) / (1 + w'r)`.
pub fn drift_weights(w: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
    let grown = DVector::from_iterator(
        w.len(),
        w.iter()
            .zip(r.iter())
            .map(|(w, r)| w * (1.0 + if r.is_nan() { 0.0 } else { *r })),
    );
    let total = grown.sum();
    if total != 0.0 {
        grown / total
    } else {
        grown
    }
}

/// Pre-rebalance weights of `prev` just before `next` is formed, keyed by
/// panel column: the old weights drift through every month from the old
/// return date up to the new window end.
pub(crate) fn drifted_holdings(prev: &Rebalance, next_end_row: usize, panel: &ReturnsPanel) -> BTreeMap<usize, f64> {
    let mut w = prev.weights.clone();
    for t in (prev.end_row + 1)..=next_end_row.min(panel.n_dates() - 1) {
        let r = DVector::from_iterator(
            prev.asset_columns.len(),
            prev.asset_columns.iter().map(|&j| panel.returns[(t, j)]),
        );
        w = drift_weights(&w, &r);
    }
    prev.asset_columns.iter().copied().zip(w.iter().copied()).collect()
}

/// `||w_new - w_pre||_1` where exited holdings count as fully sold and new
/// entrants as fully bought.
pub(crate) fn rebalance_turnover(pre: &BTreeMap<usize, f64>, next: &Rebalance) -> f64 {
    let mut to = 0.0;
    let mut seen = 0.0;
    for (j, w) in next.asset_columns.iter().zip(next.weights.iter()) {
        let old = pre.get(j).copied().unwrap_or(0.0);
        seen += old.abs();
        to += (w - old).abs();
    }
    let total: f64 = pre.values().map(|v| v.abs()).sum();
    to + (total - seen).max(0.0)
}

/// Turnover at every rebalance of `result`; the first entry is 0.
pub fn turnover_series(result: &BacktestResult, panel: &ReturnsPanel) -> Vec<f64> {
    let rebs = &result.rebalances;
    let mut out = Vec::with_capacity(rebs.len());
    for (i, reb) in rebs.iter().enumerate() {
        if i == 0 {
            out.push(0.0);
            continue;
        }
        let pre = drifted_holdings(&rebs[i - 1], reb.end_row, panel);
        out.push(rebalance_turnover(&pre, reb));
    }
    out
}

/// Net returns `(1 + r)(1 - c TO) - 1`.
pub fn apply_transaction_costs(returns: &[f64], turnover: &[f64], cost: f64) -> Result<Vec<f64>> {
    if !(cost >= 0.0) {
        return Err(Error::InvalidParameter(format!("transaction cost {cost} must be non-negative")));
    }
    if returns.len() != turnover.len() {
        return Err(Error::Shape(format!(
            "{} returns vs {} turnover values",
            returns.len(),
            turnover.len()
        )));
    }
    Ok(returns
        .iter()
        .zip(turnover)
        .map(|(r, to)| r - cost * to * (1.0 + r))
        .collect())
}

/// Date-averaged weight diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightStats {
    /// Largest weight.
    pub max: f64,
    /// Cross-sectional standard deviation (divisor N).
    pub sd: f64,
    /// Mean absolute deviation from 1/N.
    pub mad_ew: f64,
    /// Average turnover over rebalances that had a predecessor; NaN with fewer than two.
    pub turnover: f64,
}

pub fn weight_stats(result: &BacktestResult) -> Result<WeightStats> {
    let rebs = &result.rebalances;
    if rebs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (mut max, mut sd, mut mad) = (0.0, 0.0, 0.0);
    for reb in rebs {
        let w = &reb.weights;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        max += w.max();
        sd += (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        mad += w.iter().map(|x| (x - 1.0 / n).abs()).sum::<f64>() / n;
    }
    let d = rebs.len() as f64;
    let turnover = if result.turnover.len() > 1 {
        let tail = &result.turnover[1..];
        tail.iter().sum::<f64>() / tail.len() as f64
    } else {
        f64::NAN
    };
    Ok(WeightStats {
        max: max / d,
        sd: sd / d,
        mad_ew: mad / d,
        turnover,
    })
}
