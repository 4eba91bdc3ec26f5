use serde::{Deserialize, Serialize};

use super::{Month, ReturnsPanel};
use crate::{Error, Result};

/// Eligibility rules applied at the end of every estimation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseRules {
    /// Minimum fraction of in-window months with a return.
    pub min_history_fraction: f64,
    /// Price at the window end must be strictly above this.
    pub min_price: f64,
    pub top_n_by_cap: usize,
    /// Exclude assets without a return in the month after the window.
    pub require_next_return: bool,
}

impl Default for UniverseRules {
    fn default() -> Self {
        Self {
            min_history_fraction: 0.975,
            min_price: 5.0,
            top_n_by_cap: 100,
            require_next_return: true,
        }
    }
}

impl UniverseRules {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_history_fraction > 0.0 && self.min_history_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "min_history_fraction {} must lie in (0, 1]",
                self.min_history_fraction
            )));
        }
        if self.top_n_by_cap == 0 {
            return Err(Error::InvalidParameter("top_n_by_cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Column indices of the assets eligible for the window ending at row `end`
/// (inclusive) of length `window_len`, ordered by market cap (largest first,
/// ties by identifier).
///
/// Price and cap rules are skipped when the panel has no such column. An asset
/// with no cap observation at the window end ranks after every asset that has one.
pub fn eligible_assets(
    panel: &ReturnsPanel,
    end: usize,
    window_len: usize,
    rules: &UniverseRules,
) -> Result<Vec<usize>> {
    rules.validate()?;
    if end >= panel.n_dates() || end + 1 < window_len {
        return Err(Error::InsufficientData {
            needed: window_len,
            got: (end + 1).min(panel.n_dates()),
        });
    }
    let start = end + 1 - window_len;
    let needed = rules.min_history_fraction * window_len as f64 - 1e-9;

    let mut eligible: Vec<(usize, f64)> = Vec::new();
    for j in 0..panel.n_assets() {
        let present = (start..=end)
            .filter(|&t| !panel.returns[(t, j)].is_nan())
            .count();
        if (present as f64) < needed {
            continue;
        }
        if let Some(prices) = &panel.prices {
            let p = prices[(end, j)];
            if p.is_nan() || p <= rules.min_price {
                continue;
            }
        }
        if rules.require_next_return
            && (end + 1 >= panel.n_dates() || panel.returns[(end + 1, j)].is_nan())
        {
            continue;
        }
        let cap = panel
            .market_caps
            .as_ref()
            .map(|c| c[(end, j)])
            .filter(|c| !c.is_nan())
            .unwrap_or(f64::NEG_INFINITY);
        eligible.push((j, cap));
    }
    eligible.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| panel.assets[a.0].cmp(&panel.assets[b.0]))
    });
    eligible.truncate(rules.top_n_by_cap);
    if eligible.len() < 2 {
        return Err(Error::InsufficientUniverse {
            date: panel.dates[end].to_string(),
            found: eligible.len(),
        });
    }
    Ok(eligible.into_iter().map(|(j, _)| j).collect())
}

/// Asset identifiers eligible for the window of length `window_len` ending at
/// `window_end`.
pub fn filter_universe(
    panel: &ReturnsPanel,
    window_end: Month,
    window_len: usize,
    rules: &UniverseRules,
) -> Result<Vec<String>> {
    let end = panel
        .date_index(window_end)
        .ok_or_else(|| Error::InvalidParameter(format!("{window_end} is not a panel date")))?;
    Ok(eligible_assets(panel, end, window_len, rules)?
        .into_iter()
        .map(|j| panel.assets[j].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn panel(returns: DMatrix<f64>, prices: DMatrix<f64>, caps: DMatrix<f64>) -> ReturnsPanel {
        let t = returns.nrows();
        let n = returns.ncols();
        let start: Month = "2000-01".parse().unwrap();
        ReturnsPanel::new(
            (0..t).map(|i| start.plus(i as i64)).collect(),
            (0..n).map(|j| format!("A{j}")).collect(),
            returns,
            Some(prices),
            Some(caps),
        )
        .unwrap()
    }

    #[test]
    fn history_fraction_threshold() {
        // 241 dates: window of 240 ending at row 239 plus next month.
        let mut r = DMatrix::from_element(241, 3, 0.01);
        for t in 0..7 {
            r[(t * 10, 0)] = f64::NAN; // 7 missing -> 233/240 < 97.5%
        }
        for t in 0..6 {
            r[(t * 10, 1)] = f64::NAN; // 6 missing -> 234/240 = 97.5%
        }
        let p = DMatrix::from_element(241, 3, 10.0);
        let c = DMatrix::from_element(241, 3, 1.0);
        let pan = panel(r, p, c);
        let out = filter_universe(&pan, pan.dates[239], 240, &UniverseRules::default()).unwrap();
        assert_eq!(out, ["A1", "A2"]);
    }

    #[test]
    fn price_rule_is_strict() {
        let r = DMatrix::from_element(11, 3, 0.0);
        let mut p = DMatrix::from_element(11, 3, 10.0);
        p[(9, 0)] = 4.99;
        p[(9, 1)] = 5.01;
        let c = DMatrix::from_element(11, 3, 1.0);
        let pan = panel(r, p, c);
        let out = filter_universe(&pan, pan.dates[9], 10, &UniverseRules::default()).unwrap();
        assert_eq!(out, ["A1", "A2"]);
    }

    #[test]
    fn top_n_by_cap_keeps_largest() {
        let r = DMatrix::from_element(11, 3, 0.0);
        let p = DMatrix::from_element(11, 3, 10.0);
        let c = DMatrix::from_fn(11, 3, |_, j| [5.0, 9.0, 7.0][j]);
        let pan = panel(r, p, c);
        let rules = UniverseRules {
            top_n_by_cap: 2,
            ..Default::default()
        };
        let out = filter_universe(&pan, pan.dates[9], 10, &rules).unwrap();
        assert_eq!(out, ["A1", "A2"]);
    }

    #[test]
    fn next_month_return_required() {
        let mut r = DMatrix::from_element(11, 3, 0.0);
        r[(10, 2)] = f64::NAN;
        let pan = panel(r, DMatrix::from_element(11, 3, 10.0), DMatrix::from_element(11, 3, 1.0));
        let out = filter_universe(&pan, pan.dates[9], 10, &UniverseRules::default()).unwrap();
        assert_eq!(out, ["A0", "A1"]);
        let lax = UniverseRules {
            require_next_return: false,
            ..Default::default()
        };
        assert_eq!(filter_universe(&pan, pan.dates[9], 10, &lax).unwrap().len(), 3);
    }

    #[test]
    fn too_few_assets_is_an_error() {
        let r = DMatrix::from_element(11, 2, 0.0);
        let mut p = DMatrix::from_element(11, 2, 10.0);
        p[(9, 0)] = 1.0;
        let pan = panel(r, p, DMatrix::from_element(11, 2, 1.0));
        assert!(matches!(
            filter_universe(&pan, pan.dates[9], 10, &UniverseRules::default()),
            Err(Error::InsufficientUniverse { found: 1, .. })
        ));
        assert!(matches!(
            filter_universe(&pan, pan.dates[5], 10, &UniverseRules::default()),
            Err(Error::InsufficientData { .. })
        ));
    }
}
