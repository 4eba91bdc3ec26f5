use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::tuning::{fit_factors, validate_select, TuningContext};
use super::turnover::{drifted_holdings, turnover_series};
use super::{BacktestResult, FactorMethod, HyperGrid, HyperParams, Rebalance, StrategySpec, WindowGap};
use crate::cov::{compare_structure, factor_covariance, sample_cov, CovSpec, CovarianceEstimate, DynamicOptions, StructureComparison};
use crate::data::{eligible_assets, rank_transform_along, FactorSeries, RankAxis, ReturnsPanel, UniverseRules, WindowSpec};
use crate::linalg::{fill_missing, select_columns};
use crate::opt::{solve, OptimizerKind};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    pub dynamic: DynamicOptions,
    /// Evaluate windows on the rayon pool.
    pub parallel: bool,
    pub config_hash: Option<String>,
    /// Direction of the rank transform applied to the predictors.
    pub rank_axis: RankAxis,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            dynamic: DynamicOptions::default(),
            parallel: true,
            config_hash: None,
            rank_axis: RankAxis::CrossSection,
        }
    }
}

/// Backtest a single strategy with default options.
pub fn run_backtest(
    panel: &ReturnsPanel,
    strategy: &StrategySpec,
    window: &WindowSpec,
    rules: &UniverseRules,
) -> Result<BacktestResult> {
    run_backtest_with(panel, strategy, window, rules, None, &RunOptions::default())
}

pub fn run_backtest_with(
    panel: &ReturnsPanel,
    strategy: &StrategySpec,
    window: &WindowSpec,
    rules: &UniverseRules,
    factors: Option<&FactorSeries>,
    opts: &RunOptions,
) -> Result<BacktestResult> {
    let mut out = run_backtests(panel, std::slice::from_ref(strategy), window, rules, factors, opts)?;
    Ok(out.pop().expect("one strategy in, one result out"))
}

/// Strategies that share their factor extraction.
struct Group {
    method: FactorMethod,
    grid: HyperGrid,
    columns: Vec<String>,
    members: Vec<usize>,
}

/// Per-strategy output of one window before the sequential pass.
#[derive(Debug, Clone)]
struct Prepared {
    hyper: Option<HyperParams>,
    /// Final weights, unless they depend on the previous portfolio.
    weights: Option<DVector<f64>>,
    /// Formation covariance kept for path-dependent optimisers.
    cov: Option<CovarianceEstimate>,
    structure: Option<StructureComparison>,
}

enum WindowEval {
    Gap(String),
    Done {
        universe: Vec<usize>,
        prepared: Vec<Prepared>,
    },
}

/// Run several strategies over the same windows. Strategies with the same
/// factor method and grid share the tuning and factor extraction of each
/// window, so adding covariance specs or optimisers is cheap.
///
/// Windows are evaluated independently (in parallel unless disabled); the
/// turnover-penalised optimisation and the bookkeeping then run in date order.
pub fn run_backtests(
    panel: &ReturnsPanel,
    strategies: &[StrategySpec],
    window: &WindowSpec,
    rules: &UniverseRules,
    factors: Option<&FactorSeries>,
    opts: &RunOptions,
) -> Result<Vec<BacktestResult>> {
    window.validate()?;
    rules.validate()?;
    for s in strategies {
        s.validate()?;
        if s.method.is_observed() && factors.is_none() {
            return Err(Error::Config(format!("{} needs a factor series", s.label())));
        }
    }
    let l = window.length;
    if panel.n_dates() < l + 1 {
        return Err(Error::InsufficientData {
            needed: l + 1,
            got: panel.n_dates(),
        });
    }
    let ends: Vec<usize> = (l - 1..panel.n_dates() - 1).step_by(window.step).collect();

    let mut groups: Vec<Group> = Vec::new();
    for (i, s) in strategies.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|g| g.method == s.method && g.grid == s.grid && g.columns == s.observed_columns)
        {
            Some(g) => g.members.push(i),
            None => groups.push(Group {
                method: s.method,
                grid: s.grid.clone(),
                columns: s.observed_columns.clone(),
                members: vec![i],
            }),
        }
    }

    let evaluate = |&end: &usize| evaluate_window(panel, strategies, &groups, end, window, rules, factors, opts);
    let evals: Vec<Result<WindowEval>> = if opts.parallel {
        ends.par_iter().map(evaluate).collect()
    } else {
        ends.iter().map(evaluate).collect()
    };
    let evals: Vec<WindowEval> = evals.into_iter().collect::<Result<_>>()?;

    let mut results = Vec::with_capacity(strategies.len());
    for (si, strategy) in strategies.iter().enumerate() {
        let mut res = BacktestResult {
            strategy: strategy.clone(),
            rebalances: Vec::new(),
            gaps: Vec::new(),
            turnover: Vec::new(),
            seed: opts.seed,
            config_hash: opts.config_hash.clone(),
        };
        for (&end, eval) in ends.iter().zip(&evals) {
            let (universe, prepared) = match eval {
                WindowEval::Gap(reason) => {
                    res.gaps.push(WindowGap {
                        window_end: panel.dates[end],
                        reason: reason.clone(),
                    });
                    continue;
                }
                WindowEval::Done { universe, prepared } => (universe, &prepared[si]),
            };
            let weights = match (&prepared.weights, &prepared.cov) {
                (Some(w), _) => w.clone(),
                (None, Some(cov)) => {
                    let w0 = res.rebalances.last().and_then(|prev| previous_weights(prev, end, universe, panel));
                    solve(strategy.optimizer, cov, w0.as_ref())
                        .map_err(|e| in_window(strategy, panel, end, e))?
                        .weights
                }
                (None, None) => unreachable!("every prepared window has weights or a covariance"),
            };
            let next = DVector::from_iterator(
                universe.len(),
                universe.iter().map(|&j| {
                    let v = panel.returns[(end + 1, j)];
                    if v.is_nan() {
                        log::warn!("{}: missing return for {} treated as 0", panel.dates[end + 1], panel.assets[j]);
                        0.0
                    } else {
                        v
                    }
                }),
            );
            res.rebalances.push(Rebalance {
                window_end: panel.dates[end],
                return_date: panel.dates[end + 1],
                end_row: end,
                assets: universe.iter().map(|&j| panel.assets[j].clone()).collect(),
                asset_columns: universe.clone(),
                portfolio_return: weights.dot(&next),
                weights,
                hyper: prepared.hyper,
                structure: prepared.structure,
            });
        }
        res.turnover = turnover_series(&res, panel);
        results.push(res);
    }
    Ok(results)
}

fn in_window(strategy: &StrategySpec, panel: &ReturnsPanel, end: usize, e: Error) -> Error {
    Error::Window {
        strategy: strategy.label(),
        date: panel.dates[end].to_string(),
        source: Box::new(e),
    }
}

/// Drifted previous holdings restricted to the new universe and renormalised.
fn previous_weights(prev: &Rebalance, end: usize, universe: &[usize], panel: &ReturnsPanel) -> Option<DVector<f64>> {
    let pre = drifted_holdings(prev, end, panel);
    let w = DVector::from_iterator(universe.len(), universe.iter().map(|j| pre.get(j).copied().unwrap_or(0.0)));
    let total = w.sum();
    (total > 0.0).then(|| w / total)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_window(
    panel: &ReturnsPanel,
    strategies: &[StrategySpec],
    groups: &[Group],
    end: usize,
    window: &WindowSpec,
    rules: &UniverseRules,
    factors: Option<&FactorSeries>,
    opts: &RunOptions,
) -> Result<WindowEval> {
    let l = window.length;
    let universe = match eligible_assets(panel, end, l, rules) {
        Ok(u) => u,
        Err(e @ Error::InsufficientUniverse { .. }) => {
            log::warn!("skipping window: {e}");
            return Ok(WindowEval::Gap(e.to_string()));
        }
        Err(e) => return Err(e),
    };
    let start = end + 1 - l;
    let rows: Vec<usize> = (start..=end).collect();
    let r = crate::linalg::select_rows(&select_columns(&panel.returns, &universe), &rows);
    let x = fill_missing(&rank_transform_along(&r, opts.rank_axis), 0.0);
    let n = universe.len();
    let sample = sample_cov(&r).map(|s| s.with_date(panel.dates[end]));

    let mut prepared: Vec<Option<Prepared>> = vec![None; strategies.len()];
    for g in groups {
        let first = &strategies[g.members[0]];
        let fail = |e: Error| in_window(first, panel, end, e);
        let (hyper, f): (Option<HyperParams>, Option<DMatrix<f64>>) = match g.method {
            FactorMethod::Ew | FactorMethod::Sample => (None, None),
            FactorMethod::Market | FactorMethod::Ff3 => {
                let series = factors.expect("checked above");
                let f = series.aligned(&panel.dates[start..=end], &g.columns).map_err(fail)?;
                (None, Some(f))
            }
            method => {
                let ctx = TuningContext {
                    ae: &g.grid.ae,
                    validation_fraction: window.validation_fraction,
                    seed: opts.seed.wrapping_mul(1_000_003).wrapping_add(end as u64),
                };
                let sel = validate_select(&r, &x, method, &g.grid.points(method), &ctx).map_err(fail)?;
                let f = fit_factors(&r, &x, method, &sel.chosen, &ctx).map_err(fail)?;
                (Some(sel.chosen), Some(f))
            }
        };

        let mut covs: Vec<(CovSpec, CovarianceEstimate)> = Vec::new();
        for &si in &g.members {
            let s = &strategies[si];
            let fail = |e: Error| in_window(s, panel, end, e);
            if s.method == FactorMethod::Ew {
                prepared[si] = Some(Prepared {
                    hyper: None,
                    weights: Some(DVector::from_element(n, 1.0 / n as f64)),
                    cov: None,
                    structure: None,
                });
                continue;
            }
            let spec = s.effective_cov();
            let cov = match covs.iter().find(|(c, _)| *c == spec) {
                Some((_, c)) => c.clone(),
                None => {
                    let c = match &f {
                        None => match &sample {
                            Ok(c) => c.clone(),
                            Err(e) => return Err(fail(Error::Fit(e.to_string()))),
                        },
                        Some(f) => factor_covariance(spec, &r, f, &opts.dynamic)
                            .map_err(fail)?
                            .with_date(panel.dates[end]),
                    };
                    covs.push((spec, c.clone()));
                    c
                }
            };
            let structure = sample.as_ref().ok().and_then(|smp| compare_structure(&cov, smp).ok());
            let path_dependent = matches!(s.optimizer, OptimizerKind::TurnoverPenalized { kappa } if kappa > 0.0);
            prepared[si] = Some(if path_dependent {
                Prepared {
                    hyper,
                    weights: None,
                    cov: Some(cov),
                    structure,
                }
            } else {
                Prepared {
                    hyper,
                    weights: Some(solve(s.optimizer, &cov, None).map_err(fail)?.weights),
                    cov: None,
                    structure,
                }
            });
        }
    }
    Ok(WindowEval::Done {
        universe,
        prepared: prepared.into_iter().map(|p| p.expect("every strategy is in a group")).collect(),
    })
}
