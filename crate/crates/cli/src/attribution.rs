//! Explaining the latent factors of each tuned method with observed proxies.
//!
//! Each window refits the method at a fixed number of factors (the sparsity
//! penalty is still chosen on the validation block), then regresses every
//! factor on the proxies and, separately, on the lasso features.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use latentmv_core::attribution::{explain_factors, group_importance, lasso_importance, load_grouping};
use latentmv_core::backtest::{fit_factors, validate_select, TuningContext};
use latentmv_core::data::{eligible_assets, load_factor_series, rank_transform_along, FactorSeries, Month};
use latentmv_core::linalg::{fill_missing, select_columns};
use latentmv_core::stats::five_number_summary;
use latentmv_core::{FactorMethod, HyperGrid, ReturnsPanel};
use nalgebra::{DMatrix, DVector};

use crate::config::RunConfig;
use crate::output::OutputDir;
use crate::Failure;

const LASSO_PATH: usize = 50;

struct Source {
    series: FactorSeries,
    columns: Vec<String>,
}

impl Source {
    fn load(path: &Path, drop: &str) -> Result<Self, Failure> {
        let series =
            load_factor_series(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        let columns = series.names.iter().filter(|n| *n != drop).cloned().collect();
        Ok(Self { series, columns })
    }

    fn window(&self, dates: &[Month]) -> latentmv_core::Result<DMatrix<f64>> {
        self.series.aligned(dates, &self.columns)
    }
}

#[derive(Default)]
struct Acc {
    windows: usize,
    adj_r2: Vec<f64>,
    importance: Vec<f64>,
    /// Per proxy, t-statistics over windows and factors.
    t_stats: Vec<Vec<f64>>,
    lasso: Vec<f64>,
    lasso_fits: usize,
}

fn add(into: &mut Vec<f64>, v: &[f64]) {
    if into.is_empty() {
        into.resize(v.len(), 0.0);
    }
    for (a, b) in into.iter_mut().zip(v) {
        *a += b;
    }
}

fn to_100(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter().map(|x| 100.0 * x / s).collect()
    } else {
        vec![0.0; v.len()]
    }
}

fn window_seed(seed: u64, end: usize, method: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D)
        .wrapping_add((end as u64) << 16)
        .wrapping_add(method as u64)
}

pub fn run(cfg: &RunConfig, panel: &ReturnsPanel, out: &mut OutputDir) -> Result<(), Failure> {
    let mut methods: Vec<(FactorMethod, HyperGrid)> = Vec::new();
    for s in cfg.strategies.iter().filter(|s| s.method.is_tuned()) {
        if !methods.iter().any(|(m, _)| *m == s.method) {
            methods.push((s.method, s.grid.clone()));
        }
    }
    if methods.is_empty() {
        return Err(Failure::Usage("attribution needs at least one latent-factor strategy".into()));
    }
    let proxies = cfg.proxies.as_deref().map(|p| Source::load(p, &cfg.rf_column)).transpose()?;
    let features = cfg.lasso_features.as_deref().map(|p| Source::load(p, &cfg.rf_column)).transpose()?;
    if proxies.is_none() && features.is_none() {
        return Err(Failure::Usage("attribution needs 'proxies' or 'lasso_features' in the config".into()));
    }
    let grouping: Option<HashMap<String, String>> = match &cfg.grouping {
        Some(p) => Some(load_grouping(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let k = cfg.attribution_k;
    let l = cfg.window.length;
    if panel.n_dates() < l + 1 {
        return Err(Failure::Runtime(format!("panel has {} dates, fewer than the window plus one", panel.n_dates())));
    }

    let mut accs: BTreeMap<String, Acc> = BTreeMap::new();
    for end in (l - 1..panel.n_dates() - 1).step_by(cfg.window.step) {
        let assets = match eligible_assets(panel, end, l, &cfg.rules) {
            Ok(a) if a.len() > k => a,
            Ok(a) => {
                log::warn!("window ending {}: {} assets, too few for {k} factors", panel.dates[end], a.len());
                continue;
            }
            Err(e) => {
                log::warn!("window ending {}: {e}", panel.dates[end]);
                continue;
            }
        };
        let rows: Vec<usize> = (end + 1 - l..=end).collect();
        let dates: Vec<Month> = rows.iter().map(|&t| panel.dates[t]).collect();
        let r = select_columns(&latentmv_core::linalg::select_rows(&panel.returns, &rows), &assets);
        let x = fill_missing(&rank_transform_along(&r, cfg.rank_axis), 0.0);
        let p = proxies.as_ref().map(|s| s.window(&dates)).transpose().map_err(|e| Failure::Runtime(e.to_string()))?;
        let z = features.as_ref().map(|s| s.window(&dates)).transpose().map_err(|e| Failure::Runtime(e.to_string()))?;

        for (mi, (method, grid)) in methods.iter().enumerate() {
            let label = method.to_string();
            let ctx = TuningContext {
                ae: &grid.ae,
                validation_fraction: cfg.window.validation_fraction,
                seed: window_seed(cfg.seed, end, mi),
            };
            let points: Vec<_> = grid.points(*method).into_iter().filter(|h| h.k == k).collect();
            if points.is_empty() {
                log::warn!("{label}: the grid has no point with {k} factors");
                continue;
            }
            let fitted = (|| {
                let chosen = if points.len() > 1 { validate_select(&r, &x, *method, &points, &ctx)?.chosen } else { points[0] };
                fit_factors(&r, &x, *method, &chosen, &ctx)
            })();
            let f = match fitted {
                Ok(f) => f,
                Err(e) => {
                    log::warn!("{label}, window ending {}: {e}", panel.dates[end]);
                    continue;
                }
            };
            let acc = accs.entry(label.clone()).or_default();
            acc.windows += 1;
            if let Some(p) = &p {
                match explain_factors(&f, p, cfg.nw_lags) {
                    Ok(reports) => {
                        let mut adj = vec![0.0; reports.len()];
                        for (i, rep) in reports.iter().enumerate() {
                            adj[i] = rep.adj_r2;
                            add(&mut acc.importance, &rep.importance);
                            if acc.t_stats.is_empty() {
                                acc.t_stats.resize(rep.t_stats.len() - 1, Vec::new());
                            }
                            for (j, t) in rep.t_stats.iter().skip(1).enumerate() {
                                acc.t_stats[j].push(*t);
                            }
                        }
                        add(&mut acc.adj_r2, &adj);
                    }
                    Err(e) => log::warn!("{label}, window ending {}: {e}", panel.dates[end]),
                }
            }
            if let Some(z) = &z {
                for col in f.column_iter() {
                    let y = DVector::from_column_slice(col.as_slice());
                    match lasso_importance(&y, z, cfg.window.validation_fraction, LASSO_PATH) {
                        Ok(li) => {
                            add(&mut acc.lasso, &li.importance);
                            acc.lasso_fits += 1;
                        }
                        Err(e) => log::warn!("{label}, window ending {}: {e}", panel.dates[end]),
                    }
                }
            }
        }
    }

    if let Some(src) = &proxies {
        out.write_with("attribution_adj_r2.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            let mut header = vec!["method".to_string(), "windows".into()];
            header.extend((1..=k).map(|i| format!("factor_{i}")));
            w.write_record(&header)?;
            for (label, acc) in &accs {
                let mut row = vec![label.clone(), acc.windows.to_string()];
                row.extend(acc.adj_r2.iter().map(|v| (100.0 * v / acc.windows as f64).to_string()));
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(())
        })?;
        out.write_with("attribution_importance.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["method", "proxy", "importance"])?;
            for (label, acc) in &accs {
                for (name, v) in src.columns.iter().zip(to_100(&acc.importance)) {
                    w.write_record([label.as_str(), name, &v.to_string()])?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
        out.write_with("attribution_tstats.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["method", "proxy", "min", "q1", "median", "q3", "max"])?;
            for (label, acc) in &accs {
                for (name, ts) in src.columns.iter().zip(&acc.t_stats) {
                    let s = five_number_summary(ts);
                    w.write_record([
                        label.clone(),
                        name.clone(),
                        s.min.to_string(),
                        s.q1.to_string(),
                        s.median.to_string(),
                        s.q3.to_string(),
                        s.max.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
    }
    if let Some(src) = &features {
        out.write_with("attribution_lasso.csv", |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["method", "variable", "importance"])?;
            for (label, acc) in accs.iter().filter(|(_, a)| a.lasso_fits > 0) {
                for (name, v) in src.columns.iter().zip(to_100(&acc.lasso)) {
                    w.write_record([label.as_str(), name, &v.to_string()])?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
        if let Some(grouping) = &grouping {
            out.write_with("attribution_group_importance.csv", |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["method", "group", "importance"])?;
                for (label, acc) in accs.iter().filter(|(_, a)| a.lasso_fits > 0) {
                    let named: Vec<(String, f64)> = src.columns.iter().cloned().zip(acc.lasso.iter().copied()).collect();
                    for (g, v) in group_importance(&named, grouping)? {
                        w.write_record([label.as_str(), &g, &v.to_string()])?;
                    }
                }
                w.flush()?;
                Ok(())
            })?;
        }
    }
    Ok(())
}
