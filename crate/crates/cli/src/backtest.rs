use std::collections::BTreeMap;

use latentmv_core::backtest::{run_backtests, weight_stats, RunOptions, WeightStats};
use latentmv_core::data::{load_factor_series, load_panel, FactorSeries, Month, ReturnsPanel};
use latentmv_core::metrics::{summarize, write_summary_csv};
use latentmv_core::BacktestResult;

use crate::config::RunConfig;
use crate::output::{sha256_hex, Manifest, OutputDir};
use crate::Failure;

pub fn load_inputs(cfg: &RunConfig) -> Result<(ReturnsPanel, Option<FactorSeries>), Failure> {
    let panel = load_panel(&cfg.panel, &cfg.schema)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", cfg.panel.display())))?;
    let factors = match &cfg.factors {
        Some(p) => Some(load_factor_series(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?),
        None => None,
    };
    Ok((panel, factors))
}

/// Risk-free rate by month; empty (zero rate) without a factor file or column.
pub fn risk_free(cfg: &RunConfig, factors: Option<&FactorSeries>) -> BTreeMap<Month, f64> {
    let Some(f) = factors else {
        return BTreeMap::new();
    };
    match f.column(&cfg.rf_column) {
        Ok(values) => f.dates.iter().copied().zip(values).filter(|(_, v)| v.is_finite()).collect(),
        Err(_) => {
            log::warn!("factor file has no '{}' column; excess returns use a zero rate", cfg.rf_column);
            BTreeMap::new()
        }
    }
}

pub fn excess(dates: &[Month], returns: &[f64], rf: &BTreeMap<Month, f64>) -> Vec<f64> {
    dates
        .iter()
        .zip(returns)
        .map(|(d, r)| r - rf.get(d).copied().unwrap_or(0.0))
        .collect()
}

/// Observed-factor strategies must find their columns in the factor file.
fn check_columns(cfg: &RunConfig, factors: Option<&FactorSeries>) -> Result<(), Failure> {
    let mut problems = Vec::new();
    for s in cfg.strategies.iter().filter(|s| s.method.is_observed()) {
        if let Some(f) = factors {
            for c in &s.observed_columns {
                if f.column_index(c).is_none() {
                    problems.push(format!("{}: factor file has no column '{c}'", s.label()));
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(problems))
    }
}

fn write_long<F>(out: &mut OutputDir, name: &str, results: &[BacktestResult], write: F) -> Result<(), Failure>
where
    F: Fn(&BacktestResult, &mut Vec<u8>, bool) -> latentmv_core::Result<()>,
{
    out.write_with(name, |buf| {
        for (i, r) in results.iter().enumerate() {
            write(r, buf, i == 0)?;
        }
        Ok(())
    })
}

pub fn run(cfg: &RunConfig, config_bytes: &[u8], parallel: bool) -> Result<(), Failure> {
    let (panel, factors) = load_inputs(cfg)?;
    check_columns(cfg, factors.as_ref())?;
    let config_hash = sha256_hex(config_bytes);
    let opts = RunOptions {
        seed: cfg.seed,
        parallel,
        config_hash: Some(config_hash.clone()),
        rank_axis: cfg.rank_axis,
        ..Default::default()
    };
    log::info!("running {} strategies over {} dates", cfg.strategies.len(), panel.n_dates());
    let results = run_backtests(&panel, &cfg.strategies, &cfg.window, &cfg.rules, factors.as_ref(), &opts)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    for r in &results {
        for gap in &r.gaps {
            log::warn!("{}: no portfolio for window ending {}: {}", r.label(), gap.window_end, gap.reason);
        }
    }

    let rf = risk_free(cfg, factors.as_ref());
    let stats: Vec<Option<WeightStats>> = results.iter().map(|r| weight_stats(r).ok()).collect();
    let series: Vec<(String, Vec<f64>, Option<WeightStats>)> = results
        .iter()
        .zip(&stats)
        .map(|(r, ws)| (r.label(), excess(&r.return_dates(), &r.returns(), &rf), *ws))
        .collect();
    if let Some((label, _, _)) = series.iter().find(|(_, r, _)| r.len() < 2) {
        return Err(Failure::Runtime(format!(
            "{label}: fewer than two out-of-sample returns; the panel is too short for the window"
        )));
    }
    let benchmark = series.iter().position(|(l, _, _)| *l == cfg.benchmark);
    let rows = summarize(&series, benchmark, &cfg.metrics).map_err(|e| Failure::Runtime(e.to_string()))?;

    let mut out = OutputDir::new(cfg.out_dir.clone());
    write_long(&mut out, "weights.csv", &results, |r, b, h| r.write_weights_csv(b, h))?;
    write_long(&mut out, "returns.csv", &results, |r, b, h| r.write_returns_csv(b, h))?;
    write_long(&mut out, "turnover.csv", &results, |r, b, h| r.write_turnover_csv(b, h))?;
    out.write_with("structure.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["strategy", "date", "eig", "mag", "dir"])?;
        for r in &results {
            for reb in &r.rebalances {
                if let Some(s) = &reb.structure {
                    w.write_record([
                        r.label(),
                        reb.window_end.to_string(),
                        s.eig.to_string(),
                        s.mag.to_string(),
                        s.dir.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_with("gaps.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["strategy", "date", "reason"])?;
        for r in &results {
            for g in &r.gaps {
                w.write_record([r.label(), g.window_end.to_string(), g.reason.clone()])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_with("weight_stats.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["strategy", "turnover", "max", "sd_w", "mad_ew"])?;
        for (r, ws) in results.iter().zip(&stats) {
            let cells = match ws {
                Some(s) => [s.turnover, s.max, s.sd, s.mad_ew].map(|v| if v.is_finite() { v.to_string() } else { String::new() }),
                None => Default::default(),
            };
            w.write_record(std::iter::once(r.label()).chain(cells))?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_with("summary.csv", |buf| write_summary_csv(&rows, &cfg.metrics.gammas, buf))?;
    out.write("config.toml", config_bytes)?;

    let dates: Vec<Month> = results.iter().flat_map(|r| r.return_dates()).collect();
    let panel_bytes = std::fs::read(&cfg.panel).map_err(|e| Failure::Runtime(e.to_string()))?;
    let mut files = out.written.clone();
    files.push("manifest.json".into());
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config_hash,
        config_dir: std::path::absolute(&cfg.base_dir).unwrap_or_else(|_| cfg.base_dir.clone()),
        seed: cfg.seed,
        panel_sha256: sha256_hex(&panel_bytes),
        strategies: results.iter().map(|r| r.label()).collect(),
        benchmark: cfg.benchmark.clone(),
        out_of_sample_first: dates.iter().min().map(|d| d.to_string()),
        out_of_sample_last: dates.iter().max().map(|d| d.to_string()),
        files,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Failure::Runtime(e.to_string()))?;
    out.write("manifest.json", &json)?;
    println!("{} strategies written to {}", results.len(), cfg.out_dir.display());
    Ok(())
}
