use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use latentmv_core::attribution::{markov_switching_fit, median_split, RegimeOptions};
use latentmv_core::backtest::{apply_transaction_costs, WeightStats};
use latentmv_core::cov::bootstrap_structure_pvalue;
use latentmv_core::data::{load_factor_series, Month};
use latentmv_core::metrics::{summarize, write_summary_csv, SummaryRow};

use crate::backtest::{excess, load_inputs, risk_free};
use crate::config::{parse_strategy, Overrides, RunConfig};
use crate::output::{Manifest, OutputDir};
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subperiods {
    /// High/low market volatility from a two-state switching model.
    Volatility,
    /// Above/below the median of a state variable.
    Median,
}

pub struct ReportArgs {
    pub results: PathBuf,
    pub out: Option<PathBuf>,
    pub subperiods: Option<Subperiods>,
    pub state_series: Option<PathBuf>,
    pub state_column: Option<String>,
    pub costs: Option<Vec<f64>>,
    pub attribution: bool,
}

/// One strategy's stored results.
#[derive(Debug, Clone, Default)]
struct Stored {
    dates: Vec<Month>,
    returns: Vec<f64>,
    turnover: Vec<f64>,
    weights: Option<WeightStats>,
    /// `(date, eig, mag, dir)` per rebalance.
    structure: Vec<(Month, [f64; 3])>,
    /// Assets held per rebalance date.
    universe: BTreeMap<Month, usize>,
}

fn csv_reader(dir: &Path, name: &str) -> Result<csv::Reader<std::fs::File>, Failure> {
    let path = dir.join(name);
    csv::Reader::from_path(&path).map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn bad(name: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{name}: {e}"))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, Failure> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(name, format!("malformed row {:?}", rec.position().map(|p| p.line()))))
}

fn optional(rec: &csv::StringRecord, i: usize) -> f64 {
    rec.get(i).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN)
}

fn load_results(dir: &Path, labels: &[String]) -> Result<Vec<Stored>, Failure> {
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut stored = vec![Stored::default(); labels.len()];
    let slot = |rec: &csv::StringRecord, name: &str| -> Result<usize, Failure> {
        index
            .get(&rec[0])
            .copied()
            .ok_or_else(|| bad(name, format!("strategy '{}' is not in the manifest", &rec[0])))
    };

    for rec in csv_reader(dir, "returns.csv")?.records() {
        let rec = rec.map_err(|e| bad("returns.csv", e))?;
        let s = &mut stored[slot(&rec, "returns.csv")?];
        s.dates.push(field(&rec, 1, "returns.csv")?);
        s.returns.push(field(&rec, 2, "returns.csv")?);
    }
    for rec in csv_reader(dir, "turnover.csv")?.records() {
        let rec = rec.map_err(|e| bad("turnover.csv", e))?;
        let i = slot(&rec, "turnover.csv")?;
        stored[i].turnover.push(field(&rec, 2, "turnover.csv")?);
    }
    for rec in csv_reader(dir, "weight_stats.csv")?.records() {
        let rec = rec.map_err(|e| bad("weight_stats.csv", e))?;
        let i = slot(&rec, "weight_stats.csv")?;
        let max = optional(&rec, 2);
        if max.is_finite() {
            stored[i].weights = Some(WeightStats {
                turnover: optional(&rec, 1),
                max,
                sd: optional(&rec, 3),
                mad_ew: optional(&rec, 4),
            });
        }
    }
    for rec in csv_reader(dir, "structure.csv")?.records() {
        let rec = rec.map_err(|e| bad("structure.csv", e))?;
        let i = slot(&rec, "structure.csv")?;
        let date = field(&rec, 1, "structure.csv")?;
        stored[i].structure.push((date, [optional(&rec, 2), optional(&rec, 3), optional(&rec, 4)]));
    }
    for rec in csv_reader(dir, "weights.csv")?.records() {
        let rec = rec.map_err(|e| bad("weights.csv", e))?;
        let i = slot(&rec, "weights.csv")?;
        *stored[i].universe.entry(field(&rec, 1, "weights.csv")?).or_insert(0) += 1;
    }
    for (label, s) in labels.iter().zip(&stored) {
        if s.turnover.len() != s.returns.len() {
            return Err(Failure::Runtime(format!(
                "{label}: {} returns but {} turnover entries",
                s.returns.len(),
                s.turnover.len()
            )));
        }
    }
    Ok(stored)
}

fn summary_table(
    out: &mut OutputDir,
    name: &str,
    series: &[(String, Vec<f64>, Option<WeightStats>)],
    benchmark: Option<usize>,
    cfg: &RunConfig,
) -> Result<Vec<SummaryRow>, Failure> {
    let rows = summarize(series, benchmark, &cfg.metrics).map_err(|e| bad(name, e))?;
    out.write_with(name, |buf| write_summary_csv(&rows, &cfg.metrics.gammas, buf))?;
    Ok(rows)
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        String::new()
    }
}

/// The reference for structure significance: the single index model with the
/// same covariance spec and optimiser.
fn structure_reference(label: &str) -> Option<String> {
    let spec = parse_strategy(label).ok()?;
    if spec.method.is_tuned() || spec.method == latentmv_core::FactorMethod::Ff3 {
        Some(format!("market/{}/{}", spec.cov, spec.optimizer))
    } else {
        None
    }
}

fn structure_tables(out: &mut OutputDir, labels: &[String], stored: &[Stored], cfg: &RunConfig) -> Result<(), Failure> {
    let by_label: BTreeMap<&str, &Stored> = labels.iter().map(String::as_str).zip(stored).collect();
    out.write_with("structure_table.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["strategy", "windows", "eig", "mag", "dir", "reference", "p_eig", "p_mag", "p_dir"])?;
        for (label, s) in labels.iter().zip(stored) {
            if s.structure.is_empty() {
                continue;
            }
            let n = s.structure.len() as f64;
            let means: Vec<f64> = (0..3).map(|m| s.structure.iter().map(|(_, v)| v[m]).sum::<f64>() / n).collect();
            let mut cells = vec![label.clone(), s.structure.len().to_string()];
            cells.extend(means.iter().map(|v| fmt(*v)));
            let reference = structure_reference(label).filter(|r| by_label.get(r.as_str()).is_some_and(|s| !s.structure.is_empty()));
            match &reference {
                Some(r) => {
                    let theirs: BTreeMap<Month, [f64; 3]> = by_label[r.as_str()].structure.iter().copied().collect();
                    let paired: Vec<([f64; 3], [f64; 3])> = s
                        .structure
                        .iter()
                        .filter_map(|(d, v)| theirs.get(d).map(|t| (*v, *t)))
                        .collect();
                    cells.push(r.clone());
                    for m in 0..3 {
                        let a: Vec<f64> = paired.iter().map(|(v, _)| v[m]).collect();
                        let b: Vec<f64> = paired.iter().map(|(_, t)| t[m]).collect();
                        cells.push(bootstrap_structure_pvalue(&a, &b, &cfg.metrics.bootstrap).map(fmt).unwrap_or_default());
                    }
                }
                None => cells.extend(std::iter::repeat_n(String::new(), 4)),
            }
            w.write_record(&cells)?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_with("structure_series.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["strategy", "date", "measure", "value"])?;
        for (label, s) in labels.iter().zip(stored) {
            for (d, v) in &s.structure {
                for (m, name) in ["eig", "mag", "dir"].iter().enumerate() {
                    w.write_record([label.as_str(), &d.to_string(), name, &v[m].to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })
}

fn weight_and_breakeven_tables(out: &mut OutputDir, labels: &[String], stored: &[Stored], rows: &[SummaryRow]) -> Result<(), Failure> {
    out.write_with("weight_table.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["strategy", "to", "max", "sd_w", "mad_ew"])?;
        for (label, s) in labels.iter().zip(stored) {
            let cells = match s.weights {
                Some(ws) => [ws.turnover, ws.max, ws.sd, ws.mad_ew].map(|v| fmt(v * 100.0)),
                None => Default::default(),
            };
            w.write_record(std::iter::once(label.clone()).chain(cells))?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_with("breakeven.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["strategy", "sr", "to", "c_ew_bps"])?;
        for (row, s) in rows.iter().zip(stored) {
            w.write_record([
                row.strategy.clone(),
                fmt(row.perf.sr),
                s.weights.map(|ws| fmt(ws.turnover * 100.0)).unwrap_or_default(),
                row.breakeven_bps.map(fmt).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn plot_data(out: &mut OutputDir, labels: &[String], stored: &[Stored]) -> Result<(), Failure> {
    out.write_with("cumulative_returns.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["strategy", "date", "cumulative"])?;
        for (label, s) in labels.iter().zip(stored) {
            let mut wealth = 1.0;
            for (d, r) in s.dates.iter().zip(&s.returns) {
                wealth *= 1.0 + r;
                w.write_record([label.as_str(), &d.to_string(), &(wealth - 1.0).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_with("universe_size.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["strategy", "date", "assets"])?;
        for (label, s) in labels.iter().zip(stored) {
            for (d, n) in &s.universe {
                w.write_record([label.as_str(), &d.to_string(), &n.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    })
}

/// State variable over `dates`, from `--state-series` or the configured factor file.
fn state_values(args: &ReportArgs, cfg: &RunConfig, kind: Subperiods, dates: &[Month]) -> Result<Vec<f64>, Failure> {
    let path = match (&args.state_series, kind) {
        (Some(p), _) => p.clone(),
        (None, Subperiods::Volatility) => cfg.factors.clone().ok_or_else(|| {
            Failure::Usage(
                "volatility subperiods need a market series: configure 'factors' or pass --state-series".into(),
            )
        })?,
        (None, Subperiods::Median) => {
            return Err(Failure::Usage("median subperiods need --state-series and --state-column".into()))
        }
    };
    let column = match (&args.state_column, kind) {
        (Some(c), _) => c.clone(),
        (None, Subperiods::Volatility) => "mkt".into(),
        (None, Subperiods::Median) => return Err(Failure::Usage("median subperiods need --state-column".into())),
    };
    if !path.is_file() {
        return Err(Failure::Usage(format!("state series {} does not exist", path.display())));
    }
    let series = load_factor_series(&path).map_err(|e| bad(&path.display().to_string(), e))?;
    if series.column_index(&column).is_none() {
        return Err(Failure::Usage(format!("{} has no column '{column}'", path.display())));
    }
    let values = series
        .aligned(dates, std::slice::from_ref(&column))
        .map_err(|e| bad(&path.display().to_string(), e))?;
    Ok(values.column(0).iter().copied().collect())
}

fn subperiod_tables(
    out: &mut OutputDir,
    args: &ReportArgs,
    kind: Subperiods,
    cfg: &RunConfig,
    series: &[(String, Vec<Month>, Vec<f64>)],
    benchmark: Option<usize>,
) -> Result<(), Failure> {
    let dates: Vec<Month> = series
        .iter()
        .flat_map(|(_, d, _)| d.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let values = state_values(args, cfg, kind, &dates)?;
    let (tag, high, p_low) = match kind {
        Subperiods::Volatility => {
            let opts = RegimeOptions {
                seed: cfg.seed,
                ..Default::default()
            };
            let fit = markov_switching_fit(&values, &opts).map_err(|e| bad("regime model", e))?;
            let p = fit.p_low();
            ("volatility", fit.high, Some(p))
        }
        Subperiods::Median => ("median", median_split(&values).0, None),
    };
    out.write_with(&format!("regimes_{tag}.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["date", "value", "p_low", "regime"])?;
        for (i, d) in dates.iter().enumerate() {
            let p = p_low.as_ref().map(|p| p[i].to_string()).unwrap_or_default();
            let regime = if high[i] { "high" } else { "low" };
            w.write_record([d.to_string(), values[i].to_string(), p, regime.into()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let is_high: BTreeMap<Month, bool> = dates.iter().copied().zip(high.iter().copied()).collect();
    for (regime, want) in [("high", true), ("low", false)] {
        let subset: Vec<(String, Vec<f64>, Option<WeightStats>)> = series
            .iter()
            .map(|(label, d, r)| {
                let kept = d.iter().zip(r).filter(|(d, _)| is_high[d] == want).map(|(_, r)| *r).collect();
                (label.clone(), kept, None)
            })
            .collect();
        if let Some((label, _, _)) = subset.iter().find(|(_, r, _)| r.len() < 2) {
            log::warn!("{regime} {tag} regime: {label} has fewer than two returns; table skipped");
            continue;
        }
        summary_table(out, &format!("subperiod_{tag}_{regime}.csv"), &subset, benchmark, cfg)?;
    }
    Ok(())
}

pub fn run(args: &ReportArgs) -> Result<(), Failure> {
    let manifest = Manifest::read(&args.results)?;
    let config_path = args.results.join("config.toml");
    let text = std::fs::read_to_string(&config_path)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", config_path.display())))?;
    let overrides = Overrides {
        seed: Some(manifest.seed),
        out_dir: Some(args.results.clone()),
    };
    let mut cfg = RunConfig::parse(&text, &manifest.config_dir, &overrides).map_err(|f| match f {
        Failure::Config(p) => Failure::Runtime(format!("stored configuration is no longer valid: {}", p.join("; "))),
        other => other,
    })?;
    if let Some(c) = &args.costs {
        cfg.cost_bps = c.clone();
    }
    let labels = manifest.strategies.clone();
    let stored = load_results(&args.results, &labels)?;

    let factors = match &cfg.factors {
        Some(p) => Some(load_factor_series(p).map_err(|e| bad(&p.display().to_string(), e))?),
        None => None,
    };
    let rf = risk_free(&cfg, factors.as_ref());
    let benchmark = labels.iter().position(|l| *l == manifest.benchmark);
    let excess_series: Vec<(String, Vec<Month>, Vec<f64>)> = labels
        .iter()
        .zip(&stored)
        .map(|(l, s)| (l.clone(), s.dates.clone(), excess(&s.dates, &s.returns, &rf)))
        .collect();

    let mut out = OutputDir::new(args.out.clone().unwrap_or_else(|| args.results.join("report")));
    let full: Vec<(String, Vec<f64>, Option<WeightStats>)> = excess_series
        .iter()
        .zip(&stored)
        .map(|((l, _, r), s)| (l.clone(), r.clone(), s.weights))
        .collect();
    let rows = summary_table(&mut out, "performance.csv", &full, benchmark, &cfg)?;
    weight_and_breakeven_tables(&mut out, &labels, &stored, &rows)?;
    structure_tables(&mut out, &labels, &stored, &cfg)?;
    plot_data(&mut out, &labels, &stored)?;

    for &bps in &cfg.cost_bps {
        let net: Vec<(String, Vec<f64>, Option<WeightStats>)> = labels
            .iter()
            .zip(&stored)
            .map(|(l, s)| {
                let gross = apply_transaction_costs(&s.returns, &s.turnover, bps / 1e4).map_err(|e| bad(l, e))?;
                Ok((l.clone(), excess(&s.dates, &gross, &rf), s.weights))
            })
            .collect::<Result<_, Failure>>()?;
        summary_table(&mut out, &format!("performance_net_{bps}bps.csv"), &net, benchmark, &cfg)?;
    }

    if let Some(kind) = args.subperiods {
        subperiod_tables(&mut out, args, kind, &cfg, &excess_series, benchmark)?;
    }
    if args.attribution {
        let (panel, _) = load_inputs(&cfg)?;
        crate::attribution::run(&cfg, &panel, &mut out)?;
    }
    println!("{} report files written to {}", out.written.len(), out.root.display());
    Ok(())
}
