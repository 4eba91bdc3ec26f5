//! Performance statistics of out-of-sample return series.
//!
//! Everything is computed in decimal units. Conversion to percent (or basis
//! points for breakeven costs) happens only when the summary CSV is written,
//! with the one exception of [`breakeven_cost`], which follows the published
//! convention of percent turnover in and basis points out.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::backtest::WeightStats;
use crate::stats::{normal_pdf, normal_quantile, paired_bootstrap_pvalue, BootstrapSettings};
use crate::{Error, Result};

/// Mean, SD (divisor T-1), Sharpe ratio and mean absolute deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Performance {
    pub mean: f64,
    pub sd: f64,
    pub sr: f64,
    pub mad: f64,
}

fn moments(x: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("return series".into()));
    }
    let t = x.len() as f64;
    let mean = x.iter().sum::<f64>() / t;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0)).sqrt();
    let mad = x.iter().map(|v| (v - mean).abs()).sum::<f64>() / t;
    Ok((mean, sd, mad))
}

pub fn sharpe_ratio(mean: f64, sd: f64) -> Result<f64> {
    if sd > 0.0 {
        Ok(mean / sd)
    } else {
        Err(Error::Undefined("Sharpe ratio of a series with zero standard deviation".into()))
    }
}

/// Summary of an excess-return series. Fails when the series is constant
/// because the Sharpe ratio is then undefined.
pub fn perf_summary(excess: &[f64]) -> Result<Performance> {
    let (mean, sd, mad) = moments(excess)?;
    Ok(Performance {
        mean,
        sd,
        sr: sharpe_ratio(mean, sd)?,
        mad,
    })
}

/// Gaussian VaR and CVaR at confidence `a`, reported as positive losses:
/// `VaR = -z sd - mean`, `CVaR = phi(z) sd / (1 - a) - mean` with
/// `z = Phi^-1(1 - a)`. Returns NaNs outside `0 < a < 1` or for negative `sd`.
pub fn var_cvar(mean: f64, sd: f64, a: f64) -> (f64, f64) {
    if !(a > 0.0 && a < 1.0) || !(sd >= 0.0) {
        return (f64::NAN, f64::NAN);
    }
    let z = normal_quantile(1.0 - a);
    (-z * sd - mean, normal_pdf(z) / (1.0 - a) * sd - mean)
}

/// Certainty-equivalent return `mean - gamma sd^2 / 2`.
pub fn cer_from_moments(mean: f64, sd: f64, gamma: f64) -> f64 {
    mean - 0.5 * gamma * sd * sd
}

pub fn cer(excess: &[f64], gamma: f64) -> Result<f64> {
    let (mean, sd, _) = moments(excess)?;
    Ok(cer_from_moments(mean, sd, gamma))
}

/// CER of `strategy` minus CER of `benchmark`.
pub fn delta_cer(strategy: &[f64], benchmark: &[f64], gamma: f64) -> Result<f64> {
    Ok(cer(strategy, gamma)? - cer(benchmark, gamma)?)
}

/// Proportional cost that equates the two Sharpe ratios, in basis points,
/// with average turnover given in percent.
pub fn breakeven_cost(sr_p: f64, sr_bench: f64, to_p: f64, to_bench: f64) -> Result<f64> {
    let dto = to_p - to_bench;
    if dto == 0.0 || !dto.is_finite() {
        return Err(Error::Undefined(format!(
            "breakeven cost with turnover difference {dto}"
        )));
    }
    Ok((sr_p - sr_bench) / dto * 1e4)
}

/// Statistic compared by [`bootstrap_diff_test`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DiffStatistic {
    Sd,
    Sr,
    Cer(f64),
}

impl DiffStatistic {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let t = x.len() as f64;
        let mean = x.iter().sum::<f64>() / t;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0)).sqrt();
        match self {
            DiffStatistic::Sd => sd,
            DiffStatistic::Sr => {
                if sd > 0.0 {
                    mean / sd
                } else {
                    f64::NAN
                }
            }
            DiffStatistic::Cer(gamma) => cer_from_moments(mean, sd, *gamma),
        }
    }
}

/// Two-sided p-value for equal `statistic` of two paired series using the
/// circular block bootstrap. Series must be at least four blocks long.
pub fn bootstrap_diff_test(
    a: &[f64],
    b: &[f64],
    statistic: DiffStatistic,
    settings: &BootstrapSettings,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} observations", a.len(), b.len())));
    }
    if settings.block_length == 0 || a.len() < 4 * settings.block_length {
        return Err(Error::InvalidParameter(format!(
            "block length {} needs at least {} observations, got {}",
            settings.block_length,
            4 * settings.block_length.max(1),
            a.len()
        )));
    }
    paired_bootstrap_pvalue(a, b, settings, |x| statistic.evaluate(x))
}

/// Settings for [`PerfSummary`] and the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    pub gammas: Vec<f64>,
    pub confidence: f64,
    pub bootstrap: BootstrapSettings,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            gammas: vec![2.0, 5.0, 10.0],
            confidence: 0.95,
            bootstrap: BootstrapSettings::default(),
        }
    }
}

/// Every performance statistic of one excess-return series. `sr` is NaN
/// when the series is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfSummary {
    pub mean: f64,
    pub sd: f64,
    pub sr: f64,
    pub mad: f64,
    pub var: f64,
    pub cvar: f64,
    /// `(gamma, CER)` pairs.
    pub cer: Vec<(f64, f64)>,
}

impl PerfSummary {
    pub fn compute(excess: &[f64], settings: &MetricSettings) -> Result<Self> {
        let (mean, sd, mad) = moments(excess)?;
        let (var, cvar) = var_cvar(mean, sd, settings.confidence);
        Ok(Self {
            mean,
            sd,
            sr: sharpe_ratio(mean, sd).unwrap_or(f64::NAN),
            mad,
            var,
            cvar,
            cer: settings.gammas.iter().map(|&g| (g, cer_from_moments(mean, sd, g))).collect(),
        })
    }
}

/// One strategy row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub perf: PerfSummary,
    pub weights: Option<WeightStats>,
    /// Breakeven cost against the benchmark in basis points.
    pub breakeven_bps: Option<f64>,
    /// Bootstrap p-values against the benchmark for SD, SR and the first CER.
    pub p_sd: Option<f64>,
    pub p_sr: Option<f64>,
    pub p_cer: Option<f64>,
}

/// Build summary rows for `series` (label, excess returns, weight stats),
/// comparing each against the row at `benchmark`.
pub fn summarize(
    series: &[(String, Vec<f64>, Option<WeightStats>)],
    benchmark: Option<usize>,
    settings: &MetricSettings,
) -> Result<Vec<SummaryRow>> {
    let perfs: Vec<PerfSummary> = series
        .iter()
        .map(|(label, r, _)| {
            PerfSummary::compute(r, settings).map_err(|e| Error::Config(format!("{label}: {e}")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(series.len());
    for (i, ((label, r, ws), perf)) in series.iter().zip(&perfs).enumerate() {
        let mut row = SummaryRow {
            strategy: label.clone(),
            perf: perf.clone(),
            weights: *ws,
            breakeven_bps: None,
            p_sd: None,
            p_sr: None,
            p_cer: None,
        };
        if let Some(b) = benchmark.filter(|&b| b != i) {
            let (_, rb, wb) = &series[b];
            if let (Some(wp), Some(wb)) = (ws, wb) {
                row.breakeven_bps =
                    breakeven_cost(perf.sr, perfs[b].sr, wp.turnover * 100.0, wb.turnover * 100.0)
                        .ok()
                        .filter(|c| c.is_finite());
            }
            let test = |s| bootstrap_diff_test(r, rb, s, &settings.bootstrap).ok();
            row.p_sd = test(DiffStatistic::Sd);
            row.p_sr = test(DiffStatistic::Sr);
            row.p_cer = settings.gammas.first().and_then(|&g| test(DiffStatistic::Cer(g)));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn cell(v: Option<f64>, scale: f64) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{:.6}", v * scale),
        _ => String::new(),
    }
}

/// Write the summary table. Returns, risk measures, CERs and weight
/// statistics are in percent, breakeven costs in basis points; empty cells
/// mark undefined values.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], gammas: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["strategy", "mean", "sd", "sr", "mad", "var", "cvar"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(gammas.iter().map(|g| format!("cer_g{g}")));
    header.extend(
        ["to", "max", "sd_w", "mad_ew", "c_ew_bps", "p_sd", "p_sr", "p_cer"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for row in rows {
        let p = &row.perf;
        let mut rec = vec![
            row.strategy.clone(),
            cell(Some(p.mean), 100.0),
            cell(Some(p.sd), 100.0),
            cell(Some(p.sr), 1.0),
            cell(Some(p.mad), 100.0),
            cell(Some(p.var), 100.0),
            cell(Some(p.cvar), 100.0),
        ];
        for g in gammas {
            let v = p.cer.iter().find(|(pg, _)| pg == g).map(|(_, c)| *c);
            rec.push(cell(v, 100.0));
        }
        let ws = row.weights;
        rec.push(cell(ws.map(|s| s.turnover), 100.0));
        rec.push(cell(ws.map(|s| s.max), 100.0));
        rec.push(cell(ws.map(|s| s.sd), 100.0));
        rec.push(cell(ws.map(|s| s.mad_ew), 100.0));
        rec.push(cell(row.breakeven_bps, 1.0));
        rec.push(cell(row.p_sd, 1.0));
        rec.push(cell(row.p_sr, 1.0));
        rec.push(cell(row.p_cer, 1.0));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        assert!((perf_summary(&[-1.0, 1.0]).unwrap().mad - 1.0).abs() < 1e-15);
        assert!(matches!(perf_summary(&[0.01; 5]), Err(Error::Undefined(_))));
        assert_eq!(var_cvar(0.02, 0.0, 0.95), (-0.02, -0.02));
        assert_eq!(cer(&[0.01, 0.03], 0.0).unwrap(), 0.02);
        assert_eq!(cer(&[0.01; 4], 10.0).unwrap(), 0.01);
        assert_eq!(breakeven_cost(0.2, 0.2, 10.0, 1.0).unwrap(), 0.0);
        assert!(breakeven_cost(0.3, 0.2, 1.0, 1.0).is_err());
    }

    #[test]
    fn identical_series_have_p_one() {
        let x: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 / 100.0).collect();
        for s in [DiffStatistic::Sd, DiffStatistic::Sr, DiffStatistic::Cer(5.0)] {
            assert_eq!(bootstrap_diff_test(&x, &x, s, &BootstrapSettings::default()).unwrap(), 1.0);
        }
        let settings = BootstrapSettings {
            block_length: 60,
            ..Default::default()
        };
        assert!(matches!(
            bootstrap_diff_test(&x, &x, DiffStatistic::Sd, &settings),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn summary_csv_has_all_columns() {
        let a: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 / 100.0 - 0.05).collect();
        let b: Vec<f64> = a.iter().map(|v| v * 0.5 + 0.001).collect();
        let ws = WeightStats {
            max: 0.5,
            sd: 0.1,
            mad_ew: 0.05,
            turnover: 0.2,
        };
        let ew = WeightStats { turnover: 0.01, ..ws };
        let series = vec![("ew".to_string(), a, Some(ew)), ("mv".to_string(), b, Some(ws))];
        let settings = MetricSettings::default();
        let rows = summarize(&series, Some(0), &settings).unwrap();
        assert!(rows[0].p_sd.is_none() && rows[1].p_sd.is_some());
        let mut out = Vec::new();
        write_summary_csv(&rows, &settings.gammas, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "strategy,mean,sd,sr,mad,var,cvar,cer_g2,cer_g5,cer_g10,to,max,sd_w,mad_ew,c_ew_bps,p_sd,p_sr,p_cer"
        );
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2].split(',').count(), 18);
        assert!(lines[2].split(',').all(|c| !c.is_empty()));
    }
}
