//! Rolling-window backtests: universe selection, tuning, covariance
//! estimation, optimisation and the bookkeeping of realised returns.

mod engine;
mod tuning;
mod turnover;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use engine::{run_backtest, run_backtest_with, run_backtests, RunOptions};
pub use tuning::{fit_factors, validate_select, Selection, TuningContext};
pub use turnover::{apply_transaction_costs, drift_weights, turnover_series, weight_stats, WeightStats};

use crate::autoenc::{AdamConfig, Depth};
use crate::cov::{CovSpec, StructureComparison};
use crate::data::Month;
use crate::opt::OptimizerKind;
use crate::{Error, Result};

/// How the factors behind the covariance matrix are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FactorMethod {
    /// Sample covariance of returns, no factor model.
    Sample,
    /// Single index model on the market factor.
    Market,
    /// Three observed factors.
    Ff3,
    Pca,
    Pls,
    Spca,
    Spls,
    Aen(Depth),
    /// Equal weights; no covariance needed.
    Ew,
}

impl FactorMethod {
    pub const ALL: [FactorMethod; 12] = [
        FactorMethod::Sample,
        FactorMethod::Market,
        FactorMethod::Ff3,
        FactorMethod::Pca,
        FactorMethod::Pls,
        FactorMethod::Spca,
        FactorMethod::Spls,
        FactorMethod::Aen(Depth::Aen1),
        FactorMethod::Aen(Depth::Aen2),
        FactorMethod::Aen(Depth::Aen3),
        FactorMethod::Aen(Depth::Aen4),
        FactorMethod::Ew,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FactorMethod::Sample => "sample",
            FactorMethod::Market => "market",
            FactorMethod::Ff3 => "ff3",
            FactorMethod::Pca => "pca",
            FactorMethod::Pls => "pls",
            FactorMethod::Spca => "spca",
            FactorMethod::Spls => "spls",
            FactorMethod::Aen(d) => d.label(),
            FactorMethod::Ew => "ew",
        }
    }

    pub fn is_observed(self) -> bool {
        matches!(self, FactorMethod::Market | FactorMethod::Ff3)
    }

    /// Latent-factor methods whose hyperparameters are chosen by validation.
    pub fn is_tuned(self) -> bool {
        matches!(
            self,
            FactorMethod::Pca | FactorMethod::Pls | FactorMethod::Spca | FactorMethod::Spls | FactorMethod::Aen(_)
        )
    }

    pub fn is_supervised(self) -> bool {
        matches!(self, FactorMethod::Pls | FactorMethod::Spls)
    }

    /// Observed factor columns used when none are configured.
    pub fn default_columns(self) -> Vec<String> {
        match self {
            FactorMethod::Market => vec!["mkt".into()],
            FactorMethod::Ff3 => vec!["mkt".into(), "smb".into(), "hml".into()],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for FactorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FactorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FactorMethod::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown factor method '{s}'")))
    }
}

/// One point of a hyperparameter grid. Only the fields relevant to the
/// method are used; the others stay at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HyperParams {
    pub k: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta: f64,
    pub activity_l1: f64,
}

impl HyperParams {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Default::default()
        }
    }

    /// Sparsity penalty used for tie-breaking (larger is sparser).
    pub fn penalty(&self) -> f64 {
        self.lambda1 + self.eta + self.activity_l1
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k={}", self.k)?;
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("eta", self.eta),
            ("activity_l1", self.activity_l1),
        ] {
            if v != 0.0 {
                write!(f, ";{name}={v}")?;
            }
        }
        Ok(())
    }
}

/// Autoencoder training settings shared by every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeTraining {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub activity_l2: f64,
}

impl Default for AeTraining {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            weight_decay: 1e-5,
            activity_l2: 0.0,
        }
    }
}

/// Candidate hyperparameters per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub k_values: Vec<usize>,
    pub spca_lambda1: Vec<f64>,
    pub spca_lambda2: f64,
    pub spls_eta: Vec<f64>,
    pub ae_activity_l1: Vec<f64>,
    pub ae: AeTraining,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            k_values: (1..=5).collect(),
            spca_lambda1: log_spaced(1e-4, 1.0, 6),
            spca_lambda2: 1e-4,
            spls_eta: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            ae_activity_l1: vec![1e-5],
            ae: AeTraining::default(),
        }
    }
}

/// `n` points from `lo` to `hi` equally spaced in log10.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

impl HyperGrid {
    /// Grid points for `method`, ordered by increasing K and, within K, by
    /// decreasing sparsity penalty. The first minimiser in this order wins ties.
    pub fn points(&self, method: FactorMethod) -> Vec<HyperParams> {
        let mut ks = self.k_values.clone();
        ks.sort_unstable();
        ks.dedup();
        let mut out = Vec::new();
        for &k in &ks {
            let base = HyperParams::with_k(k);
            match method {
                FactorMethod::Pca | FactorMethod::Pls => out.push(base),
                FactorMethod::Spca => out.extend(self.spca_lambda1.iter().map(|&l| HyperParams {
                    lambda1: l,
                    lambda2: self.spca_lambda2,
                    ..base
                })),
                FactorMethod::Spls => out.extend(self.spls_eta.iter().map(|&eta| HyperParams { eta, ..base })),
                FactorMethod::Aen(_) => out.extend(
                    self.ae_activity_l1
                        .iter()
                        .map(|&activity_l1| HyperParams { activity_l1, ..base }),
                ),
                _ => {}
            }
        }
        out.sort_by(|a, b| a.k.cmp(&b.k).then(b.penalty().total_cmp(&a.penalty())));
        out
    }
}

/// A complete strategy: factor method, covariance specification and optimiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub method: FactorMethod,
    /// Ignored by `sample` (always the sample covariance) and `ew`.
    pub cov: CovSpec,
    /// Ignored by `ew`.
    pub optimizer: OptimizerKind,
    pub grid: HyperGrid,
    /// Factor-series columns for observed-factor methods.
    pub observed_columns: Vec<String>,
}

impl StrategySpec {
    pub fn new(method: FactorMethod, cov: CovSpec, optimizer: OptimizerKind) -> Self {
        let cov = if method == FactorMethod::Sample { CovSpec::Sample } else { cov };
        Self {
            method,
            cov,
            optimizer,
            grid: HyperGrid::default(),
            observed_columns: method.default_columns(),
        }
    }

    pub fn equal_weight() -> Self {
        Self::new(FactorMethod::Ew, CovSpec::Static, OptimizerKind::LongOnly)
    }

    pub fn label(&self) -> String {
        match self.method {
            FactorMethod::Ew => "ew".into(),
            FactorMethod::Sample => format!("sample/{}", self.optimizer),
            m => format!("{m}/{}/{}", self.cov, self.optimizer),
        }
    }

    /// Covariance spec actually used.
    pub fn effective_cov(&self) -> CovSpec {
        if self.method == FactorMethod::Sample {
            CovSpec::Sample
        } else {
            self.cov
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let label = self.label();
        if !matches!(self.method, FactorMethod::Sample | FactorMethod::Ew) && self.cov == CovSpec::Sample {
            problems.push(format!("{label}: factor methods need a factor covariance spec, not 'sample'"));
        }
        if self.method.is_observed() && self.observed_columns.is_empty() {
            problems.push(format!("{label}: no observed factor columns"));
        }
        if self.method.is_tuned() {
            let g = &self.grid;
            if g.k_values.is_empty() || g.k_values.contains(&0) {
                problems.push(format!("{label}: K values must be non-empty and positive"));
            }
            let bad = |v: &[f64]| v.is_empty() || v.iter().any(|x| !(*x >= 0.0));
            match self.method {
                FactorMethod::Spca if bad(&g.spca_lambda1) || !(g.spca_lambda2 >= 0.0) => {
                    problems.push(format!("{label}: sparse PCA penalties must be non-empty and non-negative"))
                }
                FactorMethod::Spls if bad(&g.spls_eta) || g.spls_eta.iter().any(|e| *e >= 1.0) => {
                    problems.push(format!("{label}: sparse PLS thresholds must lie in [0, 1)"))
                }
                FactorMethod::Aen(_) if bad(&g.ae_activity_l1) => {
                    problems.push(format!("{label}: activity penalties must be non-empty and non-negative"))
                }
                _ => {}
            }
        }
        match problems.len() {
            0 => Ok(()),
            _ => Err(Error::Config(problems.join("; "))),
        }
    }
}

/// Portfolio formed at the end of one estimation window.
#[derive(Debug, Clone, PartialEq)]
pub struct Rebalance {
    /// Last month of the estimation window.
    pub window_end: Month,
    /// Month whose return the portfolio earns.
    pub return_date: Month,
    /// Panel row of `window_end`.
    pub end_row: usize,
    pub assets: Vec<String>,
    /// Panel column of each asset in `assets`.
    pub asset_columns: Vec<usize>,
    pub weights: DVector<f64>,
    pub hyper: Option<HyperParams>,
    /// Gross portfolio return over `return_date`.
    pub portfolio_return: f64,
    /// Comparison of the formation covariance with the window's sample covariance.
    pub structure: Option<StructureComparison>,
}

/// A window that produced no portfolio.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGap {
    pub window_end: Month,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub strategy: StrategySpec,
    pub rebalances: Vec<Rebalance>,
    pub gaps: Vec<WindowGap>,
    /// Turnover at each rebalance; the first entry is 0 (no prior portfolio).
    pub turnover: Vec<f64>,
    pub seed: u64,
    pub config_hash: Option<String>,
}

impl BacktestResult {
    pub fn label(&self) -> String {
        self.strategy.label()
    }

    /// Out-of-sample gross returns, one per completed window.
    pub fn returns(&self) -> Vec<f64> {
        self.rebalances.iter().map(|r| r.portfolio_return).collect()
    }

    pub fn return_dates(&self) -> Vec<Month> {
        self.rebalances.iter().map(|r| r.return_date).collect()
    }

    /// Long form `strategy,date,asset,weight`.
    pub fn write_weights_csv<W: Write>(&self, writer: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        if header {
            w.write_record(["strategy", "date", "asset", "weight"])?;
        }
        let label = self.label();
        for reb in &self.rebalances {
            let date = reb.window_end.to_string();
            for (a, wt) in reb.assets.iter().zip(reb.weights.iter()) {
                w.write_record([label.as_str(), &date, a, &wt.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `strategy,date,return,hyperparameters` with the return month as date.
    pub fn write_returns_csv<W: Write>(&self, writer: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        if header {
            w.write_record(["strategy", "date", "return", "hyperparameters"])?;
        }
        let label = self.label();
        for reb in &self.rebalances {
            let hp = reb.hyper.map(|h| h.to_string()).unwrap_or_default();
            w.write_record([
                label.as_str(),
                &reb.return_date.to_string(),
                &reb.portfolio_return.to_string(),
                &hp,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `strategy,date,turnover` at each rebalance date.
    pub fn write_turnover_csv<W: Write>(&self, writer: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        if header {
            w.write_record(["strategy", "date", "turnover"])?;
        }
        let label = self.label();
        for (reb, to) in self.rebalances.iter().zip(&self.turnover) {
            w.write_record([label.as_str(), &reb.window_end.to_string(), &to.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_roundtrip() {
        for m in FactorMethod::ALL {
            assert_eq!(m.label().parse::<FactorMethod>().unwrap(), m);
        }
        assert!("aen5".parse::<FactorMethod>().is_err());
    }

    #[test]
    fn default_grid() {
        let g = HyperGrid::default();
        let l = &g.spca_lambda1;
        assert_eq!(l.len(), 6);
        assert!((l[0] - 1e-4).abs() < 1e-18 && (l[5] - 1.0).abs() < 1e-12);
        assert_eq!(g.points(FactorMethod::Pca).len(), 5);
        assert_eq!(g.points(FactorMethod::Spca).len(), 30);
        assert_eq!(g.points(FactorMethod::Spls).len(), 25);
        assert!(g.points(FactorMethod::Ew).is_empty());
    }

    #[test]
    fn points_prefer_small_k_then_sparse() {
        let p = HyperGrid::default().points(FactorMethod::Spls);
        assert_eq!(p[0].k, 1);
        assert_eq!(p[0].eta, 0.8);
        assert_eq!(p[4].eta, 0.0);
        assert_eq!(p[5].k, 2);
    }

    #[test]
    fn validation_catches_bad_specs() {
        let ok = StrategySpec::new(FactorMethod::Pca, CovSpec::Static, OptimizerKind::LongOnly);
        ok.validate().unwrap();
        let bad = StrategySpec {
            cov: CovSpec::Sample,
            ..ok.clone()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let mut empty = ok;
        empty.grid.k_values.clear();
        assert!(empty.validate().is_err());
        let s = StrategySpec::new(FactorMethod::Sample, CovSpec::DynBeta, OptimizerKind::LongOnly);
        assert_eq!(s.effective_cov(), CovSpec::Sample);
        assert_eq!(s.label(), "sample/long_only");
    }
}
