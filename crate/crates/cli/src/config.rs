//! Run configuration: a flat, commented `key = value` file (TOML syntax, no
//! tables). Every problem found is reported at once.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use latentmv_core::backtest::{AeTraining, HyperGrid};
use latentmv_core::cov::CovSpec;
use latentmv_core::data::{ColumnSchema, RankAxis, UniverseRules, WindowSpec};
use latentmv_core::metrics::MetricSettings;
use latentmv_core::opt::OptimizerKind;
use latentmv_core::stats::BootstrapSettings;
use latentmv_core::{FactorMethod, StrategySpec};
use toml::{Table, Value};

use crate::Failure;

/// Every key the file may contain, with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("panel", "long-form returns CSV (date,asset,return[,price,market_cap]); required"),
    ("column_date", "name of the date column (default date)"),
    ("column_asset", "name of the asset column (default asset)"),
    ("column_return", "name of the return column (default return)"),
    ("column_price", "name of the price column, empty for none (default price)"),
    ("column_market_cap", "name of the market-cap column, empty for none (default market_cap)"),
    ("factors", "observed factor series CSV (date,<name>,...); needed by market/ff3 and regimes"),
    ("rf_column", "risk-free column in the factor file (default rf; zero when absent)"),
    ("market_columns", "factor columns of the single index model (default [\"mkt\"])"),
    ("ff3_columns", "factor columns of the three-factor model (default [\"mkt\",\"smb\",\"hml\"])"),
    ("proxies", "factor proxies CSV for OLS attribution of latent factors"),
    ("lasso_features", "feature CSV for lasso attribution of latent factors"),
    ("grouping", "variable,group CSV aggregating lasso importances"),
    ("out_dir", "directory for result files (default results)"),
    ("seed", "master random seed; required here or via --seed"),
    ("strategies", "list of method[/cov][/optimizer] labels, e.g. \"pca/static/long_only\"; required"),
    ("benchmark", "strategy label used as benchmark (default ew)"),
    ("window_length", "estimation window length in months (default 240)"),
    ("window_step", "months between rebalances (default 1)"),
    ("validation_fraction", "share of each window held out for tuning (default 0.2)"),
    ("min_history_fraction", "minimum share of present returns in the window (default 0.975)"),
    ("min_price", "price floor at the window end (default 5)"),
    ("top_n_by_cap", "number of largest assets kept (default 100)"),
    ("require_next_return", "drop assets without a next-month return (default true)"),
    ("rank_axis", "cross_section or time_series (default cross_section)"),
    ("k_values", "candidate numbers of factors (default [1,2,3,4,5])"),
    ("spca_lambda1", "candidate sparse PCA l1 penalties"),
    ("spca_lambda2", "sparse PCA ridge penalty (default 1e-4)"),
    ("spls_eta", "candidate sparse PLS thresholds in [0, 1)"),
    ("ae_activity_l1", "candidate autoencoder activity l1 penalties (default [1e-5])"),
    ("ae_activity_l2", "autoencoder activity l2 penalty (default 0)"),
    ("ae_weight_decay", "autoencoder weight decay (default 1e-5)"),
    ("ae_learning_rate", "Adam step size (default 0.001)"),
    ("ae_batch_size", "mini-batch size (default 32)"),
    ("ae_max_epochs", "epoch cap (default 500)"),
    ("ae_patience", "early-stopping patience in epochs (default 20)"),
    ("gammas", "risk aversions for certainty equivalents (default [2,5,10])"),
    ("confidence", "VaR/CVaR confidence level (default 0.95)"),
    ("cost_bps", "proportional costs in basis points for net-of-cost tables (default [])"),
    ("bootstrap_block_length", "circular block length (default 12)"),
    ("bootstrap_resamples", "bootstrap resamples (default 2000)"),
    ("nw_lags", "Newey-West lags in attribution regressions (default 12)"),
    ("attribution_k", "number of latent factors explained in attribution (default 5)"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
    pub panel: PathBuf,
    pub schema: ColumnSchema,
    pub factors: Option<PathBuf>,
    pub rf_column: String,
    pub proxies: Option<PathBuf>,
    pub lasso_features: Option<PathBuf>,
    pub grouping: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub strategies: Vec<StrategySpec>,
    pub benchmark: String,
    pub window: WindowSpec,
    pub rules: UniverseRules,
    pub rank_axis: RankAxis,
    pub metrics: MetricSettings,
    pub cost_bps: Vec<f64>,
    pub nw_lags: usize,
    pub attribution_k: usize,
}

/// Values given on the command line that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

struct Reader<'a> {
    table: &'a Table,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn value(&self, key: &str) -> Option<&Value> {
        self.table.get(key)
    }

    fn fail(&mut self, key: &str, want: &str) {
        self.problems.push(format!("{key}: expected {want}"));
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.value(key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.fail(key, "a string");
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        match self.value(key)? {
            Value::Float(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            _ => {
                self.fail(key, "a number");
                None
            }
        }
    }

    fn count(&mut self, key: &str) -> Option<usize> {
        match self.value(key)? {
            Value::Integer(v) if *v >= 0 => Some(*v as usize),
            _ => {
                self.fail(key, "a non-negative integer");
                None
            }
        }
    }

    fn flag(&mut self, key: &str) -> Option<bool> {
        match self.value(key)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.fail(key, "true or false");
                None
            }
        }
    }

    fn list<T>(&mut self, key: &str, want: &str, item: impl Fn(&Value) -> Option<T>) -> Option<Vec<T>> {
        let parsed = match self.value(key)? {
            Value::Array(items) => items.iter().map(&item).collect::<Option<Vec<T>>>(),
            _ => None,
        };
        if parsed.is_none() {
            self.fail(key, want);
        }
        parsed
    }

    fn floats(&mut self, key: &str) -> Option<Vec<f64>> {
        self.list(key, "a list of numbers", |v| match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        })
    }

    fn counts(&mut self, key: &str) -> Option<Vec<usize>> {
        self.list(key, "a list of non-negative integers", |v| match v {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => None,
        })
    }

    fn strings(&mut self, key: &str) -> Option<Vec<String>> {
        self.list(key, "a list of strings", |v| v.as_str().map(str::to_string))
    }
}

/// Parse `method[/cov][/optimizer]`. `ew` takes no parts, `sample` an
/// optional optimizer, everything else a covariance spec and an optional
/// optimizer (long-only by default).
pub fn parse_strategy(label: &str) -> Result<StrategySpec, String> {
    let parts: Vec<&str> = label.split('/').map(str::trim).collect();
    let method: FactorMethod = parts[0].parse().map_err(|e: latentmv_core::Error| e.to_string())?;
    let optimizer = |s: Option<&&str>| -> Result<OptimizerKind, String> {
        s.map_or(Ok(OptimizerKind::LongOnly), |s| s.parse().map_err(|e: latentmv_core::Error| e.to_string()))
    };
    match method {
        FactorMethod::Ew if parts.len() == 1 => Ok(StrategySpec::equal_weight()),
        FactorMethod::Ew => Err(format!("'{label}': ew takes no covariance or optimizer")),
        FactorMethod::Sample if parts.len() <= 2 => {
            Ok(StrategySpec::new(method, CovSpec::Sample, optimizer(parts.get(1))?))
        }
        _ if (2..=3).contains(&parts.len()) => {
            let cov: CovSpec = parts[1].parse().map_err(|e: latentmv_core::Error| e.to_string())?;
            Ok(StrategySpec::new(method, cov, optimizer(parts.get(2))?))
        }
        _ => Err(format!("'{label}': expected method/cov[/optimizer]")),
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<(Self, Vec<u8>), Failure> {
        let bytes = std::fs::read(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Failure::Usage(format!("config {} is not UTF-8", path.display())))?;
        let cfg = Self::parse(&text, &base, overrides)?;
        Ok((cfg, bytes))
    }

    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<Self, Failure> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Failure::Usage(format!("config syntax: {}", e.message())))?;
        let known: BTreeSet<&str> = KEYS.iter().map(|(k, _)| *k).collect();
        let mut r = Reader {
            table: &table,
            problems: Vec::new(),
        };
        for (k, v) in &table {
            if !known.contains(k.as_str()) {
                r.problems.push(format!("{k}: unknown key"));
            } else if v.is_table() {
                r.problems.push(format!("{k}: tables are not allowed, keys are flat"));
            }
        }

        let existing = |r: &mut Reader, key: &str| -> Option<PathBuf> {
            let p = resolve(base, &r.string(key)?);
            if !p.is_file() {
                r.problems.push(format!("{key}: file {} does not exist", p.display()));
            }
            Some(p)
        };
        let panel = existing(&mut r, "panel");
        if !table.contains_key("panel") {
            r.problems.push("panel: required".into());
        }
        let factors = existing(&mut r, "factors");
        let proxies = existing(&mut r, "proxies");
        let lasso_features = existing(&mut r, "lasso_features");
        let grouping = existing(&mut r, "grouping");

        let defaults = ColumnSchema::default();
        let optional_column = |r: &mut Reader, key: &str, default: Option<String>| match r.string(key) {
            Some(s) if s.is_empty() => None,
            Some(s) => Some(s),
            None => default,
        };
        let schema = ColumnSchema {
            date: r.string("column_date").unwrap_or(defaults.date),
            asset: r.string("column_asset").unwrap_or(defaults.asset),
            ret: r.string("column_return").unwrap_or(defaults.ret),
            price: optional_column(&mut r, "column_price", defaults.price),
            market_cap: optional_column(&mut r, "column_market_cap", defaults.market_cap),
        };

        let seed = match (overrides.seed, r.value("seed")) {
            (Some(s), _) => Some(s),
            (None, Some(Value::Integer(s))) if *s >= 0 => Some(*s as u64),
            (None, Some(_)) => {
                r.fail("seed", "a non-negative integer");
                None
            }
            (None, None) => {
                r.problems.push("seed: required (in the config or via --seed)".into());
                None
            }
        };

        let mut window = WindowSpec::default();
        window.length = r.count("window_length").unwrap_or(window.length);
        window.step = r.count("window_step").unwrap_or(window.step);
        window.validation_fraction = r.float("validation_fraction").unwrap_or(window.validation_fraction);
        if let Err(e) = window.validate() {
            r.problems.push(e.to_string());
        }

        let mut rules = UniverseRules::default();
        rules.min_history_fraction = r.float("min_history_fraction").unwrap_or(rules.min_history_fraction);
        rules.min_price = r.float("min_price").unwrap_or(rules.min_price);
        rules.top_n_by_cap = r.count("top_n_by_cap").unwrap_or(rules.top_n_by_cap);
        rules.require_next_return = r.flag("require_next_return").unwrap_or(rules.require_next_return);
        if let Err(e) = rules.validate() {
            r.problems.push(e.to_string());
        }

        let rank_axis = match r.string("rank_axis").as_deref() {
            None | Some("cross_section") => RankAxis::CrossSection,
            Some("time_series") => RankAxis::TimeSeries,
            Some(other) => {
                r.problems.push(format!("rank_axis: unknown axis '{other}'"));
                RankAxis::CrossSection
            }
        };

        let mut grid = HyperGrid::default();
        grid.k_values = r.counts("k_values").unwrap_or(grid.k_values);
        grid.spca_lambda1 = r.floats("spca_lambda1").unwrap_or(grid.spca_lambda1);
        grid.spca_lambda2 = r.float("spca_lambda2").unwrap_or(grid.spca_lambda2);
        grid.spls_eta = r.floats("spls_eta").unwrap_or(grid.spls_eta);
        grid.ae_activity_l1 = r.floats("ae_activity_l1").unwrap_or(grid.ae_activity_l1);
        let ae_default = AeTraining::default();
        grid.ae = AeTraining {
            adam: latentmv_core::autoenc::AdamConfig {
                step_size: r.float("ae_learning_rate").unwrap_or(ae_default.adam.step_size),
                ..ae_default.adam
            },
            batch_size: r.count("ae_batch_size").unwrap_or(ae_default.batch_size),
            max_epochs: r.count("ae_max_epochs").unwrap_or(ae_default.max_epochs),
            patience: r.count("ae_patience").unwrap_or(ae_default.patience),
            weight_decay: r.float("ae_weight_decay").unwrap_or(ae_default.weight_decay),
            activity_l2: r.float("ae_activity_l2").unwrap_or(ae_default.activity_l2),
        };
        if !(grid.ae.adam.step_size > 0.0) {
            r.problems.push("ae_learning_rate: must be positive".into());
        }
        if grid.ae.batch_size == 0 {
            r.problems.push("ae_batch_size: must be positive".into());
        }

        let market_columns = r.strings("market_columns");
        let ff3_columns = r.strings("ff3_columns");
        let mut strategies = Vec::new();
        match r.strings("strategies") {
            Some(labels) if labels.is_empty() => r.problems.push("strategies: empty list".into()),
            Some(labels) => {
                let mut seen = BTreeSet::new();
                for label in labels {
                    match parse_strategy(&label) {
                        Ok(mut s) => {
                            s.grid = grid.clone();
                            match s.method {
                                FactorMethod::Market => {
                                    if let Some(c) = &market_columns {
                                        s.observed_columns = c.clone();
                                    }
                                }
                                FactorMethod::Ff3 => {
                                    if let Some(c) = &ff3_columns {
                                        s.observed_columns = c.clone();
                                    }
                                }
                                _ => {}
                            }
                            if let Err(e) = s.validate() {
                                r.problems.push(format!("strategies: {e}"));
                            }
                            if s.method.is_observed() && factors.is_none() {
                                r.problems.push(format!("strategies: {} needs the 'factors' file", s.label()));
                            }
                            if !seen.insert(s.label()) {
                                r.problems.push(format!("strategies: '{}' listed twice", s.label()));
                            }
                            strategies.push(s);
                        }
                        Err(e) => r.problems.push(format!("strategies: {e}")),
                    }
                }
            }
            None if !table.contains_key("strategies") => r.problems.push("strategies: required".into()),
            None => {}
        }
        let benchmark = r.string("benchmark").unwrap_or_else(|| "ew".into());
        if !strategies.is_empty() && !strategies.iter().any(|s| s.label() == benchmark) {
            r.problems.push(format!("benchmark: '{benchmark}' is not among the strategies"));
        }

        let defaults = MetricSettings::default();
        let boot = BootstrapSettings::default();
        let metrics = MetricSettings {
            gammas: r.floats("gammas").unwrap_or(defaults.gammas),
            confidence: r.float("confidence").unwrap_or(defaults.confidence),
            bootstrap: BootstrapSettings {
                block_length: r.count("bootstrap_block_length").unwrap_or(boot.block_length),
                resamples: r.count("bootstrap_resamples").unwrap_or(boot.resamples),
                seed: seed.unwrap_or(0),
            },
        };
        if !(metrics.confidence > 0.0 && metrics.confidence < 1.0) {
            r.problems.push("confidence: must lie in (0, 1)".into());
        }
        if metrics.bootstrap.block_length == 0 || metrics.bootstrap.resamples == 0 {
            r.problems.push("bootstrap_block_length and bootstrap_resamples must be positive".into());
        }
        let cost_bps = r.floats("cost_bps").unwrap_or_default();
        if cost_bps.iter().any(|c| !(*c >= 0.0)) {
            r.problems.push("cost_bps: costs must be non-negative".into());
        }
        let attribution_k = r.count("attribution_k").unwrap_or(5);
        if attribution_k == 0 {
            r.problems.push("attribution_k: must be positive".into());
        }
        let nw_lags = r.count("nw_lags").unwrap_or(12);
        let rf_column = r.string("rf_column").unwrap_or_else(|| "rf".into());
        let out_dir = match &overrides.out_dir {
            Some(d) => d.clone(),
            None => resolve(base, &r.string("out_dir").unwrap_or_else(|| "results".into())),
        };

        if !r.problems.is_empty() {
            return Err(Failure::Config(r.problems));
        }
        Ok(RunConfig {
            base_dir: base.to_path_buf(),
            panel: panel.expect("checked above"),
            schema,
            factors,
            rf_column,
            proxies,
            lasso_features,
            grouping,
            out_dir,
            seed: seed.expect("checked above"),
            strategies,
            benchmark,
            window,
            rules,
            rank_axis,
            metrics,
            cost_bps,
            nw_lags,
            attribution_k,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_labels() {
        assert_eq!(parse_strategy("ew").unwrap().label(), "ew");
        assert_eq!(parse_strategy("sample").unwrap().label(), "sample/long_only");
        let s = parse_strategy("pca/dyn_error/turnover_penalized(0.002)").unwrap();
        assert_eq!(s.cov, CovSpec::DynError);
        assert_eq!(s.optimizer, OptimizerKind::TurnoverPenalized { kappa: 0.002 });
        assert_eq!(parse_strategy("aen2/static").unwrap().label(), "aen2/static/long_only");
        assert!(parse_strategy("pca").is_err());
        assert!(parse_strategy("ew/static").is_err());
        assert!(parse_strategy("magic/static").is_err());
    }

    #[test]
    fn all_violations_are_collected() {
        let text = "seed = -1\nstrategies = [\"pca/bogus\", \"market/static\"]\nwindow_length = 1\ncolour = 3\n";
        let Err(Failure::Config(problems)) = RunConfig::parse(text, Path::new("."), &Overrides::default()) else {
            panic!("expected a config failure");
        };
        let joined = problems.join("\n");
        for needle in ["panel: required", "seed", "bogus", "needs the 'factors' file", "colour: unknown key", "window"] {
            assert!(joined.contains(needle), "missing '{needle}' in\n{joined}");
        }
    }
}
