//! Latent-factor covariance estimation and minimum-variance portfolio backtesting.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`] loads, filters and transforms monthly return panels.
//! * [`dimred`] and [`autoenc`] extract latent factors (PCA, SIMPLS, sparse PCA,
//!   sparse PLS and symmetric tanh autoencoders).
//! * [`cov`] turns factors into static or dynamic (DCC/GARCH) covariance matrices.
//! * [`opt`] solves the minimum-variance problems.
//! * [`backtest`] drives the rolling-window protocol, and [`metrics`] /
//!   [`attribution`] evaluate the results.

pub mod attribution;
pub mod autoenc;
pub mod backtest;
pub mod cov;
pub mod data;
pub mod dimred;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod opt;
pub mod optimize;
pub mod stats;

pub use error::{Error, Result};

pub use backtest::{BacktestResult, FactorMethod, HyperGrid, HyperParams, StrategySpec};
pub use cov::{CovSpec, CovarianceEstimate};
pub use opt::{OptimizerKind, PortfolioWeights};
pub use data::{FactorSeries, Month, ReturnsPanel, UniverseRules, WindowSpec};
pub use dimred::FactorBasis;

