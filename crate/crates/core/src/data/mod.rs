//! Return panels: loading, universe selection, rank transform, window splits
//! and synthetic factor-structured data.

mod factors;
mod panel;
mod synthetic;
mod transform;
mod universe;

use serde::{Deserialize, Serialize};

pub use factors::{load_factor_series, read_factor_series, FactorSeries};
pub use panel::{load_panel, read_panel, ColumnSchema, Month, ReturnsPanel};
pub use synthetic::{generate, generate_synthetic, SyntheticPanel, SyntheticSpec};
pub use transform::{
    rank_transform, rank_transform_along, split_point, split_ranges, split_train_validation, RankAxis,
};
pub use universe::{eligible_assets, filter_universe, UniverseRules};

use crate::{Error, Result};

/// Rolling estimation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Number of monthly observations per window (T0).
    pub length: usize,
    pub step: usize,
    /// Share of each window held out for hyperparameter validation.
    pub validation_fraction: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length: 240,
            step: 1,
            validation_fraction: 0.2,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::InvalidParameter("window length must be at least 2".into()));
        }
        if self.step == 0 {
            return Err(Error::InvalidParameter("window step must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction {} must lie in (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}
