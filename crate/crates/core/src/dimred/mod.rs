//! Linear dimensionality reduction: each method returns a [`FactorBasis`] whose
//! weights map centred predictors to latent factors, `F = (X - mean) W`.

mod enet;
mod pca;
mod simpls;
mod spca;

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use enet::{elastic_net_gram, ElasticNetOptions};
pub use pca::pca_fit;
pub use simpls::{simpls_fit, spls_fit};
pub use spca::{spca_fit, spca_fit_traced, SpcaTrace};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimRedMethod {
    Pca,
    Simpls,
    Spca,
    Spls,
}

/// Sparsity controls. `lambda1`/`lambda2` drive sparse PCA; `eta` is the sparse
/// PLS soft-threshold as a fraction of the largest direction entry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SparsityParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta: f64,
}

impl SparsityParams {
    pub fn spca(lambda1: f64, lambda2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            eta: 0.0,
        }
    }

    pub fn spls(eta: f64) -> Self {
        Self {
            eta,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorBasis {
    pub method: DimRedMethod,
    /// p x K weight matrix.
    pub weights: DMatrix<f64>,
    /// Training-period column means subtracted before projecting.
    pub means: DVector<f64>,
    pub params: SparsityParams,
    /// Components whose weights collapsed to zero.
    pub degenerate: Vec<bool>,
}

impl FactorBasis {
    pub fn n_inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.weights.ncols()
    }

    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    /// Number of non-zero weights.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    /// Write the weights as CSV: `p` rows, `K` columns, header = component index (1-based).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((1..=self.n_factors()).map(|k| k.to_string()))?;
        for row in self.weights.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Read a weight matrix written by [`FactorBasis::write_csv`].
pub fn read_weights_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let k = rdr.headers()?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        for field in rec.iter() {
            values.push(field.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid weight '{field}'"),
            })?);
        }
        rows += 1;
    }
    if values.len() != rows * k {
        return Err(Error::Shape("ragged weight csv".into()));
    }
    Ok(DMatrix::from_row_slice(rows, k, &values))
}

/// Latent factor series `F = (X - means) W`.
pub fn project(x: &DMatrix<f64>, basis: &FactorBasis) -> Result<DMatrix<f64>> {
    if x.ncols() != basis.n_inputs() {
        return Err(Error::Shape(format!(
            "predictors have {} columns, basis expects {}",
            x.ncols(),
            basis.n_inputs()
        )));
    }
    Ok(crate::linalg::center_columns(x, &basis.means) * &basis.weights)
}

pub(crate) fn check_input(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} contains missing or non-finite values")));
    }
    if x.nrows() < 2 || x.ncols() == 0 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: x.nrows(),
        });
    }
    Ok(())
}
