use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::Month;
use crate::{Error, Result};

/// Wide-form time series (`date,<name1>,<name2>,...`), e.g. observed factor
/// returns or a risk-free rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSeries {
    pub dates: Vec<Month>,
    pub names: Vec<String>,
    /// T x K values; missing cells are `NaN`.
    pub values: DMatrix<f64>,
}

impl FactorSeries {
    pub fn new(dates: Vec<Month>, names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.shape() != (dates.len(), names.len()) {
            return Err(Error::Shape(format!(
                "factor values are {:?}, expected ({}, {})",
                values.shape(),
                dates.len(),
                names.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("factor dates must be strictly increasing".into()));
        }
        Ok(Self { dates, names, values })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Values of the named columns at the requested dates (T x K).
    pub fn aligned(&self, dates: &[Month], columns: &[String]) -> Result<DMatrix<f64>> {
        let cols: Vec<usize> = columns
            .iter()
            .map(|c| {
                self.column_index(c)
                    .ok_or_else(|| Error::Config(format!("factor series has no column '{c}'")))
            })
            .collect::<Result<_>>()?;
        let mut out = DMatrix::zeros(dates.len(), cols.len());
        for (i, d) in dates.iter().enumerate() {
            let row = self
                .dates
                .binary_search(d)
                .map_err(|_| Error::Config(format!("factor series has no observation for {d}")))?;
            for (k, &c) in cols.iter().enumerate() {
                out[(i, k)] = self.values[(row, c)];
            }
        }
        Ok(out)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .column_index(name)
            .ok_or_else(|| Error::Config(format!("factor series has no column '{name}'")))?;
        Ok(self.values.column(c).iter().copied().collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (t, d) in self.dates.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(self.values.row(t).iter().map(|v| {
                if v.is_nan() {
                    String::new()
                } else {
                    v.to_string()
                }
            }));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_factor_series(path: impl AsRef<Path>) -> Result<FactorSeries> {
    read_factor_series(std::fs::File::open(path.as_ref())?)
}

pub fn read_factor_series<R: Read>(reader: R) -> Result<FactorSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "date" {
        return Err(Error::Parse {
            line: 1,
            message: "factor series header must be 'date,<factor>,...'".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let mut rows: BTreeMap<Month, Vec<f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let date: Month = record[0].parse().map_err(|e: Error| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let values = (1..=names.len())
            .map(|i| match record.get(i).unwrap_or("") {
                "" => Ok(f64::NAN),
                s => s.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid value '{s}'"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        if rows.insert(date, values).is_some() {
            return Err(Error::Duplicate {
                date: date.to_string(),
                asset: "<factor row>".into(),
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let dates: Vec<Month> = rows.keys().copied().collect();
    let values = DMatrix::from_fn(dates.len(), names.len(), |i, j| rows[&dates[i]][j]);
    FactorSeries::new(dates, names, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_aligns() {
        let csv = "date,mkt,smb\n2000-02,0.02,\n2000-01,0.01,0.5\n";
        let f = read_factor_series(csv.as_bytes()).unwrap();
        assert_eq!(f.names, ["mkt", "smb"]);
        let d: Month = "2000-02".parse().unwrap();
        let a = f.aligned(&[d], &["mkt".to_string()]).unwrap();
        assert_eq!(a[(0, 0)], 0.02);
        assert!(f.values[(1, 1)].is_nan());
        assert!(f.aligned(&[d], &["hml".to_string()]).is_err());
        assert!(f.aligned(&["1999-01".parse().unwrap()], &["mkt".to_string()]).is_err());
    }
}
