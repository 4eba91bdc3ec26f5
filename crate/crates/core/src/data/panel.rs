use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A calendar month, printed and parsed as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month {
    pub year: i32,
    pub month: u8,
}

impl Month {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidParameter(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    /// Months elapsed since year 0, used for arithmetic.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn next(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }

    pub fn plus(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("invalid month '{s}', expected YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        Month::new(year, month).map_err(|_| bad())
    }
}

/// Long-form column names of a panel CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub date: String,
    pub asset: String,
    pub ret: String,
    pub price: Option<String>,
    pub market_cap: Option<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            asset: "asset".into(),
            ret: "return".into(),
            price: Some("price".into()),
            market_cap: Some("market_cap".into()),
        }
    }
}

/// Monthly simple returns for a set of assets. Missing cells hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    pub dates: Vec<Month>,
    pub assets: Vec<String>,
    /// T x N, decimal simple returns.
    pub returns: DMatrix<f64>,
    pub prices: Option<DMatrix<f64>>,
    pub market_caps: Option<DMatrix<f64>>,
}

impl ReturnsPanel {
    pub fn new(
        dates: Vec<Month>,
        assets: Vec<String>,
        returns: DMatrix<f64>,
        prices: Option<DMatrix<f64>>,
        market_caps: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let (t, n) = (dates.len(), assets.len());
        if returns.shape() != (t, n) {
            return Err(Error::Shape(format!(
                "returns are {:?}, expected ({t}, {n})",
                returns.shape()
            )));
        }
        for extra in [&prices, &market_caps].into_iter().flatten() {
            if extra.shape() != (t, n) {
                return Err(Error::Shape(format!(
                    "auxiliary matrix is {:?}, expected ({t}, {n})",
                    extra.shape()
                )));
            }
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("dates must be strictly increasing".into()));
        }
        let unique: BTreeSet<&String> = assets.iter().collect();
        if unique.len() != n {
            return Err(Error::InvalidParameter("duplicate asset identifiers".into()));
        }
        if let Some(bad) = returns.iter().find(|r| !r.is_nan() && **r <= -1.0) {
            return Err(Error::InvalidParameter(format!("return {bad} is not above -1")));
        }
        Ok(Self {
            dates,
            assets,
            returns,
            prices,
            market_caps,
        })
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn date_index(&self, date: Month) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn asset_index(&self, asset: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == asset)
    }

    pub fn missing_count(&self) -> usize {
        self.returns.iter().filter(|v| v.is_nan()).count()
    }

    /// Restrict the panel to a subset of asset columns (in the given order).
    pub fn select_assets(&self, cols: &[usize]) -> ReturnsPanel {
        let pick = |m: &DMatrix<f64>| crate::linalg::select_columns(m, cols);
        ReturnsPanel {
            dates: self.dates.clone(),
            assets: cols.iter().map(|&j| self.assets[j].clone()).collect(),
            returns: pick(&self.returns),
            prices: self.prices.as_ref().map(pick),
            market_caps: self.market_caps.as_ref().map(pick),
        }
    }

    /// Write the panel in long form, skipping cells with no return.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date", "asset", "return"];
        if self.prices.is_some() {
            header.push("price");
        }
        if self.market_caps.is_some() {
            header.push("market_cap");
        }
        w.write_record(&header)?;
        let fmt = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
        for (t, date) in self.dates.iter().enumerate() {
            for (j, asset) in self.assets.iter().enumerate() {
                let r = self.returns[(t, j)];
                let p = self.prices.as_ref().map(|m| m[(t, j)]);
                let c = self.market_caps.as_ref().map(|m| m[(t, j)]);
                if r.is_nan() && p.is_none_or(f64::is_nan) && c.is_none_or(f64::is_nan) {
                    continue;
                }
                let mut rec = vec![date.to_string(), asset.clone(), fmt(r)];
                rec.extend(p.map(fmt));
                rec.extend(c.map(fmt));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct Row {
    date: Month,
    asset: String,
    ret: f64,
    price: f64,
    cap: f64,
}

/// Load a long-form panel CSV from disk.
pub fn load_panel(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<ReturnsPanel> {
    let file = std::fs::File::open(path.as_ref())?;
    read_panel(file, schema)
}

/// Parse a long-form panel (`date,asset,return[,price,market_cap]`).
///
/// Rows may come in any order; the result is sorted by date and asset. Empty
/// fields are missing values and are kept as `NaN`.
pub fn read_panel<R: Read>(reader: R, schema: &ColumnSchema) -> Result<ReturnsPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Parse {
            line: 1,
            message: "empty file".into(),
        });
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        find(name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing required column '{name}'"),
        })
    };
    let (i_date, i_asset, i_ret) = (
        required(&schema.date)?,
        required(&schema.asset)?,
        required(&schema.ret)?,
    );
    let i_price = schema.price.as_deref().and_then(find);
    let i_cap = schema.market_cap.as_deref().and_then(find);

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |message: String| Error::Parse { line, message };
        let field = |i: usize| record.get(i).unwrap_or("");
        let date: Month = field(i_date)
            .parse()
            .map_err(|e: Error| parse_err(e.to_string()))?;
        let asset = field(i_asset).to_string();
        if asset.is_empty() {
            return Err(parse_err("empty asset identifier".into()));
        }
        let number = |i: Option<usize>, what: &str| -> Result<f64> {
            match i.map(field) {
                None | Some("") => Ok(f64::NAN),
                Some(s) => s
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("invalid {what} '{s}'"))),
            }
        };
        let ret = number(Some(i_ret), "return")?;
        if !ret.is_nan() && (ret <= -1.0 || !ret.is_finite()) {
            return Err(parse_err(format!("return {ret} must be finite and above -1")));
        }
        let price = number(i_price, "price")?;
        let cap = number(i_cap, "market cap")?;
        rows.push(Row {
            date,
            asset,
            ret,
            price,
            cap,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }

    let dates: Vec<Month> = rows.iter().map(|r| r.date).collect::<BTreeSet<_>>().into_iter().collect();
    let assets: Vec<String> = rows
        .iter()
        .map(|r| r.asset.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let date_pos: BTreeMap<Month, usize> = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let asset_pos: BTreeMap<&str, usize> = assets.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();

    let (t, n) = (dates.len(), assets.len());
    let mut returns = DMatrix::from_element(t, n, f64::NAN);
    let mut prices = i_price.map(|_| DMatrix::from_element(t, n, f64::NAN));
    let mut caps = i_cap.map(|_| DMatrix::from_element(t, n, f64::NAN));
    let mut seen = vec![false; t * n];
    for row in &rows {
        let (i, j) = (date_pos[&row.date], asset_pos[row.asset.as_str()]);
        if std::mem::replace(&mut seen[i * n + j], true) {
            return Err(Error::Duplicate {
                date: row.date.to_string(),
                asset: row.asset.clone(),
            });
        }
        returns[(i, j)] = row.ret;
        if let Some(p) = prices.as_mut() {
            p[(i, j)] = row.price;
        }
        if let Some(c) = caps.as_mut() {
            c[(i, j)] = row.cap;
        }
    }
    ReturnsPanel::new(dates, assets, returns, prices, caps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_roundtrip_and_arithmetic() {
        let m: Month = "1979-12".parse().unwrap();
        assert_eq!(m.next().to_string(), "1980-01");
        assert_eq!(m.plus(-12).to_string(), "1978-12");
        assert!("1979-13".parse::<Month>().is_err());
        assert!("79-12".parse::<Month>().is_err());
    }

    #[test]
    fn loads_small_panel_with_missing_cell() {
        let csv = "date,asset,return\n2000-01,A,0.01\n2000-01,B,0.02\n2000-02,A,-0.01\n";
        let p = read_panel(csv.as_bytes(), &ColumnSchema::default()).unwrap();
        assert_eq!((p.n_dates(), p.n_assets()), (2, 2));
        assert_eq!(p.missing_count(), 1);
        assert!(p.returns[(1, 1)].is_nan());
        assert!(p.prices.is_none());
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(
            read_panel("".as_bytes(), &ColumnSchema::default()),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read_panel("date,asset,return\n".as_bytes(), &ColumnSchema::default()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn sorts_unsorted_dates() {
        let csv = "date,asset,return\n2001-03,A,0.01\n2000-01,A,0.02\n2000-07,A,0.0\n";
        let p = read_panel(csv.as_bytes(), &ColumnSchema::default()).unwrap();
        let d: Vec<String> = p.dates.iter().map(|d| d.to_string()).collect();
        assert_eq!(d, ["2000-01", "2000-07", "2001-03"]);
        assert_eq!(p.returns[(0, 0)], 0.02);
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "date,asset,return\n2000-01,A,0.01\n2000-02,A,abc\n";
        match read_panel(csv.as_bytes(), &ColumnSchema::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_rejected() {
        let csv = "date,asset,return\n2000-01,A,0.01\n2000-01,A,0.02\n";
        assert!(matches!(
            read_panel(csv.as_bytes(), &ColumnSchema::default()),
            Err(Error::Duplicate { .. })
        ));
    }

    #[test]
    fn write_then_read_preserves_panel() {
        let csv = "date,asset,return,price,market_cap\n2000-01,A,0.01,10,100\n2000-01,B,,20,50\n2000-02,A,-0.01,9.9,99\n2000-02,B,0.5,30,75\n";
        let p = read_panel(csv.as_bytes(), &ColumnSchema::default()).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = read_panel(buf.as_slice(), &ColumnSchema::default()).unwrap();
        assert_eq!(p.dates, q.dates);
        assert_eq!(p.assets, q.assets);
        assert_eq!(format!("{:?}", p.returns), format!("{:?}", q.returns));
        assert_eq!(p.prices, q.prices);
    }
}
