//! Order-book CSV ingestion and price normalization.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bbob_core::mechanism::{fit_empirical, ValueDistribution};
use serde::{Deserialize, Serialize};

/// Bid price over utility, and ask price over cost.
pub const PRICE_VALUE_RATIO: f64 = 1.05;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot open {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed CSV at row {row}: {source}")]
    Csv { path: PathBuf, row: u64, source: csv::Error },
    #[error("{path}: missing column `{column}` in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
    #[error("{path}: row {row}, column `{column}`: `{value}` is not a number")]
    NotNumeric { path: PathBuf, row: u64, column: String, value: String },
    #[error("{path}: row {row}, column `{column}`: {value} must be positive")]
    NotPositive { path: PathBuf, row: u64, column: String, value: f64 },
    #[error("bad column map `{0}`; expected field=header pairs separated by commas")]
    BadColumnMap(String),
    #[error("degenerate price range: all utilities and costs equal {0}")]
    DegenerateRange(f64),
}

/// Header names of the four order columns and the optional timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub bid_price: String,
    pub ask_price: String,
    pub bid_qty: String,
    pub ask_qty: String,
    pub timestamp: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            bid_price: "bid_price".into(),
            ask_price: "ask_price".into(),
            bid_qty: "bid_qty".into(),
            ask_qty: "ask_qty".into(),
            timestamp: None,
        }
    }
}

impl FromStr for ColumnMap {
    type Err = DatasetError;

    /// Parses overrides like `bid_price=Bid,ask_qty=AskSize`; fields not
    /// mentioned keep their default names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let bad = || DatasetError::BadColumnMap(s.to_owned());
            let (field, header) = part.split_once('=').ok_or_else(bad)?;
            let header = header.trim().to_owned();
            match field.trim() {
                "bid_price" => map.bid_price = header,
                "ask_price" => map.ask_price = header,
                "bid_qty" => map.bid_qty = header,
                "ask_qty" => map.ask_qty = header,
                "timestamp" => map.timestamp = Some(header),
                _ => return Err(bad()),
            }
        }
        Ok(map)
    }
}

/// Affine map from raw value units to `[0, 1]`: `(x - offset) / scale`,
/// applied after dividing prices by `ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub ratio: f64,
    pub offset: f64,
    pub scale: f64,
}

impl Normalization {
    pub fn value(&self, price: f64) -> f64 {
        (price / self.ratio - self.offset) / self.scale
    }

    /// Normalizes a difference of values, such as a delay cost.
    pub fn normalize_delta(&self, raw: f64) -> f64 {
        raw / self.scale
    }

    /// Maps a normalized welfare (a sum of value differences) back to raw
    /// units.
    pub fn denormalize_welfare(&self, sw: f64) -> f64 {
        sw * self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub bid_price: f64,
    pub ask_price: f64,
    pub bid_qty: f64,
    pub ask_qty: f64,
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderDataset {
    pub source: PathBuf,
    pub rows: Vec<OrderRow>,
    pub normalization: Normalization,
}

/// What a report records about the dataset: enough to undo the
/// normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: PathBuf,
    pub rows: usize,
    pub normalization: Normalization,
}

impl OrderDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn utilities(&self) -> Vec<f64> {
        self.rows.iter().map(|r| self.normalization.value(r.bid_price)).collect()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| self.normalization.value(r.ask_price)).collect()
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            source: self.source.clone(),
            rows: self.len(),
            normalization: self.normalization,
        }
    }

    /// Empirical fits of normalized utility, normalized cost, bid quantity
    /// and ask quantity, in that order.
    pub fn fitted(&self) -> bbob_core::Result<[ValueDistribution; 4]> {
        let (bq, sq): (Vec<f64>, Vec<f64>) = self.rows.iter().map(|r| (r.bid_qty, r.ask_qty)).unzip();
        Ok([
            fit_empirical(&self.utilities(), (0.0, 1.0))?,
            fit_empirical(&self.costs(), (0.0, 1.0))?,
            fit_empirical(&bq, range(&bq))?,
            fit_empirical(&sq, range(&sq))?,
        ])
    }
}

fn range(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Reads an order CSV. Without an explicit `normalization`, the pooled range
/// of utilities and costs is mapped onto `[0, 1]`.
///
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn ingest_csv(
    path: &Path,
    columns: &ColumnMap,
    normalization: Option<Normalization>,
) -> Result<OrderDataset, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let csv_err = |row: u64, source: csv::Error| DatasetError::Csv { path: path.to_owned(), row, source };
    let header = reader.headers().map_err(|e| csv_err(0, e))?.clone();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| {
        index.get(name).copied().ok_or_else(|| DatasetError::MissingColumn {
            path: path.to_owned(),
            column: name.to_owned(),
        })
    };
    let numeric = [&columns.bid_price, &columns.ask_price, &columns.bid_qty, &columns.ask_qty];
    let cols: Vec<usize> = numeric.iter().map(|c| find(c)).collect::<Result<_, _>>()?;
    let ts_col = columns.timestamp.as_deref().map(find).transpose()?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i as u64 + 1;
        let record = record.map_err(|e| csv_err(row, e))?;
        let mut vals = [0.0; 4];
        for (k, (&col, name)) in cols.iter().zip(numeric).enumerate() {
            let cell = record.get(col).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| DatasetError::NotNumeric {
                path: path.to_owned(),
                row,
                column: name.clone(),
                value: cell.to_owned(),
            })?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(DatasetError::NotPositive {
                    path: path.to_owned(),
                    row,
                    column: name.clone(),
                    value: v,
                });
            }
            vals[k] = v;
        }
        rows.push(OrderRow {
            bid_price: vals[0],
            ask_price: vals[1],
            bid_qty: vals[2],
            ask_qty: vals[3],
            timestamp: ts_col.and_then(|c| record.get(c)).map(str::to_owned),
        });
    }
    if rows.is_empty() {
        return Err(DatasetError::Empty { path: path.to_owned() });
    }

    let normalization = match normalization {
        Some(n) => n,
        None => {
            let values: Vec<f64> = rows
                .iter()
                .flat_map(|r| [r.bid_price / PRICE_VALUE_RATIO, r.ask_price / PRICE_VALUE_RATIO])
                .collect();
            let (lo, hi) = range(&values);
            if hi <= lo {
                return Err(DatasetError::DegenerateRange(lo));
            }
            Normalization {
                ratio: PRICE_VALUE_RATIO,
                offset: lo,
                scale: hi - lo,
            }
        }
    };
    Ok(OrderDataset {
        source: path.to_owned(),
        rows,
        normalization,
    })
}
