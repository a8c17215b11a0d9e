//! Report assembly and JSON/CSV output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// One aggregated measurement. `ratio` is the performance ratio
/// `sw_mean / sw_opt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "A")]
    pub a: usize,
    pub sw_mean: f64,
    pub sw_stderr: f64,
    pub sw_opt: f64,
    pub ratio: f64,
}

/// Top-level output document. Subcommands other than the simulations
/// carry their own row type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<R = ResultRow> {
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub results: Vec<R>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write report to {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl<R: Serialize> Report<R> {
    pub fn new(config: &impl Serialize, seed: u64, results: Vec<R>) -> Result<Self, ReportError> {
        Ok(Self {
            config: serde_json::to_value(config)?,
            seed,
            version: VERSION.to_owned(),
            results,
        })
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// The result rows only, under a header with the row field names.
    pub fn to_csv(&self) -> Result<String, ReportError> {
        to_csv(&self.results)
    }

    pub fn render(&self, format: Format) -> Result<String, ReportError> {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

/// Serializes flat records as CSV with a header row.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Write {
        path: "<buffer>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), ReportError> {
    let wrap = |source| ReportError::Write {
        path: path.map_or("<stdout>".into(), |p| p.display().to_string()),
        source,
    };
    match path {
        Some(p) => std::fs::write(p, text).map_err(wrap),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(wrap),
    }
}
