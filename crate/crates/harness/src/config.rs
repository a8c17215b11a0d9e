//! Experiment configuration read from a TOML file.

use std::path::{Path, PathBuf};

use bbob_core::mechanism::{MechanismConfig, ValueDistribution};
use serde::{Deserialize, Serialize};

use crate::dataset::{ingest_csv, ColumnMap, OrderDataset};

/// Delay cost per block on the normalized `[0, 1]` value scale used when no
/// dataset is supplied.
pub const DEFAULT_SYNTHETIC_DELAY: f64 = 0.001;
/// Delay cost per block in raw price units for dataset-driven runs.
pub const DEFAULT_RAW_DELAY: f64 = 0.3;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distributions {
    pub utility: Option<ValueDistribution>,
    pub cost: Option<ValueDistribution>,
    pub buy_quantity: Option<ValueDistribution>,
    pub sell_quantity: Option<ValueDistribution>,
}

/// The file format. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(rename = "K")]
    pub buyers: Option<usize>,
    #[serde(rename = "N")]
    pub sellers: Option<usize>,
    pub rho: Option<f64>,
    /// Delay per block on the normalized scale.
    pub d: Option<f64>,
    /// Delay per block in raw price units; only meaningful with a dataset.
    pub d_raw: Option<f64>,
    pub epsilon: Option<f64>,
    pub psi: Option<f64>,
    pub b_lo: Option<f64>,
    pub b_hi: Option<f64>,
    pub non_selfish_fraction: Option<f64>,
    pub miners: Option<usize>,
    pub replications: Option<usize>,
    pub grid: Option<Vec<usize>>,
    pub counts: Option<Vec<usize>>,
    pub a_max: Option<usize>,
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub distributions: Distributions,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] bbob_core::Error),
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Fills in defaults, loads the dataset if one is named (relative paths
    /// resolve against `base_dir`) and checks every value.
    pub fn resolve(&self, base_dir: &Path, columns: &ColumnMap) -> Result<Setting, ConfigError> {
        let dataset = match &self.dataset {
            Some(p) => Some(ingest_csv(&base_dir.join(p), columns, None)?),
            None => None,
        };
        if self.d.is_some() && self.d_raw.is_some() {
            return Err(ConfigError::Invalid("set either d or d_raw, not both".into()));
        }
        let delay = match (&dataset, self.d, self.d_raw) {
            (_, Some(d), _) => d,
            (Some(ds), None, raw) => ds.normalization.normalize_delta(raw.unwrap_or(DEFAULT_RAW_DELAY)),
            (None, None, Some(_)) => return Err(ConfigError::Invalid("d_raw needs a dataset".into())),
            (None, None, None) => DEFAULT_SYNTHETIC_DELAY,
        };
        if !(delay >= 0.0 && delay.is_finite()) {
            return Err(ConfigError::Invalid(format!("delay cost {delay} must be finite and >= 0")));
        }

        let rho = self.rho.unwrap_or(1.0);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(ConfigError::Invalid(format!("rho {rho} must be positive")));
        }
        let sellers = self.sellers.unwrap_or(100);
        let buyers = self.buyers.unwrap_or_else(|| scaled(rho, sellers));
        let (b_lo, b_hi) = (self.b_lo.unwrap_or(1.0), self.b_hi.unwrap_or(1.0));
        if !(b_lo > 0.0 && b_lo <= b_hi) {
            return Err(ConfigError::Invalid(format!("need 0 < b_lo <= b_hi, got [{b_lo}, {b_hi}]")));
        }
        let quantity = ValueDistribution::Uniform { lo: b_lo, hi: b_hi };

        let fitted = dataset.as_ref().map(OrderDataset::fitted).transpose()?;
        let pick = |given: &Option<ValueDistribution>, fit: Option<&ValueDistribution>, default: ValueDistribution| {
            given.clone().or_else(|| fit.cloned()).unwrap_or(default)
        };
        let unit = ValueDistribution::Uniform { lo: 0.0, hi: 1.0 };
        let fitted = fitted.as_ref();
        let base = MechanismConfig {
            buyers,
            sellers,
            psi: self.psi.unwrap_or(0.85),
            utility: pick(&self.distributions.utility, fitted.map(|f| &f[0]), unit.clone()),
            cost: pick(&self.distributions.cost, fitted.map(|f| &f[1]), unit),
            buy_quantity: pick(&self.distributions.buy_quantity, fitted.map(|f| &f[2]), quantity.clone()),
            sell_quantity: pick(&self.distributions.sell_quantity, fitted.map(|f| &f[3]), quantity),
            block_cap: self.a_max,
            delay_cost: delay,
            fee_unit: self.epsilon.unwrap_or(bbob_core::market::DEFAULT_FEE_UNIT),
            miners: self.miners.unwrap_or(5),
            non_selfish_fraction: self.non_selfish_fraction.unwrap_or(0.2),
        };
        base.validate()?;

        let replications = self.replications.unwrap_or(200);
        let grid = self.grid.clone().unwrap_or_else(|| vec![50, 100, 200, 400]);
        if replications == 0 || grid.is_empty() || grid.contains(&0) {
            return Err(ConfigError::Invalid("replications and grid entries must be at least 1".into()));
        }
        Ok(Setting {
            base,
            rho,
            replications,
            grid,
            counts: self.counts.clone(),
            a_max: self.a_max,
            dataset: dataset.map(|d| d.summary()),
        })
    }
}

pub(crate) fn scaled(rho: f64, n: usize) -> usize {
    ((rho * n as f64).round() as usize).max(1)
}

/// A fully resolved configuration, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    /// Population model at the configured `K` and `N`; grid runs override
    /// the counts.
    pub base: MechanismConfig,
    pub rho: f64,
    pub replications: usize,
    pub grid: Vec<usize>,
    pub counts: Option<Vec<usize>>,
    pub a_max: Option<usize>,
    pub dataset: Option<crate::dataset::DatasetSummary>,
}

impl Setting {
    pub fn synthetic() -> Self {
        Config::default()
            .resolve(Path::new("."), &ColumnMap::default())
            .expect("defaults are valid")
    }

    /// The population model at `N` sellers and `rho * N` buyers.
    pub fn at(&self, sellers: usize) -> MechanismConfig {
        MechanismConfig {
            buyers: scaled(self.rho, sellers),
            sellers,
            ..self.base.clone()
        }
    }
}
