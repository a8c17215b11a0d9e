use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid market instance: {0}")]
    InvalidInstance(String),

    #[error("length mismatch: {buyers} buyer utilities vs {sellers} seller costs")]
    LengthMismatch { buyers: usize, sellers: usize },

    #[error("fee profile does not match instance: {0}")]
    InvalidProfile(String),

    #[error("block size {block_size} admits a pure equilibrium (threshold {threshold}); use the pure solver")]
    PureEquilibriumRegime { block_size: usize, threshold: usize },

    #[error("malformed distributions: h(0) = {h0}, h(1) = {h1}; expected h(0) <= 0 <= h(1)")]
    NoEtaRoot { h0: f64, h1: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid mechanism configuration: {0}")]
    InvalidConfig(String),
}
