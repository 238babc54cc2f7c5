use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("integration left its domain at t = {t}: {msg}")]
    IntegrationDomain { t: f64, msg: String },
    #[error("solver failed at t = {t} (last good state {last:?}): {msg}")]
    Solver { t: f64, last: Vec<f64>, msg: String },
    #[error("query t = {t} outside integrated range [{lo}, {hi}]")]
    Range { t: f64, lo: f64, hi: f64 },
    #[error("chart error: {0}")]
    Chart(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
