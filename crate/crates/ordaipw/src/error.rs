use thiserror::Error;

/// Errors in user-supplied configuration: flags, config files, basis specs.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading configuration: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised while constructing, validating, or converting datasets.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset is censored: record {0} has delta = 0")]
    Censored(usize),
    #[error("censoring time unavailable: record {0} has delta = 1 and no ctime")]
    CtimeUnavailable(usize),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors raised by model fitting and estimation.
#[derive(Debug, Error)]
pub enum EstError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("separation: |alpha_j + beta_a| exceeded 30 during fitting")]
    Separation,
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(
        "positivity violation: censoring survival below {floor:.1e} for {count} subject(s), first at record {first}"
    )]
    Positivity { floor: f64, count: usize, first: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}
