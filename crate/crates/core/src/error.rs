use thiserror::Error;

use crate::params::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid configuration:\n{}", format_violations(.0))]
    Config(Vec<Violation>),
    #[error("could not parse configuration: {0}")]
    Parse(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures that terminate a single simulated path. The run carries on with
/// the remaining paths and reports these per path.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("explosion guard: company count would exceed n_max = {n_max} at t = {t}")]
    ExplosionGuard { t: f64, n_max: usize },
    #[error("capitalization left the representable range at t = {t}")]
    Overflow { t: f64 },
    #[error("wealth of portfolio `{rule}` became non-positive ({value}) at t = {t}; dt is too coarse for its leverage")]
    NonPositiveWealth { t: f64, rule: String, value: f64 },
}

impl PathError {
    pub fn tag(&self) -> &'static str {
        match self {
            PathError::ExplosionGuard { .. } => "explosion_guard",
            PathError::Overflow { .. } => "overflow",
            PathError::NonPositiveWealth { .. } => "non_positive_wealth",
        }
    }
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("  - {x}"))
        .collect::<Vec<_>>()
        .join("\n")
}
