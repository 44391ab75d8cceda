use thiserror::Error;

use crate::domain::DemandModel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("price sensitivity {alpha} is outside the admissible range for the {model} model")]
    InvalidAlpha { model: DemandModel, alpha: f64 },

    #[error("outside-option share {0} must lie strictly between 0 and 1")]
    InvalidShare(f64),

    #[error("blended price {0} must be positive")]
    InvalidPrice(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("flow {flow_id}: relative cost {value} is not positive")]
    NonPositiveCost { flow_id: String, value: f64 },

    #[error("fitted cost scale {0} is not positive; blended price is not a rational uniform price for these parameters")]
    NonPositiveGamma(f64),

    #[error("bundle has no flows")]
    EmptyBundle,

    #[error("non-finite utility exponent in share computation")]
    OverflowGuard,

    #[error("price solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("class-constrained bundling needs a class label on every flow (missing on {0})")]
    MissingClassLabels(String),

    #[error("exhaustive partition search is limited to {limit} units, got {flows}")]
    TooManyFlows { flows: usize, limit: usize },

    #[error("capture undefined: maximum ({max}) and original ({orig}) coincide")]
    DegenerateBaseline { orig: f64, max: f64 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("synthetic moment calibration did not converge after {0} iterations")]
    SynthNonConvergence(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the numerical machinery (as opposed to bad
    /// input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveCost { .. }
                | Error::NonPositiveGamma(_)
                | Error::OverflowGuard
                | Error::NoConvergence { .. }
                | Error::DegenerateBaseline { .. }
                | Error::SynthNonConvergence(_)
        )
    }
}
