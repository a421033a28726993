use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    InputDimension { expected: usize, got: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Divergence {
        epoch: usize,
        step: usize,
        reason: &'static str,
    },

    #[error("cannot aggregate an empty set")]
    EmptyAggregation,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("ill-conditioned Fisher matrix (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("invalid noise variance {variance} at row {row}")]
    InvalidNoise { row: usize, variance: f64 },

    #[error("censorship infeasible: acceptance rate {rate:e} after {attempts} draws")]
    InfeasibleCensorship { rate: f64, attempts: u64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("sample {index} = {value} outside [0, 1]")]
    SampleOutOfRange { index: usize, value: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("posterior mass {mass:e} inside the prior box is degenerate")]
    DegeneratePosterior { mass: f64 },

    #[error("unsupported: {0}")]
    Unsupported(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn ensure_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            got,
        })
    }
}
