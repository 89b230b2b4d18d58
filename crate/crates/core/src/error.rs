use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("innovation matrix is numerically singular")]
    SingularInnovation,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("QP iteration limit ({iterations}) exceeded; stationarity {stationarity:.3e}, feasibility {feasibility:.3e}")]
    QpIterationLimit {
        iterations: usize,
        stationarity: f64,
        feasibility: f64,
    },

    #[error("QP certificate rejected: {0}")]
    QpCertificate(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("implemented control violates its bounds: {0}")]
    ConstraintViolation(String),

    #[error("plant model left its valid region: {0}")]
    PlantDomain(String),

    #[error("step {step}, loop `{name}`: {source}")]
    Step {
        step: usize,
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at_step(self, step: usize, name: &str) -> Self {
        Error::Step {
            step,
            name: name.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
