use thiserror::Error;

/// Errors raised anywhere in the laboratory.
///
/// The CLI maps each variant onto a process exit code, see [`LabError::exit_code`].
#[derive(Error, Debug, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular resolvent: lambda = {lambda} coincides with eigenvalue {index}")]
    SingularResolvent { lambda: f64, index: usize },

    #[error("mark integral unavailable: no closed form and no quadrature configured for {0}")]
    QuadratureNotConfigured(String),

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("numerical blow-up at step {step} (t = {time})")]
    NumericalBlowup { step: usize, time: f64 },

    #[error("coupling error: {0}")]
    Coupling(String),

    #[error("inconsistent report: {0}")]
    Inconsistency(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl LabError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// 3 config, 4 capability, 5 numerical blow-up, 1 anything environmental.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Capability(_) | LabError::QuadratureNotConfigured(_) => 4,
            LabError::NumericalBlowup { .. } => 5,
            LabError::Io(_) => 1,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(LabError::DimensionMismatch { expected, got });
    }
    Ok(())
}
