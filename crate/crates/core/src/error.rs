use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid coefficient profile: {0}")]
    InvalidProfile(String),

    #[error("argument {value} outside kernel domain [0, {length}]")]
    Domain { value: f64, length: f64 },

    #[error("kernel K is two-valued at xi = s = {0}; request a one-sided limit")]
    KernelAmbiguity(f64),

    #[error("singular pivot in banded factorization at row {row}")]
    SingularMatrix { row: usize },

    #[error(
        "Newton iteration did not converge in {iterations} iterations (residual {residual:e})"
    )]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("non-finite values detected ({0})")]
    Divergence(String),

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("Picard iteration is not contracting: sweep differences grew for {consecutive} consecutive sweeps (last {last:e})")]
    PicardDivergence { consecutive: usize, last: f64 },

    #[error(
        "Picard iteration did not reach tolerance in {sweeps} sweeps (last difference {last:e})"
    )]
    PicardNotConverged { sweeps: usize, last: f64 },

    #[error("objective is not finite at iteration {iteration}: cost = {cost}")]
    NonFiniteObjective { iteration: usize, cost: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {message}")]
    Csv { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures raised by the time stepper or the fixed-point oracle.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix { .. }
                | Error::NewtonFailed { .. }
                | Error::Divergence(_)
                | Error::StepFailed { .. }
                | Error::PicardDivergence { .. }
                | Error::PicardNotConverged { .. }
        )
    }
}
