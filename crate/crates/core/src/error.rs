use thiserror::Error;

/// Errors raised by the library. Each variant maps onto a stable numeric
/// code (see [`Error::code`]) that the CLI uses as its exit status and the
/// C ABI returns from every call.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("size cap exceeded: {what} needs {requested}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("group mismatch: {0}")]
    GroupMismatch(String),

    #[error("structure has no safe symbol")]
    NoSafeSymbol,

    #[error("structure is not certified TSSM: {0}")]
    NotTssm(String),

    #[error("no consistent color for vertex {vertex}")]
    NoConsistentColor { vertex: usize },

    #[error("no admissible completion of the boundary condition")]
    EmptyFiber,

    #[error("inconsistent pins: {0}")]
    InconsistentPins(String),

    #[error("rooted labeled balls differ at radius {radius}")]
    BallMismatch { radius: usize },

    #[error("MCMC did not converge: {0}")]
    NonConvergence(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Machine-readable error class. Zero is reserved for success.
    pub fn code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Json(_) => 2,
            Error::CapExceeded { .. } | Error::BudgetExceeded(_) => 3,
            Error::InvalidArgument(_) | Error::GroupMismatch(_) => 4,
            Error::NoSafeSymbol | Error::NotTssm(_) => 5,
            Error::NoConsistentColor { .. } | Error::EmptyFiber | Error::InconsistentPins(_) => 6,
            Error::BallMismatch { .. } => 7,
            Error::NonConvergence(_) | Error::Oracle(_) => 8,
            Error::Io(_) => 9,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
