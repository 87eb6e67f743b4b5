use crate::optimizer::OptimizationReport;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the library.
///
/// The CLI maps these onto its exit-code contract: parameter and config
/// problems are exit 2, numerical failures exit 3, I/O exit 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Noise model degenerate for the requested operation (for example a
    /// zero standard deviation where a threshold or entropy needs σ > 0).
    #[error("degenerate noise profile: {0}")]
    DegenerateNoise(String),

    /// A quadrature routine stopped without reaching the accuracy contract.
    #[error("quadrature reached absolute accuracy {achieved:.3e}, required {required:.3e}")]
    Accuracy { achieved: f64, required: f64 },

    /// No optimizer start converged within the iteration budget. The best
    /// point seen so far is still attached so callers can decide whether to
    /// use it anyway.
    #[error("optimizer did not converge within {max_iters} iterations from any start")]
    NonConvergence {
        max_iters: usize,
        best: Box<OptimizationReport>,
    },

    /// An exhaustive search was refused because it would enumerate too many
    /// candidates.
    #[error("search would enumerate {candidates:.3e} candidates, above the {limit:.3e} cap")]
    CostBound { candidates: f64, limit: f64 },

    /// Every grid point of a sweep failed to optimize.
    #[error("constellation optimizer failed at all {total} sweep grid points")]
    SweepAllFailed { total: usize },

    /// Configuration file could not be parsed or resolved.
    #[error("config: {0}")]
    Config(String),

    /// Malformed data while reading a previously emitted file.
    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
