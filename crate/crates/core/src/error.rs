use thiserror::Error;

/// Errors produced by the numerical routes.
///
/// Every variant maps to a stable machine-readable [`Error::code`], which the
/// CLI copies into reports.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        context: String,
        iterations: usize,
        residual: f64,
        /// Best iterate reached before giving up, when the solver has one.
        best: Option<Vec<f64>>,
    },

    #[error("degenerate potential: {0}")]
    DegeneratePotential(String),

    #[error("sigma(0) = {0:.3e} is not positive; the decay rate is -infinity")]
    DegenerateSigma(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("optimization failed: {message}")]
    Optimization { message: String, trace: Vec<f64> },

    #[error("weight underflow: {0}")]
    Underflow(String),

    #[error("statistical validity: {0}")]
    StatisticalValidity(String),

    #[error("resolution: {0}")]
    Resolution(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Domain(_) => "domain",
            Error::Convergence { .. } => "convergence",
            Error::DegeneratePotential(_) => "degenerate_potential",
            Error::DegenerateSigma(_) => "degenerate_sigma",
            Error::Numerical(_) => "numerical",
            Error::Optimization { .. } => "optimization",
            Error::Underflow(_) => "underflow",
            Error::StatisticalValidity(_) => "statistical_validity",
            Error::Resolution(_) => "resolution",
        }
    }

    /// True for failures of an iterative solver to reach its tolerance.
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. } | Error::Optimization { .. } | Error::Numerical(_)
        )
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
