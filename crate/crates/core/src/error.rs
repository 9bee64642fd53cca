use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("quadrature did not converge within {evaluations} integrand evaluations (estimate {estimate})")]
    NonConvergedQuadrature { evaluations: usize, estimate: f64 },
    #[error("unsupported spatial profile: {0}")]
    UnsupportedProfile(&'static str),
    #[error("energy grids differ")]
    GridMismatch,
    #[error("negative diffusion coefficient {value} at face {index}")]
    NegativeCoefficient { index: usize, value: f64 },
    #[error("profile at t = {time} carries mass {mass:e} within two cells of e_max")]
    BoundaryContact { time: f64, mass: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = core::result::Result<T, Error>;
