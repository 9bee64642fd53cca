use gyroshe_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("invalid configuration or input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl LabError {
    /// 1 for invalid input or failed checks, 2 for numerical non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<CoreError> for LabError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonConvergedQuadrature { .. } | CoreError::BoundaryContact { .. } => {
                LabError::Numerical(e.to_string())
            }
            _ => LabError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Io(e.to_string())
    }
}
