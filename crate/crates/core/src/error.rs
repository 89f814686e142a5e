use thiserror::Error;

/// Errors raised by the channel, simulation and tomography routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-physical state: {0}")]
    NonPhysical(String),
    #[error("non-physical channel: {0}")]
    NonPhysicalChannel(String),
    #[error("process matrix is not dephasing-shaped: {0} eigenvalues above threshold")]
    NotDephasing(usize),
    #[error("map is not completely positive (min chi eigenvalue {0:.3e})")]
    NotCompletelyPositive(f64),
    #[error("invalid chi spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("Kraus operators are incomplete (deviation {0:.3e})")]
    IncompleteKraus(f64),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error("target D vector violates complete positivity")]
    TargetNotCP,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("optimizer did not converge (gradient norm {0:.3e})")]
    NonConvergence(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Variant name, used by the CLI when reporting numerical failures.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonPhysical(_) => "NonPhysical",
            Error::NonPhysicalChannel(_) => "NonPhysicalChannel",
            Error::NotDephasing(_) => "NotDephasing",
            Error::NotCompletelyPositive(_) => "NotCompletelyPositive",
            Error::InvalidSpectrum(_) => "InvalidSpectrum",
            Error::IncompleteKraus(_) => "IncompleteKraus",
            Error::OutOfRange(_) => "OutOfRange",
            Error::FitDiverged(_) => "FitDiverged",
            Error::TargetNotCP => "TargetNotCP",
            Error::InsufficientData(_) => "InsufficientData",
            Error::NonConvergence(_) => "NonConvergence",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }

    /// True for errors caused by malformed input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonPhysical(_)
                | Error::OutOfRange(_)
                | Error::TargetNotCP
                | Error::InsufficientData(_)
                | Error::InvalidArgument(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
