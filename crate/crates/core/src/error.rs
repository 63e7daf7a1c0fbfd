use thiserror::Error;

/// Errors produced while validating inputs or running a test.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid not strictly increasing at index {0}")]
    GridNotIncreasing(usize),
    #[error("grid needs at least 2 points, got {0}")]
    GridTooShort(usize),
    #[error("n >= 2 required, got {0} subject(s)")]
    TooFewSubjects(usize),
    #[error("row {row} has {found} values, expected {expected}")]
    NonRectangular { row: usize, expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("response length mismatch: {responses} responses for {subjects} subjects")]
    ResponseLengthMismatch { subjects: usize, responses: usize },
    #[error("subject {0} has no observations")]
    EmptySubject(usize),
    #[error("subject {subject}: times and values differ in length ({times} vs {values})")]
    RaggedSubject { subject: usize, times: usize, values: usize },
    #[error("subject {subject}: duplicate observation time {time}")]
    DuplicateTime { subject: usize, time: f64 },
    #[error("time {time} lies outside the domain [{lo}, {hi}]")]
    OutsideDomain { time: f64, lo: f64, hi: f64 },
    #[error("invalid domain [{0}, {1}]")]
    InvalidDomain(f64, f64),
    #[error("covariance unidentifiable: every subject has a single observation")]
    CovarianceUnidentifiable,
    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bandwidth {bandwidth} too small: fewer than {needed} points in the window at t = {at}")]
    BandwidthTooSmall { bandwidth: f64, at: f64, needed: usize },
    #[error("local fit is singular at {0}")]
    SingularFit(String),
    #[error("subject {0}: observation covariance is numerically singular")]
    SingularCovariance(usize),
    #[error("no subject has two or more observations; cannot cross-validate K")]
    NoHoldoutSubjects,
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
}

impl Error {
    /// True for failures of the numerics on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularFit(_) | Error::SingularCovariance(_) | Error::Eigen(_) | Error::BandwidthTooSmall { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
