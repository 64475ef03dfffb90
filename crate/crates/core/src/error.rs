use thiserror::Error;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid fragment label: {0}")]
    InvalidLabel(u32),
    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("ground truth contains no fragments")]
    NoGroundTruth,
    #[error("empty surface point set")]
    EmptySurface,
    #[error("empty mask")]
    EmptyMask,
    #[error("ground truth and prediction are of different kinds")]
    KindMismatch,
    #[error("teams do not share the same case set: {0}")]
    CaseAlignment(&'static str),
    #[error("at least two teams are required, got {0}")]
    InsufficientTeams(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("all paired differences are zero")]
    DegenerateTest,
    #[error("{0} non-zero differences, at least 5 required")]
    TooFewSamples(usize),
    #[error("energy {0} keV outside attenuation table range")]
    EnergyRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
