use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("probability vector needs at least 2 categories, got {len}")]
    LengthTooShort { len: usize },
    #[error("negative probability {value} at category {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("probabilities sum to 1{deviation:+e} (SumNotOne)")]
    SumNotOne { deviation: f64 },
    #[error("category count mismatch: {left} vs {right}")]
    CategoryMismatch { left: usize, right: usize },
    #[error("joint distribution is invalid: {0}")]
    InvalidJoint(String),
    #[error("{arm} arm has no units")]
    EmptyArm { arm: &'static str },
    #[error("unit {unit}: outcome {y} outside 0..{categories}")]
    OutOfRangeOutcome { unit: usize, y: usize, categories: usize },
    #[error("dominance condition fails at index {index}")]
    DominanceViolated { index: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coefficients diverge (norm cap {cap} exceeded); data appear separated")]
    SeparationDetected { cap: f64 },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("need at least 2 observed outcome categories, found {observed}")]
    TooFewCategories { observed: usize },
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("{} unit(s) with propensity outside ({epsilon}, {}): {units:?}", units.len(), 1.0 - epsilon)]
    ExtremePropensity { units: Vec<usize>, epsilon: f64 },
    #[error("stratum {stratum} lacks a {arm} unit")]
    StratumMissingArm { stratum: String, arm: &'static str },
    #[error("complier proportion is zero")]
    NoCompliers,
    #[error("inputs imply a complier value of {value}, outside [0, 1]")]
    InconsistentInputs { value: f64 },
    #[error("{count} unit(s) with z=0, d=1 contradict strong monotonicity")]
    DefiersObserved { count: usize },
    #[error("degenerate EM initial value: {0}")]
    DegenerateInit(String),
    #[error("treatment-received column d is required")]
    MissingTreatmentReceived,
    #[error("{dropped} of {total} bootstrap replicates failed (limit 5%)")]
    ReplicateFailure { dropped: usize, total: usize },
    #[error("balanced assignment needs an even sample size, got {n}")]
    OddN { n: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit status: 2 for input or validation problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. }
            | Error::SeparationDetected { .. }
            | Error::RankDeficient
            | Error::ReplicateFailure { .. }
            | Error::DegenerateInit(_) => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
