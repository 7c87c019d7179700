use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad class of a failure; the CLI maps these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {field} at unit {unit}")]
    NonFinite { field: &'static str, unit: usize },

    #[error("empty label in {column} at unit {unit}")]
    EmptyLabel { column: &'static str, unit: usize },

    #[error("unit index {index} out of range for population of {n}")]
    UnitOutOfRange { index: usize, n: usize },

    #[error("sample indices must be strictly increasing (found {prev} then {next})")]
    UnsortedSample { prev: usize, next: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("design requires {0} labels but the population has none")]
    MissingLabels(&'static str),

    #[error("poisson inclusion probabilities reach 1 after rescaling at units {units:?}")]
    PoissonOverflow { units: Vec<usize> },

    #[error("joint inclusion probabilities are unavailable for this design")]
    JointUnavailable,

    #[error("invalid inclusion probability {value} at unit {unit}")]
    InvalidProbability { unit: usize, value: f64 },

    #[error("singular design: cross-moment pivot {pivot} below tolerance ({value:e})")]
    SingularDesign { pivot: usize, value: f64 },

    #[error("unit {0} is not in the sample")]
    NotSampled(usize),

    #[error("i and j must differ (got {0})")]
    SameUnit(usize),

    #[error("certainty unit {0} (pi = 1) is not allowed on the H-decomposition variance path")]
    CertaintyUnit(usize),

    #[error("normalizer N - 1/pi is not positive at unit {unit} (N = {n}, pi = {pi})")]
    NonPositiveNormalizer { unit: usize, n: usize, pi: f64 },

    #[error("population too small: {0}")]
    TooFewUnits(String),

    #[error("population too large: {0}")]
    TooLarge(String),

    #[error("exact enumeration requires an independent-indicator design")]
    NonIndependentDesign,

    #[error("all {0} replicates were skipped")]
    AllSkipped(usize),

    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("cannot parse `{value}` at row {row}, column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown unit id `{id}` at row {row}")]
    UnknownId { row: usize, id: String },

    #[error("duplicate unit id `{id}` at row {row}")]
    DuplicateId { row: usize, id: String },

    #[error("log transform needs a positive outcome; row {row} has {value}")]
    Domain { row: usize, value: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidDesign(_) | Error::Config(_) | Error::MissingLabels(_) => {
                ErrorKind::Config
            }
            Error::PoissonOverflow { .. }
            | Error::JointUnavailable
            | Error::SingularDesign { .. }
            | Error::CertaintyUnit(_)
            | Error::NonPositiveNormalizer { .. }
            | Error::NonIndependentDesign
            | Error::AllSkipped(_)
            | Error::ProbabilityOutOfRange(_)
            | Error::TooFewUnits(_)
            | Error::TooLarge(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
