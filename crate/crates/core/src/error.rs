use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,

    #[error("no respondents available to act as donors")]
    NoRespondents,

    #[error("unit {unit_id}: outcome is missing")]
    MissingOutcome { unit_id: u64 },

    #[error("unit {unit_id}: inclusion probability {value} is outside (0, 1]")]
    InvalidInclusionProb { unit_id: u64, value: f64 },

    #[error("unit {unit_id}: {message}")]
    InvalidUnit { unit_id: u64, message: String },

    #[error("duplicate unit id {0}")]
    DuplicateUnitId(u64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what}: lengths differ ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("requested sample size {n} exceeds population size {population}")]
    SampleTooLarge { n: usize, population: usize },

    #[error("{respondents} respondents cannot identify {terms} basis terms")]
    TooFewRespondents { respondents: usize, terms: usize },

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("match assignment does not fit the dataset: {0}")]
    AssignmentMismatch(String),

    #[error("imputed-sum form {imputed} and donor-weight form {donor} disagree")]
    FormMismatch { imputed: f64, donor: f64 },

    #[error("all estimation weights are zero")]
    ZeroWeight,

    #[error("flat estimating function: derivative {derivative:e} is below the floor {floor:e}")]
    FlatEstimatingFunction { derivative: f64, floor: f64 },

    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),

    #[error("replication needs at least two units, got {0}")]
    TooFewUnits(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("response rate {rate:.3} outside the accepted band [{low}, {high}]")]
    ResponseRate { rate: f64, low: f64, high: f64 },

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
