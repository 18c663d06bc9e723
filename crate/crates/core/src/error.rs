use thiserror::Error;

/// Errors for DAG validation, transport solvers, model fitting and IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cycle detected among mediators: {0}")]
    CycleDetected(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("expected exactly one treatment node, found {0}")]
    MultipleTreatments(usize),
    #[error("expected at most one outcome node, found {0}")]
    MultipleOutcomes(usize),
    #[error("edge into treatment node `{0}`")]
    EdgeIntoTreatment(String),
    #[error("edge out of outcome node `{0}`")]
    EdgeOutOfOutcome(String),
    #[error("node `{0}` has kind {1}, expected a mediator")]
    NotAMediator(String, String),

    #[error("empty sample")]
    EmptySample,
    #[error("all weights are zero")]
    AllWeightsZero,
    #[error("negative weight {weight} at index {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("degenerate source distribution (zero standard deviation)")]
    DegenerateSource,
    #[error("covariance matrix is not positive definite")]
    DegenerateCovariance,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("degenerate kernel weights: effective sample size {ess:.3} < 2")]
    DegenerateWeights { ess: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("infeasible marginals: sums {sum0} and {sum1} must each be 1 within 1e-9")]
    InfeasibleMarginals { sum0: f64, sum1: f64 },
    #[error("zero row weight at source index {0}")]
    ZeroRowWeight(usize),
    #[error("invalid regularization gamma = {0}, must be positive")]
    InvalidGamma(f64),

    #[error("multinomial fit detected separation (coefficient norm exceeded {0})")]
    SeparationDetected(f64),
    #[error("predictor column {0} is constant (rank-deficient design)")]
    RankDeficientPredictors(usize),
    #[error("invalid simplex point: {0}")]
    InvalidSimplexPoint(String),

    #[error("dataset has no outcome column `{0}`")]
    MissingOutcome(String),
    #[error("treatment group {0} is empty")]
    EmptyGroup(u8),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("treatment column must be binary 0/1, found `{value}` at row {row}")]
    NonBinaryTreatment { row: usize, value: String },
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("unknown unit id {0}")]
    UnknownUnit(usize),
    #[error("index {index} out of range (max {max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("at node `{node}`, unit {unit}: {source}")]
    AtNode {
        node: String,
        unit: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Config(String),
}

impl Error {
    /// Wrap an error with the mediator node and unit where it occurred.
    pub fn at_node(self, node: &str, unit: usize) -> Self {
        Error::AtNode {
            node: node.to_string(),
            unit,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
