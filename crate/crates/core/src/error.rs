use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate record for store {store} on {date}")]
    DuplicateKey { store: u32, date: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unknown store {0}")]
    UnknownStore(u32),
    #[error("store {0} has no open days with positive sales")]
    EmptySeries(u32),
    #[error("series spans too little time for a {months}-month validation window")]
    SpanTooShort { months: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("lag {lag} does not fit a series of length {len}")]
    LagExceedsLength { lag: usize, len: usize },
    #[error("no qualifying rows before the cutoff for stores {0:?}")]
    EmptySelection(Vec<u32>),
    #[error("series too short: need at least {needed} points, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("optimizer diverged: {0}")]
    OptimizerDiverged(String),
    #[error("coordinate descent did not converge (last max change {0:e})")]
    DidNotConverge(f64),
    #[error("column mismatch: model expects {expected:?}, got {got:?}")]
    ColumnMismatch { expected: Vec<String>, got: Vec<String> },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("too few rows: need {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("input must lie strictly inside the unit square")]
    BoundaryInput,
    #[error("gamma marginal requires strictly positive data")]
    NonPositiveData,
    #[error("posterior precision matrix is singular")]
    SingularPrecision,
    #[error("chain too short: need {needed} post-burn-in draws, got {got}")]
    ChainTooShort { needed: usize, got: usize },
    #[error("chain has no post-burn-in draws")]
    EmptyChain,
    #[error("chain was produced by a {chain} model, not {requested}")]
    KindMismatch { chain: String, requested: String },
    #[error("method {method} failed: {source}")]
    Method {
        method: String,
        #[source]
        source: Box<Error>,
    },
    #[error("plot `{0}` has no data")]
    EmptyPlot(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
