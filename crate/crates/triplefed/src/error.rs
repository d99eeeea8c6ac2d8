use thiserror::Error;

/// Unified error type for the whole engine.
///
/// Parse errors carry positions (line, and column where it is meaningful)
/// because input files are rejected all-or-nothing and the caller needs to
/// point at the offending line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("triple parse error at line {line}: {msg}")]
    TripleParse { line: usize, msg: String },

    #[error("query parse error at line {line}, column {col}: {msg}")]
    QueryParse { line: usize, col: usize, msg: String },

    #[error("update parse error at line {line}: {msg}")]
    UpdateParse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown term id {0}")]
    UnknownTermId(u32),

    #[error("pattern graph is disconnected: {0}")]
    DisconnectedQuery(String),

    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),

    #[error("join on zero shared variables would be a cartesian product")]
    CartesianJoin,

    #[error("no usable core vertex: every candidate score is -inf")]
    NoCore,

    #[error("storage module expects a constant predicate, got variable {0}")]
    VariablePredicate(String),

    #[error("wire decode error: {0}")]
    WireDecode(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("timed out after {0} ms waiting for {1}")]
    BarrierTimeout(u64, String),

    #[error("redistribution aborted")]
    RedistAborted,

    #[error("cluster is in an invalid state: {0}")]
    InvalidState(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
