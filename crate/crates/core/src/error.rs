use std::fmt;

/// Source position inside a parsed text (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: Position, message: String },

    #[error("undeclared symbol `{name}` at {pos}")]
    UndeclaredSymbol { name: String, pos: Position },

    #[error("arity mismatch for `{name}` at {pos}: expected {expected}, found {found}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
        pos: Position,
    },

    #[error("unknown constant `{0}`")]
    UnknownConstant(String),

    #[error("unknown action `{0}`")]
    UnknownAction(String),

    #[error("unknown fluent `{0}`")]
    UnknownFluent(String),

    #[error("formula has free variable ?{0}")]
    FreeVariable(String),

    #[error("formula must be ground (no quantifiers or variables)")]
    NotGround,

    #[error("cannot ground a quantifier over an empty universe")]
    EmptyUniverse,

    #[error("universe too large: {what} ({size} exceeds cap {cap})")]
    UniverseTooLarge { what: String, size: u128, cap: u128 },

    #[error("precondition of {0} violated")]
    PreconditionViolated(String),

    #[error("no partition of {0} matches the state")]
    NoPartition(String),

    #[error("several partitions of {0} match the state")]
    MultiplePartitions(String),

    #[error("evidence has zero probability")]
    ZeroEvidence,

    #[error("every particle has weight zero")]
    AllParticlesDead,

    #[error("no applicable probabilistic action at step {0}")]
    NoApplicableAction(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
