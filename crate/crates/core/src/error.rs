use std::fmt;

/// Pipeline stage tag attached to errors raised inside the end-to-end procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Tuning,
    Lava,
    Factors,
    InitialLasso,
    Nodewise,
    Test,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Tuning => "tuning",
            Stage::Lava => "lava fit",
            Stage::Factors => "factor estimation",
            Stage::InitialLasso => "initial lasso",
            Stage::Nodewise => "node-wise lasso",
            Stage::Test => "test statistic",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error at row {row}{}: {message}", col.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        /// 1-based line number in the source file.
        row: usize,
        /// 1-based field index, when the error is tied to one field.
        col: Option<usize>,
        message: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("feature {feature} is explained by the remaining features (tau^2 = {tau2:e})")]
    Singular { feature: usize, tau2: f64 },

    #[error("degenerate variance ({0:e})")]
    DegenerateVariance(f64),

    #[error("requested {requested} factors but the residual matrix has numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("column {column}: {source}")]
    Column { column: usize, source: Box<Error> },

    #[error("{stage}: {source}")]
    Stage { stage: Stage, source: Box<Error> },

    #[error("cross-validation failed for every candidate: {0}")]
    CvFailed(String),

    #[error("{failed} of {reps} replications failed")]
    TooManyFailures { failed: usize, reps: usize },
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_column(self, column: usize) -> Error {
        Error::Column {
            column,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
