use latentreg::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Unreadable or malformed input data (exit 2).
    Input(String),
    /// The estimation itself failed (exit 3).
    Numerical(String),
    /// Invalid configuration, flags or indices (exit 4).
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Config(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Numerical(_) => "numerical",
            CliError::Config(_) => "config",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) | CliError::Config(m) => m,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.message(),
        })
        .to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

fn classify(e: &Error, inside_stage: bool) -> fn(String) -> CliError {
    match e {
        Error::Io(_) | Error::Parse { .. } | Error::Empty(_) => CliError::Input,
        Error::Dimension(_) | Error::NonFinite(_) if !inside_stage => CliError::Input,
        Error::InvalidArgument(_) => CliError::Config,
        Error::Column { source, .. } => classify(source, inside_stage),
        Error::Stage { source, .. } => classify(source, true),
        _ => CliError::Numerical,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        classify(&e, false)(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
