use std::path::PathBuf;

/// Command failure with its exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or malformed input; `field` is the dotted path when known.
    #[error("{}{message}", field.as_deref().map(|f| format!("{f}: ")).unwrap_or_default())]
    Input { field: Option<String>, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// The run finished flagged or aborted; outputs written so far are kept.
    #[error("planner failure: {0}")]
    Planner(String),
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input { field: None, message: message.into() }
    }

    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Input { field: Some(field.into()), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input { .. } | CliError::Io { .. } => 2,
            CliError::Planner(_) => 3,
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn to_json(&self) -> String {
        let kind = match self {
            CliError::Input { .. } => "input",
            CliError::Io { .. } => "io",
            CliError::Planner(_) => "planner",
        };
        let field = match self {
            CliError::Input { field, .. } => field.clone(),
            _ => None,
        };
        serde_json::json!({
            "error": kind,
            "field": field,
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
