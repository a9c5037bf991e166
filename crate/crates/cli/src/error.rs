use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or config; exit code 2.
    Usage { message: String, path: Option<String> },
    /// Failure while running; exit code 1.
    Runtime(sphembed::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage {
            message: message.into(),
            path: None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Usage { message, path } => json!({
                "error": { "kind": "usage", "message": message, "key_path": path }
            }),
            CliError::Runtime(e) => json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            }),
        }
    }
}

impl From<sphembed::Error> for CliError {
    fn from(e: sphembed::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
