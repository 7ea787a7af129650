//! Library side of the `kmlp` binary: config parsing and the subcommands.

pub mod commands;
pub mod config;

use kmlp_core::KmlpError;

#[derive(Debug)]
pub enum CliError {
    Config { path: String, message: String },
    Usage(String),
    Core(KmlpError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config { path, message } if path.is_empty() => {
                write!(f, "config error: {message}")
            }
            CliError::Config { path, message } => write!(f, "config error at `{path}`: {message}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<KmlpError> for CliError {
    fn from(e: KmlpError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    /// 2 for bad input (config, data, model files), 3 for divergence,
    /// 1 for other runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(KmlpError::Divergence { .. }) => 3,
            CliError::Core(KmlpError::Singular { .. }) => 1,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                KmlpError::InvalidArgument(_) => "invalid_argument",
                KmlpError::InvalidState(_) => "invalid_state",
                KmlpError::Singular { .. } => "singular",
                KmlpError::Divergence { .. } => "divergence",
                KmlpError::Format { .. } => "format",
                KmlpError::Io { .. } => "io",
            },
        }
    }

    /// One-line JSON description for stderr.
    pub fn machine_line(&self) -> String {
        let mut obj = serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Config { path, .. } => obj["field"] = path.clone().into(),
            CliError::Core(KmlpError::Divergence { layer, epoch }) => {
                obj["layer"] = (*layer).into();
                obj["epoch"] = (*epoch).into();
            }
            _ => {}
        }
        obj.to_string()
    }
}
