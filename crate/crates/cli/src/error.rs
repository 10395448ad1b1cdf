use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Core(#[from] stackmf_core::Error),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(stackmf_core::Error::ExperimentInvalid(_) | stackmf_core::Error::SimulationDiverged { .. }) => 2,
            CliError::Invalid(_) | CliError::Parse { .. } | CliError::UnknownPreset(_) => 3,
            CliError::Io(..) => 4,
            CliError::Core(_) => 5,
        }
    }

    /// Short machine-readable tag.
    pub fn reason(&self) -> &'static str {
        match self {
            CliError::Io(..) => "io",
            CliError::Parse { .. } => "parse",
            CliError::Invalid(_) => "invalid_config",
            CliError::UnknownPreset(_) => "unknown_preset",
            CliError::Core(stackmf_core::Error::ExperimentInvalid(_)) => "experiment_invalid",
            CliError::Core(stackmf_core::Error::SimulationDiverged { .. }) => "simulation_diverged",
            CliError::Core(_) => "core",
        }
    }
}
