use std::path::PathBuf;

use narrative_core::providers::ProviderError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing artifacts from `{stage}`; run `narrative {stage}` first")]
    MissingUpstream { stage: String },
    #[error("artifacts from `{stage}` were built with a different configuration; rerun `narrative {stage}`")]
    StaleUpstream { stage: String },
    #[error("artifact directory is locked ({0}); remove the lock file if no other run is active")]
    Locked(PathBuf),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Provider(String),
}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Provider(_) => EXIT_PROVIDER,
                _ => EXIT_DATA,
            };
        }
        if let Some(e) = cause.downcast_ref::<narrative_core::Error>() {
            return if e.is_provider() { EXIT_PROVIDER } else { EXIT_DATA };
        }
        if cause.downcast_ref::<ProviderError>().is_some() {
            return EXIT_PROVIDER;
        }
    }
    EXIT_DATA
}
