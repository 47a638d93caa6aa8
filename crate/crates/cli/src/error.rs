//! One error type for the whole binary, mapped onto exit codes: 0 success,
//! 1 domain/data error, 2 usage error (the argument parser owns code 2).

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse `{path}`: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("feeder file `{path}`: {message}")]
    Feeder { path: PathBuf, message: String },
    #[error("{0} does not belong to this feeder (fingerprint mismatch)")]
    FingerprintMismatch(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Network(#[from] vvc_core::network::NetworkError),
    #[error(transparent)]
    Pf(#[from] vvc_core::powerflow::PfError),
    #[error(transparent)]
    LinModel(#[from] vvc_core::linmodels::LinModelError),
    #[error(transparent)]
    Stability(#[from] vvc_core::stability::StabilityError),
    #[error(transparent)]
    Design(#[from] vvc_core::design::DesignError),
    #[error(transparent)]
    Sim(#[from] vvc_core::simloop::SimError),
    #[error(transparent)]
    Scenario(#[from] vvc_core::scenario::ScenarioError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
