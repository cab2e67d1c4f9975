pub mod build_precedents;
pub mod evaluate;
pub mod partition;
pub mod simulate;
pub mod stats;
pub mod validate;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use jurysim_core::config::ConfigError;
use jurysim_core::corpus::CorpusError;
use jurysim_core::gateway::GatewayError;
use jurysim_core::jury::JuryError;
use jurysim_core::precedent::PrecedentError;
use jurysim_core::prompts::PromptError;

/// Command failure with its process exit code: 1 validation/metric,
/// 2 usage/config, 3 provider/transport.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Usage(String),
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Usage(m) | CliError::Provider(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match &e {
            ConfigError::Provider(inner) => CliError::Provider(format!("{e}: {inner}")),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::NoCases(_) | CorpusError::Io { .. } | CorpusError::BadRatios => {
                CliError::Usage(e.to_string())
            }
            CorpusError::Unlabeled(_) | CorpusError::DuplicateCaseId(_) => {
                CliError::Validation(e.to_string())
            }
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Gateway(inner) => inner.into(),
            PromptError::SchemaFailure { .. } => CliError::Provider(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<JuryError> for CliError {
    fn from(e: JuryError) -> Self {
        match e {
            JuryError::InvalidDegree { .. } | JuryError::PoolExhausted { .. } => {
                CliError::Usage(e.to_string())
            }
            JuryError::Prompt(inner) => inner.into(),
            JuryError::Precedent(inner) => inner.into(),
        }
    }
}

impl From<PrecedentError> for CliError {
    fn from(e: PrecedentError) -> Self {
        match e {
            PrecedentError::Prompt(inner) => inner.into(),
            PrecedentError::Gateway(inner) => inner.into(),
            PrecedentError::Io(_) | PrecedentError::Corrupt { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io error: {e}"))
    }
}

/// A partition manifest file: the assignment of case ids to one set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub source_digest: String,
    pub case_ids: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad manifest {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Usage(format!("manifest serialization: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}
