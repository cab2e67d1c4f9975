//! Run configuration: jury knobs, provider selection and paths, loaded
//! from one JSON file. Unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    ChatProvider, EmbeddingProvider, Gateway, GenerationParams, HttpEmbedder, HttpProvider,
    HttpProviderConfig, MockEmbedder, MockProvider, NoDecode, ScriptedProvider,
};
use crate::jury::{SeedConfig, SimulationParams};

/// Shared chat/embedding backends; one gateway per case is built on top.
pub type ProviderPair = (Arc<dyn ChatProvider>, Arc<dyn EmbeddingProvider>);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("offline mode refuses the http provider; use mock or scripted")]
    OfflineRefusesNetwork,
    #[error("provider setup failed: {0}")]
    Provider(#[from] crate::gateway::GatewayError),
}

fn default_jurors() -> usize {
    17
}
fn default_rounds() -> usize {
    3
}
fn default_t_max() -> usize {
    3
}
fn default_memory_k() -> usize {
    3
}
fn default_delta() -> f64 {
    0.8
}
fn default_out_degree() -> usize {
    3
}
fn default_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> u32 {
    2048
}
fn default_mock_seed() -> u64 {
    7
}
fn default_embed_dim() -> usize {
    64
}
fn default_timeout() -> u64 {
    60
}
fn default_http_retries() -> u32 {
    3
}
fn default_api_key_env() -> String {
    "JURYSIM_API_KEY".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Hash-driven offline provider; replies depend on (request, seed).
    Mock {
        #[serde(default = "default_mock_seed")]
        seed: u64,
        #[serde(default = "default_embed_dim")]
        embed_dim: usize,
    },
    /// Replays a recorded transcript; errors on any unseen request.
    Scripted {
        transcript: PathBuf,
        #[serde(default = "default_mock_seed")]
        embed_seed: u64,
        #[serde(default = "default_embed_dim")]
        embed_dim: usize,
    },
    /// Generic HTTP chat-completion endpoint. The API key is read from
    /// the named environment variable, never from configuration.
    Http {
        endpoint_url: String,
        model_id: String,
        #[serde(default)]
        embeddings_url: Option<String>,
        #[serde(default)]
        embed_model_id: Option<String>,
        #[serde(default = "default_embed_dim")]
        embed_dim: usize,
        #[serde(default = "default_timeout")]
        timeout_s: u64,
        #[serde(default = "default_http_retries")]
        max_retries: u32,
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
    },
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Mock {
            seed: default_mock_seed(),
            embed_dim: default_embed_dim(),
        }
    }
}

impl ProviderConfig {
    pub fn is_offline(&self) -> bool {
        !matches!(self, ProviderConfig::Http { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: default_temperature(),
            max_output_tokens: default_max_tokens(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub precedent_base: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub persona_pool: Option<PathBuf>,
}

/// The full run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_jurors")]
    pub jurors: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_memory_k")]
    pub memory_k: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_out_degree")]
    pub out_degree: usize,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub lite: bool,
    #[serde(default)]
    pub offline: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate().map_err(|message| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.jurors == 0 {
            return Err("jurors must be at least 1".into());
        }
        if self.rounds == 0 {
            return Err("rounds must be at least 1".into());
        }
        if self.t_max == 0 {
            return Err("t_max must be at least 1".into());
        }
        if self.memory_k == 0 {
            return Err("memory_k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(format!("delta {} outside [0, 1]", self.delta));
        }
        if self.jurors > 1 && (self.out_degree == 0 || self.out_degree >= self.jurors) {
            return Err(format!(
                "out_degree {} invalid for {} jurors",
                self.out_degree, self.jurors
            ));
        }
        if self.generation.temperature < 0.0 {
            return Err("temperature must be non-negative".into());
        }
        if self.generation.max_output_tokens == 0 {
            return Err("max_output_tokens must be at least 1".into());
        }
        Ok(())
    }

    pub fn simulation_params(&self) -> SimulationParams {
        SimulationParams {
            jurors: self.jurors,
            rounds: self.rounds,
            t_max: self.t_max,
            memory_k: self.memory_k,
            delta: self.delta,
            out_degree: if self.jurors == 1 { 0 } else { self.out_degree },
            lite: self.lite,
            seeds: self.seeds,
        }
    }

    pub fn generation_params(&self) -> GenerationParams {
        // The per-request seed stays unset: the mock takes its seed at
        // construction, and a seed inside the request would change the
        // digest between a recorded run and its scripted replay.
        GenerationParams {
            temperature: self.generation.temperature,
            max_output_tokens: self.generation.max_output_tokens,
            seed: None,
        }
    }

    /// Build the provider pair. `force_offline` (the CLI `--offline` flag)
    /// refuses any network configuration outright. The pair is shared:
    /// callers spin up one [`Gateway`] per case over the same providers.
    pub fn build_providers(&self, force_offline: bool) -> Result<ProviderPair, ConfigError> {
        let offline = force_offline || self.offline;
        if offline && !self.provider.is_offline() {
            return Err(ConfigError::OfflineRefusesNetwork);
        }
        Ok(match &self.provider {
            ProviderConfig::Mock { seed, embed_dim } => (
                Arc::new(MockProvider::new(*seed)),
                Arc::new(MockEmbedder::new(*embed_dim, *seed)),
            ),
            ProviderConfig::Scripted {
                transcript,
                embed_seed,
                embed_dim,
            } => (
                Arc::new(ScriptedProvider::from_path(transcript)?),
                Arc::new(MockEmbedder::new(*embed_dim, *embed_seed)),
            ),
            ProviderConfig::Http {
                endpoint_url,
                model_id,
                embeddings_url,
                embed_model_id,
                embed_dim,
                timeout_s,
                max_retries,
                api_key_env,
            } => {
                let api_key = std::env::var(api_key_env).ok();
                let chat = HttpProvider::new(
                    HttpProviderConfig {
                        endpoint_url: endpoint_url.clone(),
                        model_id: model_id.clone(),
                        timeout_s: *timeout_s,
                        max_retries: *max_retries,
                        api_key: api_key.clone(),
                    },
                    Arc::new(NoDecode),
                )?;
                let embedder: Arc<dyn EmbeddingProvider> = match embeddings_url {
                    Some(url) => Arc::new(HttpEmbedder::new(
                        url.clone(),
                        embed_model_id.clone().unwrap_or_else(|| model_id.clone()),
                        api_key,
                        *embed_dim,
                        *timeout_s,
                    )?),
                    // No embeddings endpoint: retrieval still works
                    // deterministically via the mock encoder.
                    None => Arc::new(MockEmbedder::new(*embed_dim, default_mock_seed())),
                };
                (Arc::new(chat), embedder)
            }
        })
    }

    pub fn build_gateway(&self, force_offline: bool) -> Result<Gateway, ConfigError> {
        let (chat, embedder) = self.build_providers(force_offline)?;
        Ok(Gateway::new(chat, embedder).with_params(self.generation_params()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_standard_configuration() {
        let config = RunConfig::default();
        assert_eq!(config.jurors, 17);
        assert_eq!(config.rounds, 3);
        assert_eq!(config.t_max, 3);
        assert_eq!(config.memory_k, 3);
        assert_eq!(config.delta, 0.8);
        assert_eq!(config.generation.temperature, 0.7);
        assert_eq!(config.generation.max_output_tokens, 2048);
        config.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>("{\"juros\": 17}").unwrap_err();
        assert!(err.to_string().contains("juros"));
    }

    #[test]
    fn offline_flag_refuses_http_provider() {
        let config = RunConfig {
            provider: ProviderConfig::Http {
                endpoint_url: "https://example.invalid/v1/chat/completions".into(),
                model_id: "m".into(),
                embeddings_url: None,
                embed_model_id: None,
                embed_dim: 64,
                timeout_s: 5,
                max_retries: 1,
                api_key_env: "JURYSIM_API_KEY".into(),
            },
            ..RunConfig::default()
        };
        assert!(matches!(
            config.build_gateway(true),
            Err(ConfigError::OfflineRefusesNetwork)
        ));
        assert!(config.build_gateway(false).is_ok());
    }

    #[test]
    fn invalid_values_are_named() {
        let config = RunConfig {
            delta: 1.5,
            ..RunConfig::default()
        };
        assert!(config.validate().unwrap_err().contains("delta"));
        let config = RunConfig {
            out_degree: 17,
            ..RunConfig::default()
        };
        assert!(config.validate().unwrap_err().contains("out_degree"));
    }

    #[test]
    fn config_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let config = RunConfig {
            rounds: 2,
            ..RunConfig::default()
        };
        std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(loaded, config);
    }
}
