use std::path::Path;

use serde::{Deserialize, Serialize};

use super::baseline::BaselineConfig;
use crate::controller::EpisodeConfig;
use crate::gateway::BackendConfig;

/// Settings file for the command-line runner, in TOML:
///
/// ```toml
/// runs = 3
/// parallel = 4
///
/// [backend]
/// endpoint = "http://localhost:8000/v1"
/// model = "my-model"
/// auth_env = "MY_API_KEY"
///
/// [episode]
/// t_max = 50
/// mode = "scout"
///
/// [baseline]
/// max_context = 128000
/// tokenizer = "words"
/// ```
///
/// Every key is optional. Command-line flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub runs: usize,
    pub parallel: usize,
    pub backend: BackendConfig,
    pub episode: EpisodeConfig,
    pub baseline: BaselineConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            runs: 1,
            parallel: 1,
            backend: BackendConfig::default(),
            episode: EpisodeConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Mode;

    #[test]
    fn partial_file_fills_defaults() {
        let config = HarnessConfig::from_toml(
            "runs = 3\n[episode]\nmode = \"no_grounding\"\n[backend]\nmodel = \"m\"\n",
        )
        .unwrap();
        assert_eq!(config.runs, 3);
        assert_eq!(config.episode.mode, Mode::NoGrounding);
        assert_eq!(config.episode.t_max, 50);
        assert_eq!(config.backend.model, "m");
        assert_eq!(config.backend.max_retries, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(HarnessConfig::from_toml("rnus = 3\n").is_err());
    }
}
