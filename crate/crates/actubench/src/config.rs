//! TOML run configuration: store location, seed, wiki settings, per-role
//! model bindings and archetype sampling weights. A commented example
//! lives in `assets/example_config.toml` and is kept parseable by test.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::adapter::{
    AdapterBinding, HttpAdapter, ModelRegistry, RateLimiter, RegistryError, Role,
};
use crate::domain::DifficultyArchetype;
use crate::money::Usd;
use crate::pipeline::ArchetypeWeights;
use crate::wiki::{FixtureWikiTransport, HttpWikiTransport, WikiClient};

pub const EXAMPLE_CONFIG: &str = include_str!("../assets/example_config.toml");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("registry failure: {0}")]
    Registry(#[from] RegistryError),
    #[error("unknown model key {0:?} for role {1}")]
    UnknownModel(String, &'static str),
    #[error("invalid archetype weights: {0}")]
    Weights(String),
    #[error("invalid max_spend_usd: {0}")]
    Spend(String),
    #[error("no evaluatee models configured")]
    NoEvaluatees,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub store: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub registry: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub wiki: WikiConfig,
    pub roles: RolesConfig,
    #[serde(default)]
    pub providers: BTreeMap<String, String>,
    #[serde(default)]
    pub limits: LimitsConfig,
    #[serde(default)]
    pub archetype_weights: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WikiConfig {
    #[serde(default = "default_wiki_endpoint")]
    pub endpoint: String,
    #[serde(default = "default_per_query_limit")]
    pub per_query_limit: usize,
    #[serde(default = "default_char_budget")]
    pub extract_char_budget: usize,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub fixture_record: Option<PathBuf>,
}

fn default_wiki_endpoint() -> String {
    crate::wiki::DEFAULT_ENDPOINT.to_string()
}

fn default_per_query_limit() -> usize {
    3
}

fn default_char_budget() -> usize {
    crate::wiki::DEFAULT_EXTRACT_CHAR_BUDGET
}

impl Default for WikiConfig {
    fn default() -> Self {
        WikiConfig {
            endpoint: default_wiki_endpoint(),
            per_query_limit: default_per_query_limit(),
            extract_char_budget: default_char_budget(),
            fixture: None,
            fixture_record: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolesConfig {
    pub agent_a: String,
    pub agent_b: String,
    pub agent_c: String,
    pub auxiliary: String,
    pub judge: String,
    #[serde(default)]
    pub evaluatees: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default)]
    pub max_spend_usd: Option<String>,
}

fn default_rpm() -> u32 {
    60
}

impl Default for LimitsConfig {
    fn default() -> Self {
        LimitsConfig {
            requests_per_minute: default_rpm(),
            max_spend_usd: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validated()
    }

    fn validated(self) -> Result<RunConfig, ConfigError> {
        self.archetype_weights_parsed()?.validate().map_err(ConfigError::Weights)?;
        if let Some(spend) = &self.limits.max_spend_usd {
            spend
                .parse::<Usd>()
                .map_err(|e| ConfigError::Spend(e.to_string()))?;
        }
        Ok(self)
    }

    pub fn load_registry(&self) -> Result<ModelRegistry, ConfigError> {
        match &self.registry {
            Some(path) => Ok(ModelRegistry::from_csv_path(path)?),
            None => Ok(ModelRegistry::bundled()),
        }
    }

    pub fn max_spend(&self) -> Option<Usd> {
        self.limits
            .max_spend_usd
            .as_ref()
            .and_then(|s| s.parse().ok())
    }

    /// Archetype weights keyed by their serialized names; unknown keys are
    /// rejected, omitted archetypes get weight zero.
    pub fn archetype_weights_parsed(&self) -> Result<ArchetypeWeights, ConfigError> {
        let Some(raw) = &self.archetype_weights else {
            return Ok(ArchetypeWeights::default());
        };
        let mut weights = BTreeMap::new();
        for archetype in DifficultyArchetype::ALL {
            weights.insert(archetype, 0.0);
        }
        for (name, value) in raw {
            let archetype = DifficultyArchetype::ALL
                .iter()
                .find(|a| a.as_str() == name)
                .copied()
                .ok_or_else(|| ConfigError::Weights(format!("unknown archetype {name:?}")))?;
            weights.insert(archetype, *value);
        }
        Ok(ArchetypeWeights(weights))
    }

    /// Resolve a model key against the registry and bind it to a live HTTP
    /// adapter. The provider endpoint comes from `[providers]`; the API
    /// key from `<PROVIDER>_API_KEY`.
    pub fn bind_live(
        &self,
        role: Role,
        model_key: &str,
        role_name: &'static str,
        registry: &ModelRegistry,
        limiter: &Arc<RateLimiter>,
    ) -> Result<AdapterBinding, ConfigError> {
        let spec = registry
            .get(model_key)
            .map_err(|_| ConfigError::UnknownModel(model_key.to_string(), role_name))?
            .clone();
        let endpoint = self
            .providers
            .get(&spec.provider)
            .cloned()
            .unwrap_or_else(|| {
                format!("https://api.{}.com/v1/chat/completions", spec.provider)
            });
        let adapter = HttpAdapter::from_env(
            endpoint,
            spec.provider.clone(),
            spec.model_id.clone(),
            Arc::clone(limiter),
        )
        .map_err(|e| ConfigError::UnknownModel(format!("{model_key}: {e}"), role_name))?;
        Ok(AdapterBinding::new(role, spec, Arc::new(adapter)))
    }

    /// Wiki client per config: fixture replay when `wiki.fixture` is set,
    /// live HTTP (optionally recording) otherwise.
    pub fn wiki_client(&self) -> Result<WikiClient, ConfigError> {
        let transport: Arc<dyn crate::wiki::WikiTransport> = match &self.wiki.fixture {
            Some(path) => Arc::new(FixtureWikiTransport::from_file(path).map_err(|e| {
                ConfigError::Io {
                    path: path.clone(),
                    source: std::io::Error::other(e.to_string()),
                }
            })?),
            None => Arc::new(HttpWikiTransport::new(
                self.wiki.endpoint.clone(),
                self.wiki.fixture_record.clone(),
            )),
        };
        Ok(WikiClient::new(transport)
            .with_extract_char_budget(self.wiki.extract_char_budget))
    }
}
