//! Model registry: provider, model id, per-million-token prices, variant.
//!
//! The default registry ships the published pricing table as a CSV asset;
//! alternative registries load from the same format. A missing price cell
//! means the provider publishes no rate (cost is reported as zero with an
//! unknown-cost flag downstream).

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::domain::{ModelSpec, ModelVariant};
use crate::money::Usd;

const DEFAULT_REGISTRY_CSV: &str = include_str!("../../assets/model_registry.csv");

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("failed to read registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed registry row: {0}")]
    Csv(#[from] csv::Error),
    #[error("negative price in registry row for {0}")]
    NegativePrice(String),
    #[error("duplicate model key {0}")]
    DuplicateKey(String),
    #[error("unknown model key {0}")]
    UnknownModel(String),
}

#[derive(Debug, Deserialize)]
struct RegistryRow {
    provider: String,
    model_id: String,
    price_in: Option<Usd>,
    price_out: Option<Usd>,
    variant: ModelVariant,
    base_model_key: String,
}

/// In-memory model registry keyed by `provider/model_id`.
#[derive(Debug, Clone)]
pub struct ModelRegistry {
    models: BTreeMap<String, ModelSpec>,
}

impl ModelRegistry {
    /// The registry shipped with the crate.
    pub fn bundled() -> Self {
        ModelRegistry::from_csv_str(DEFAULT_REGISTRY_CSV)
            .expect("bundled registry must be well-formed")
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)?;
        ModelRegistry::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, RegistryError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut models = BTreeMap::new();
        for row in reader.deserialize::<RegistryRow>() {
            let row = row?;
            if row.price_in.is_some_and(|p| p < Usd::ZERO)
                || row.price_out.is_some_and(|p| p < Usd::ZERO)
            {
                return Err(RegistryError::NegativePrice(row.model_id));
            }
            let spec = ModelSpec {
                provider: row.provider,
                model_id: row.model_id,
                price_in_per_1m_tokens: row.price_in,
                price_out_per_1m_tokens: row.price_out,
                variant: row.variant,
                base_model_key: row.base_model_key,
            };
            let key = spec.model_key();
            if models.insert(key.clone(), spec).is_some() {
                return Err(RegistryError::DuplicateKey(key));
            }
        }
        Ok(ModelRegistry { models })
    }

    pub fn get(&self, model_key: &str) -> Result<&ModelSpec, RegistryError> {
        self.models
            .get(model_key)
            .ok_or_else(|| RegistryError::UnknownModel(model_key.to_string()))
    }

    pub fn models(&self) -> impl Iterator<Item = &ModelSpec> {
        self.models.values()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_registry_has_fifty_models() {
        let reg = ModelRegistry::bundled();
        assert_eq!(reg.len(), 50);
    }

    #[test]
    fn nano_prices_match_published_rates() {
        let reg = ModelRegistry::bundled();
        let nano = reg.get("openai/gpt-5-nano").unwrap();
        assert_eq!(nano.price_in_per_1m_tokens.unwrap().to_string(), "0.05");
        assert_eq!(nano.price_out_per_1m_tokens.unwrap().to_string(), "0.40");
    }

    #[test]
    fn unpriced_rows_have_no_prices() {
        let reg = ModelRegistry::bundled();
        let cerebras = reg.get("cerebras/gpt-oss-120b").unwrap();
        assert!(cerebras.price_in_per_1m_tokens.is_none());
        assert!(cerebras.price_out_per_1m_tokens.is_none());
    }

    #[test]
    fn thinking_variants_link_to_their_siblings() {
        let reg = ModelRegistry::bundled();
        let thinking = reg.get("anthropic/claude-opus-4-6:thinking").unwrap();
        let standard = reg.get("anthropic/claude-opus-4-6").unwrap();
        assert_eq!(thinking.base_model_key, standard.base_model_key);
    }

    #[test]
    fn unknown_model_errors() {
        let reg = ModelRegistry::bundled();
        assert!(reg.get("nope/nothing").is_err());
    }
}
