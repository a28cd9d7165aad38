//! Multi-agent assessment-item generation and dual-mode benchmark harness.
//!
//! - `domain` — shared types and validation
//! - `adapter` — uniform LLM endpoint interface, cost accounting, scripting
//! - `wiki` — MediaWiki search/extract retrieval with fixture replay
//! - `prompts` — versioned prompt templates
//! - `pipeline` — the four-agent generation state machine with bounded repair
//! - `store` — append-only stage store and frozen snapshots
//! - `mcq` / `judge` — the two evaluation harnesses
//! - `selection` — hardest-N pool construction
//! - `analytics` — leaderboard, sectors, Pareto front, correlations, repair stats
//! - `report` — static report bundle emission

pub mod adapter;
pub mod analytics;
pub mod config;
pub mod demo;
pub mod domain;
pub mod judge;
pub mod mcq;
pub mod money;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod rng;
pub mod selection;
pub mod store;
pub mod wiki;
