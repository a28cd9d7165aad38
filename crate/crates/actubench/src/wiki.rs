//! Wikipedia retrieval for keyword specs via the MediaWiki API.
//!
//! Calls go through a [`WikiTransport`] so that live responses can be
//! recorded once and replayed as fixtures; CI runs fixtures only. Requests
//! use `action=query&list=search` for search and
//! `action=query&prop=extracts&explaintext=1` for plain-text extracts
//! against the English endpoint.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

pub const DEFAULT_ENDPOINT: &str = "https://en.wikipedia.org/w/api.php";
/// Per-extract character budget; keeps note-summarization prompts within a
/// small model's context.
pub const DEFAULT_EXTRACT_CHAR_BUDGET: usize = 8_000;

/// One fetched article excerpt with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiExtract {
    pub title: String,
    pub extract_text: String,
    pub fetched_at: DateTime<Utc>,
    pub source_url: String,
}

#[derive(Debug, thiserror::Error)]
pub enum WikiError {
    #[error("MediaWiki API unreachable: {0}")]
    ApiUnreachable(String),
    #[error("page missing: {0}")]
    PageMissing(String),
    #[error("malformed API response: {0}")]
    MalformedResponse(String),
    #[error("no fixture recorded for request {0:?}")]
    FixtureMissing(String),
    #[error("empty query")]
    EmptyQuery,
}

/// Raw GET against the API, keyed by canonical parameter string.
pub trait WikiTransport: Send + Sync {
    fn get(&self, params: &[(&str, &str)]) -> Result<serde_json::Value, WikiError>;

    /// Timestamp stamped onto extracts. Fixture transports return a fixed
    /// instant so replayed gathers compare equal.
    fn fetched_at(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Canonical cache key: params sorted by name, `k=v` joined with `&`.
pub fn request_key(params: &[(&str, &str)]) -> String {
    let sorted: BTreeMap<&str, &str> = params.iter().copied().collect();
    sorted
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join("&")
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

/// Live HTTP transport, optionally recording every response to a fixture
/// file for later replay.
pub struct HttpWikiTransport {
    endpoint: String,
    client: reqwest::blocking::Client,
    record_to: Option<PathBuf>,
    recorded: Mutex<BTreeMap<String, serde_json::Value>>,
}

impl HttpWikiTransport {
    pub fn new(endpoint: impl Into<String>, record_to: Option<PathBuf>) -> Self {
        HttpWikiTransport {
            endpoint: endpoint.into(),
            client: reqwest::blocking::Client::builder()
                .user_agent("actubench/0.1 (benchmark item generation)")
                .build()
                .expect("client construction"),
            record_to,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }
}

impl WikiTransport for HttpWikiTransport {
    fn get(&self, params: &[(&str, &str)]) -> Result<serde_json::Value, WikiError> {
        let response = self
            .client
            .get(&self.endpoint)
            .query(params)
            .send()
            .map_err(|e| WikiError::ApiUnreachable(e.to_string()))?;
        let value: serde_json::Value = response
            .json()
            .map_err(|e| WikiError::MalformedResponse(e.to_string()))?;
        if let Some(path) = &self.record_to {
            let mut recorded = self.recorded.lock().unwrap();
            recorded.insert(request_key(params), value.clone());
            let text = serde_json::to_string_pretty(&*recorded)
                .map_err(|e| WikiError::MalformedResponse(e.to_string()))?;
            std::fs::write(path, text).map_err(|e| WikiError::ApiUnreachable(e.to_string()))?;
        }
        Ok(value)
    }
}

/// Replays a recorded fixture file (JSON object: request key -> raw
/// response). Deterministic, including the extract timestamp.
pub struct FixtureWikiTransport {
    responses: BTreeMap<String, serde_json::Value>,
}

impl FixtureWikiTransport {
    pub fn from_file(path: &Path) -> Result<Self, WikiError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WikiError::ApiUnreachable(e.to_string()))?;
        let responses = serde_json::from_str(&text)
            .map_err(|e| WikiError::MalformedResponse(e.to_string()))?;
        Ok(FixtureWikiTransport { responses })
    }

    pub fn from_map(responses: BTreeMap<String, serde_json::Value>) -> Self {
        FixtureWikiTransport { responses }
    }
}

impl WikiTransport for FixtureWikiTransport {
    fn get(&self, params: &[(&str, &str)]) -> Result<serde_json::Value, WikiError> {
        let key = request_key(params);
        self.responses
            .get(&key)
            .cloned()
            .ok_or(WikiError::FixtureMissing(key))
    }

    fn fetched_at(&self) -> DateTime<Utc> {
        Utc.timestamp_opt(0, 0).unwrap()
    }
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

pub struct WikiClient {
    transport: Arc<dyn WikiTransport>,
    endpoint_label: String,
    extract_char_budget: usize,
}

impl WikiClient {
    pub fn new(transport: Arc<dyn WikiTransport>) -> Self {
        WikiClient {
            transport,
            endpoint_label: DEFAULT_ENDPOINT.to_string(),
            extract_char_budget: DEFAULT_EXTRACT_CHAR_BUDGET,
        }
    }

    pub fn with_extract_char_budget(mut self, budget: usize) -> Self {
        self.extract_char_budget = budget;
        self
    }

    /// Search for page titles, at most `limit`, in the API's relevance
    /// order. Empty results are not an error.
    pub fn search(&self, query: &str, limit: usize) -> Result<Vec<String>, WikiError> {
        if query.is_empty() {
            return Err(WikiError::EmptyQuery);
        }
        assert!(limit >= 1);
        let limit_str = limit.to_string();
        let value = self.transport.get(&[
            ("action", "query"),
            ("list", "search"),
            ("srsearch", query),
            ("srlimit", &limit_str),
            ("format", "json"),
        ])?;
        let hits = value["query"]["search"]
            .as_array()
            .ok_or_else(|| WikiError::MalformedResponse("missing query.search".into()))?;
        Ok(hits
            .iter()
            .take(limit)
            .filter_map(|h| h["title"].as_str().map(str::to_string))
            .collect())
    }

    /// Fetch the plain-text extract of one page, truncated to the
    /// configured character budget.
    pub fn fetch_extract(&self, title: &str) -> Result<WikiExtract, WikiError> {
        if title.is_empty() {
            return Err(WikiError::EmptyQuery);
        }
        let value = self.transport.get(&[
            ("action", "query"),
            ("prop", "extracts"),
            ("explaintext", "1"),
            ("titles", title),
            ("format", "json"),
        ])?;
        let pages = value["query"]["pages"]
            .as_object()
            .ok_or_else(|| WikiError::MalformedResponse("missing query.pages".into()))?;
        let page = pages
            .values()
            .next()
            .ok_or_else(|| WikiError::MalformedResponse("empty query.pages".into()))?;
        if page.get("missing").is_some() || page["pageid"].as_i64().unwrap_or(-1) < 0 {
            return Err(WikiError::PageMissing(title.to_string()));
        }
        let extract = page["extract"]
            .as_str()
            .ok_or_else(|| WikiError::MalformedResponse("missing extract".into()))?;
        let truncated: String = extract.chars().take(self.extract_char_budget).collect();
        let resolved_title = page["title"].as_str().unwrap_or(title).to_string();
        Ok(WikiExtract {
            source_url: format!(
                "{}?title={}",
                self.endpoint_label,
                resolved_title.replace(' ', "_")
            ),
            title: resolved_title,
            extract_text: truncated,
            fetched_at: self.transport.fetched_at(),
        })
    }

    /// Run every search string of a keyword spec, dedupe titles, drop any
    /// title containing an exclusion term (case-insensitive substring),
    /// fetch the survivors.
    pub fn gather(
        &self,
        spec: &crate::domain::KeywordSpec,
        per_query_limit: usize,
    ) -> Result<Vec<WikiExtract>, WikiError> {
        let exclusions: Vec<String> = spec.exclusions.iter().map(|e| e.to_lowercase()).collect();
        let mut titles: Vec<String> = Vec::new();
        let mut search_errors = 0usize;
        let mut last_error = None;
        for query in &spec.search_strings {
            match self.search(query, per_query_limit) {
                Ok(found) => {
                    for title in found {
                        if titles.contains(&title) {
                            continue;
                        }
                        let lower = title.to_lowercase();
                        if exclusions.iter().any(|e| lower.contains(e)) {
                            continue;
                        }
                        titles.push(title);
                    }
                }
                Err(e) => {
                    search_errors += 1;
                    last_error = Some(e);
                }
            }
        }
        if search_errors == spec.search_strings.len() {
            return Err(last_error.unwrap_or(WikiError::EmptyQuery));
        }
        let mut extracts = Vec::new();
        for title in titles {
            match self.fetch_extract(&title) {
                Ok(extract) => extracts.push(extract),
                Err(WikiError::PageMissing(_)) => continue,
                Err(e) => {
                    if extracts.is_empty() {
                        return Err(e);
                    }
                }
            }
        }
        Ok(extracts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::KeywordSpec;
    use serde_json::json;

    fn search_response(titles: &[&str]) -> serde_json::Value {
        json!({"query": {"search": titles.iter().map(|t| json!({"title": t})).collect::<Vec<_>>()}})
    }

    fn extract_response(title: &str, extract: &str) -> serde_json::Value {
        json!({"query": {"pages": {"100": {"pageid": 100, "title": title, "extract": extract}}}})
    }

    fn missing_response() -> serde_json::Value {
        json!({"query": {"pages": {"-1": {"missing": "", "title": "zzz"}}}})
    }

    fn search_key(query: &str, limit: usize) -> String {
        request_key(&[
            ("action", "query"),
            ("list", "search"),
            ("srsearch", query),
            ("srlimit", &limit.to_string()),
            ("format", "json"),
        ])
    }

    fn extract_key(title: &str) -> String {
        request_key(&[
            ("action", "query"),
            ("prop", "extracts"),
            ("explaintext", "1"),
            ("titles", title),
            ("format", "json"),
        ])
    }

    fn client(map: BTreeMap<String, serde_json::Value>) -> WikiClient {
        WikiClient::new(Arc::new(FixtureWikiTransport::from_map(map)))
    }

    #[test]
    fn search_returns_ranked_titles() {
        let mut map = BTreeMap::new();
        map.insert(
            search_key("log-normal distribution", 3),
            search_response(&["Log-normal distribution", "Normal distribution", "Moment"]),
        );
        let c = client(map);
        let titles = c.search("log-normal distribution", 3).unwrap();
        assert_eq!(titles.len(), 3);
        assert!(titles[0].contains("Log-normal"));
    }

    #[test]
    fn empty_results_are_not_an_error() {
        let mut map = BTreeMap::new();
        map.insert(search_key("xq9z", 3), search_response(&[]));
        assert!(client(map).search("xq9z", 3).unwrap().is_empty());
    }

    #[test]
    fn missing_page_errors() {
        let mut map = BTreeMap::new();
        map.insert(extract_key("zzz-nonexistent-page-xyz"), missing_response());
        match client(map).fetch_extract("zzz-nonexistent-page-xyz") {
            Err(WikiError::PageMissing(_)) => {}
            other => panic!("expected PageMissing, got {other:?}"),
        }
    }

    #[test]
    fn extract_is_truncated_to_budget() {
        let mut map = BTreeMap::new();
        map.insert(
            extract_key("Term structure of interest rates"),
            extract_response("Term structure of interest rates", &"x".repeat(10_000)),
        );
        let c = client(map).with_extract_char_budget(100);
        let e = c.fetch_extract("Term structure of interest rates").unwrap();
        assert_eq!(e.extract_text.len(), 100);
        assert!(!e.title.is_empty());
    }

    #[test]
    fn gather_dedupes_and_excludes() {
        let spec: KeywordSpec = serde_json::from_value(json!({
            "search_strings": ["actuarial option cost", "option cost insurance"],
            "exclusions": ["option pricing in finance"],
        }))
        .unwrap();
        let mut map = BTreeMap::new();
        map.insert(
            search_key("actuarial option cost", 2),
            search_response(&["Embedded option", "Option pricing in finance"]),
        );
        map.insert(
            search_key("option cost insurance", 2),
            search_response(&["Embedded option", "Guaranteed annuity option"]),
        );
        map.insert(
            extract_key("Embedded option"),
            extract_response("Embedded option", "An embedded option..."),
        );
        map.insert(
            extract_key("Guaranteed annuity option"),
            extract_response("Guaranteed annuity option", "A GAO..."),
        );
        let extracts = client(map).gather(&spec, 2).unwrap();
        let titles: Vec<&str> = extracts.iter().map(|e| e.title.as_str()).collect();
        assert_eq!(titles, vec!["Embedded option", "Guaranteed annuity option"]);
    }

    #[test]
    fn gather_errors_only_when_all_searches_fail() {
        let spec: KeywordSpec =
            serde_json::from_value(json!({"search_strings": ["a", "b"]})).unwrap();
        // No fixtures at all: both searches fail -> error propagates.
        assert!(client(BTreeMap::new()).gather(&spec, 2).is_err());
        // One search succeeds: gather proceeds with what it has.
        let mut map = BTreeMap::new();
        map.insert(search_key("a", 2), search_response(&["Alpha"]));
        map.insert(extract_key("Alpha"), extract_response("Alpha", "text"));
        assert_eq!(client(map).gather(&spec, 2).unwrap().len(), 1);
    }

    #[test]
    fn fixture_replay_is_deterministic() {
        let build = || {
            let mut map = BTreeMap::new();
            map.insert(search_key("a", 1), search_response(&["Alpha"]));
            map.insert(extract_key("Alpha"), extract_response("Alpha", "text"));
            let spec: KeywordSpec =
                serde_json::from_value(json!({"search_strings": ["a"]})).unwrap();
            client(map).gather(&spec, 1).unwrap()
        };
        assert_eq!(build(), build());
    }
}
