//! News-feed ingestion: feed JSON to article records, text cleanup, and
//! per-source reputation weights.
//!
//! Feeds are News-API shaped: a top-level `articles` array whose entries
//! carry `source.name`, `title`, `description`/`content`, and `publishedAt`.
//! Entries that cannot yield a usable record (no text at all, or an
//! unparseable timestamp) are skipped and counted rather than failing the
//! whole feed. Everything here is pure; feeds can be parsed concurrently and
//! the weight registry is read-only after load.

use std::collections::HashMap;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde_json::Value;
use thiserror::Error;

/// Errors from feed parsing and registry loading.
#[derive(Debug, Error)]
pub enum NewsError {
    #[error("feed is not valid JSON: {reason}")]
    Json { reason: String },

    #[error("feed has no `articles` array")]
    MissingArticles,

    #[error("weight registry line {line}: {reason}")]
    Registry { line: usize, reason: String },

    #[error("default weight must lie in (0, 1], got {value}")]
    BadDefaultWeight { value: f64 },

    #[cfg(feature = "fetch")]
    #[error("feed fetch failed: {reason}")]
    Fetch { reason: String },
}

/// One article as extracted from a feed.
///
/// `title` and `body` may individually be empty but never both; `body` is the
/// entry's `content` when present, else its `description`. Entries without a
/// source name get `"unknown"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewsArticle {
    pub source_name: String,
    pub title: String,
    pub body: String,
    pub published_at: DateTime<Utc>,
}

/// Result of parsing one feed: the usable records plus how many entries were
/// dropped (no text, or a missing/unparseable timestamp).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFeed {
    pub articles: Vec<NewsArticle>,
    pub skipped: usize,
}

fn str_field(entry: &Value, key: &str) -> String {
    entry.get(key).and_then(Value::as_str).unwrap_or("").to_string()
}

/// Parses News-API-shaped JSON into article records.
///
/// Total on arbitrary input: malformed documents produce a structured error,
/// malformed entries are skipped and counted, and well-formed entries map
/// verbatim.
pub fn parse_feed(json_text: &str) -> Result<ParsedFeed, NewsError> {
    let doc: Value =
        serde_json::from_str(json_text).map_err(|e| NewsError::Json { reason: e.to_string() })?;
    let entries = doc
        .get("articles")
        .and_then(Value::as_array)
        .ok_or(NewsError::MissingArticles)?;

    let mut articles = Vec::new();
    let mut skipped = 0usize;
    for entry in entries {
        let title = str_field(entry, "title");
        let content = str_field(entry, "content");
        let body = if content.is_empty() { str_field(entry, "description") } else { content };
        if title.is_empty() && body.is_empty() {
            skipped += 1;
            continue;
        }
        let published_at = entry
            .get("publishedAt")
            .and_then(Value::as_str)
            .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
            .map(|t| t.with_timezone(&Utc));
        let Some(published_at) = published_at else {
            skipped += 1;
            continue;
        };
        let source_name = {
            let name = entry
                .get("source")
                .and_then(|s| s.get("name"))
                .and_then(Value::as_str)
                .unwrap_or("");
            if name.is_empty() { "unknown".to_string() } else { name.to_string() }
        };
        articles.push(NewsArticle { source_name, title, body, published_at });
    }
    Ok(ParsedFeed { articles, skipped })
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Scheme-prefixed tokens: "https://...", "ftp://...", and so on.
    RE.get_or_init(|| Regex::new(r"[A-Za-z][A-Za-z0-9+.-]*://\S+").expect("static regex"))
}

/// Cleans and concatenates an article's text for scoring.
///
/// Joins the non-empty components with ". ", replaces control characters
/// (below 0x20) with spaces, removes scheme-prefixed URLs, collapses
/// whitespace runs to single spaces, and trims. Idempotent: cleaning already
/// cleaned text changes nothing.
pub fn prepare_text(article: &NewsArticle) -> String {
    let combined = match (article.title.is_empty(), article.body.is_empty()) {
        (false, false) => format!("{}. {}", article.title, article.body),
        (false, true) => article.title.clone(),
        (true, _) => article.body.clone(),
    };
    let no_controls: String =
        combined.chars().map(|c| if (c as u32) < 0x20 { ' ' } else { c }).collect();
    let no_urls = url_pattern().replace_all(&no_controls, " ");
    no_urls.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Per-source reputation weights in (0, 1], with a default for sources the
/// table does not list. Lookup is case-insensitive.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceWeightRegistry {
    weights: HashMap<String, f64>,
    default_weight: f64,
}

fn valid_weight(w: f64) -> bool {
    w.is_finite() && w > 0.0 && w <= 1.0
}

impl SourceWeightRegistry {
    pub fn new(default_weight: f64) -> Result<Self, NewsError> {
        if !valid_weight(default_weight) {
            return Err(NewsError::BadDefaultWeight { value: default_weight });
        }
        Ok(Self { weights: HashMap::new(), default_weight })
    }

    /// Loads `source_name<TAB>weight` lines; `#` starts a comment line and
    /// blank lines are ignored. Duplicate sources are rejected so an edited
    /// table cannot silently shadow an earlier entry.
    pub fn from_tsv(text: &str, default_weight: f64) -> Result<Self, NewsError> {
        let mut registry = Self::new(default_weight)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (name, weight_text) = trimmed.split_once('\t').ok_or_else(|| {
                NewsError::Registry { line, reason: "expected `source<TAB>weight`".to_string() }
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(NewsError::Registry { line, reason: "empty source name".to_string() });
            }
            let weight: f64 = weight_text.trim().parse().map_err(|_| NewsError::Registry {
                line,
                reason: format!("unparseable weight {weight_text:?}"),
            })?;
            if !valid_weight(weight) {
                return Err(NewsError::Registry {
                    line,
                    reason: format!("weight {weight} outside (0, 1]"),
                });
            }
            let key = name.to_lowercase();
            if registry.weights.insert(key, weight).is_some() {
                return Err(NewsError::Registry {
                    line,
                    reason: format!("duplicate source {name:?}"),
                });
            }
        }
        Ok(registry)
    }

    /// The reputation table shipped with the crate.
    pub fn builtin(default_weight: f64) -> Result<Self, NewsError> {
        Self::from_tsv(include_str!("../data/sources.tsv"), default_weight)
    }

    /// Case-insensitive lookup; unknown sources get the default weight.
    pub fn weight(&self, source_name: &str) -> f64 {
        self.weights
            .get(&source_name.to_lowercase())
            .copied()
            .unwrap_or(self.default_weight)
    }

    pub fn default_weight(&self) -> f64 {
        self.default_weight
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Fetches a feed over HTTP and parses it. The endpoint must return the same
/// News-API JSON shape the file path uses; the key, when given, is sent as
/// the `X-Api-Key` header.
#[cfg(feature = "fetch")]
pub fn fetch_feed(url: &str, api_key: Option<&str>) -> Result<ParsedFeed, NewsError> {
    let client = reqwest::blocking::Client::new();
    let mut request = client.get(url);
    if let Some(key) = api_key {
        request = request.header("X-Api-Key", key);
    }
    let text = request
        .send()
        .and_then(|r| r.error_for_status())
        .and_then(|r| r.text())
        .map_err(|e| NewsError::Fetch { reason: e.to_string() })?;
    parse_feed(&text)
}
