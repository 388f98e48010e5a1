//! Sentiment scoring and aggregation.
//!
//! A [`SentimentScorer`] maps cleaned article text to a tag plus confidence.
//! The shipped [`LexiconScorer`] counts hits against a small finance word
//! list; [`PipeScorer`] delegates to any external model over a line-oriented
//! child-process pipe, so a transformer can be swapped in without touching
//! callers. Scores are signed (negative tag flips the sign), weighted by
//! source reputation, and folded into per-interval cumulative scores
//!
//!   W_cs = sum(w_i * x_i) / sum(w_i)
//!
//! over UTC day or hour buckets. Scoring is pure per scorer; aggregation is
//! a sequential fold over an immutable list.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;

use chrono::{DateTime, Duration, TimeZone, Timelike, Utc};
use thiserror::Error;

use crate::news::NewsArticle;

/// Most tokens of cleaned text an external scorer is handed; the rest is
/// truncated away (transformer-typical input limit).
pub const MAX_SCORER_TOKENS: usize = 512;

/// Errors from scoring, aggregation, and scored-CSV IO.
#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },

    #[error("cannot aggregate an empty article list")]
    EmptyList,

    #[error("article weight must be positive, got {value}")]
    BadWeight { value: f64 },

    #[error("confidence must lie in [0, 1], got {value}")]
    BadConfidence { value: f64 },

    #[error("unknown sentiment tag {text:?}")]
    BadTag { text: String },

    #[error("scorer pipe: {reason}")]
    Pipe { reason: String },

    #[error("scored csv line {line}: {reason}")]
    ScoredCsv { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three sentiment classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SentimentTag {
    Positive,
    Negative,
    Neutral,
}

impl fmt::Display for SentimentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SentimentTag::Positive => "POSITIVE",
            SentimentTag::Negative => "NEGATIVE",
            SentimentTag::Neutral => "NEUTRAL",
        };
        f.write_str(s)
    }
}

impl FromStr for SentimentTag {
    type Err = SentimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "POSITIVE" => Ok(SentimentTag::Positive),
            "NEGATIVE" => Ok(SentimentTag::Negative),
            "NEUTRAL" => Ok(SentimentTag::Neutral),
            other => Err(SentimentError::BadTag { text: other.to_string() }),
        }
    }
}

/// A tag with its confidence in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentimentLabel {
    pub tag: SentimentTag,
    pub confidence: f64,
}

impl SentimentLabel {
    pub fn new(tag: SentimentTag, confidence: f64) -> Result<Self, SentimentError> {
        if !(confidence.is_finite() && (0.0..=1.0).contains(&confidence)) {
            return Err(SentimentError::BadConfidence { value: confidence });
        }
        Ok(Self { tag, confidence })
    }
}

/// Signed score x in [-1, 1]: the confidence, negated exactly when the tag
/// is NEGATIVE. POSITIVE and NEUTRAL keep it as is (the lexicon gives
/// NEUTRAL confidence 0, so it contributes nothing).
pub fn signed_score(label: &SentimentLabel) -> f64 {
    match label.tag {
        SentimentTag::Negative => -label.confidence,
        SentimentTag::Positive | SentimentTag::Neutral => label.confidence,
    }
}

/// Anything that maps cleaned text to a sentiment label. Implementations
/// must be deterministic for a fixed scorer version.
pub trait SentimentScorer {
    fn score(&mut self, text: &str) -> Result<SentimentLabel, SentimentError>;
}

/// Word-list scorer: confidence = |pos - neg| / max(1, pos + neg) over
/// lexicon hits in the lowercased, alphanumeric-tokenized text; the tag
/// follows the sign of (pos - neg), NEUTRAL on a tie. A stand-in oracle for
/// a real model, not a claim of parity with one.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    words: HashMap<String, bool>, // true = positive
}

impl LexiconScorer {
    /// Loads `word<TAB>{+|-}` lines; `#` comments and blank lines allowed.
    pub fn from_tsv(text: &str) -> Result<Self, SentimentError> {
        let mut words = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (word, mark) = trimmed.split_once('\t').ok_or_else(|| {
                SentimentError::Lexicon { line, reason: "expected `word<TAB>{+|-}`".to_string() }
            })?;
            let word = word.trim().to_lowercase();
            if word.is_empty() {
                return Err(SentimentError::Lexicon { line, reason: "empty word".to_string() });
            }
            let positive = match mark.trim() {
                "+" => true,
                "-" => false,
                other => {
                    return Err(SentimentError::Lexicon {
                        line,
                        reason: format!("mark must be + or -, got {other:?}"),
                    })
                }
            };
            if words.insert(word.clone(), positive).is_some() {
                return Err(SentimentError::Lexicon {
                    line,
                    reason: format!("duplicate word {word:?}"),
                });
            }
        }
        Ok(Self { words })
    }

    /// The lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_tsv(include_str!("../data/lexicon.tsv")).expect("shipped lexicon is well-formed")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    fn hits(&self, text: &str) -> (usize, usize) {
        let mut pos = 0usize;
        let mut neg = 0usize;
        for token in text.split(|c: char| !c.is_alphanumeric()) {
            if token.is_empty() {
                continue;
            }
            match self.words.get(&token.to_lowercase()) {
                Some(true) => pos += 1,
                Some(false) => neg += 1,
                None => {}
            }
        }
        (pos, neg)
    }
}

impl SentimentScorer for LexiconScorer {
    fn score(&mut self, text: &str) -> Result<SentimentLabel, SentimentError> {
        let (pos, neg) = self.hits(text);
        let diff = pos as f64 - neg as f64;
        let confidence = diff.abs() / 1f64.max((pos + neg) as f64);
        let tag = if pos > neg {
            SentimentTag::Positive
        } else if neg > pos {
            SentimentTag::Negative
        } else {
            SentimentTag::Neutral
        };
        SentimentLabel::new(tag, confidence)
    }
}

/// Keeps at most [`MAX_SCORER_TOKENS`] whitespace-separated tokens.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> String {
    text.split_whitespace().take(max_tokens).collect::<Vec<_>>().join(" ")
}

/// Adapter for an external scorer process. Per article, one line of cleaned
/// (and token-truncated) text goes to the child's stdin and one
/// `tag<TAB>confidence` line is read back from its stdout. The child is
/// killed on drop.
pub struct PipeScorer {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl PipeScorer {
    pub fn spawn(command: &str, args: &[String]) -> Result<Self, SentimentError> {
        let mut child = Command::new(command)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout was piped"));
        Ok(Self { child, stdin, stdout })
    }
}

impl SentimentScorer for PipeScorer {
    fn score(&mut self, text: &str) -> Result<SentimentLabel, SentimentError> {
        // Cleaned text has no control characters, so one text is one line.
        let line = truncate_tokens(text, MAX_SCORER_TOKENS);
        writeln!(self.stdin, "{line}")?;
        self.stdin.flush()?;
        let mut response = String::new();
        let n = self.stdout.read_line(&mut response)?;
        if n == 0 {
            return Err(SentimentError::Pipe { reason: "scorer closed the pipe".to_string() });
        }
        let response = response.trim_end_matches(['\r', '\n']);
        let (tag_text, conf_text) = response.split_once('\t').ok_or_else(|| {
            SentimentError::Pipe { reason: format!("expected `tag<TAB>confidence`, got {response:?}") }
        })?;
        let tag: SentimentTag = tag_text.parse()?;
        let confidence: f64 = conf_text.trim().parse().map_err(|_| SentimentError::Pipe {
            reason: format!("unparseable confidence {conf_text:?}"),
        })?;
        SentimentLabel::new(tag, confidence)
    }
}

impl Drop for PipeScorer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// An article with its label, signed score, and source weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredArticle {
    pub article: NewsArticle,
    pub label: SentimentLabel,
    pub signed_score: f64,
    pub weight: f64,
}

impl ScoredArticle {
    pub fn new(
        article: NewsArticle,
        label: SentimentLabel,
        weight: f64,
    ) -> Result<Self, SentimentError> {
        if !(weight.is_finite() && weight > 0.0 && weight <= 1.0) {
            return Err(SentimentError::BadWeight { value: weight });
        }
        Ok(Self { article, label, signed_score: signed_score(&label), weight })
    }
}

fn weighted_mean(
    pairs: impl IntoIterator<Item = (f64, f64)>,
) -> Result<f64, SentimentError> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut any = false;
    for (w, x) in pairs {
        if !(w.is_finite() && w > 0.0) {
            return Err(SentimentError::BadWeight { value: w });
        }
        num += w * x;
        den += w;
        any = true;
    }
    if !any {
        return Err(SentimentError::EmptyList);
    }
    Ok(num / den)
}

/// Cumulative sentiment score: the weighted mean of the signed scores,
/// W_cs = sum(w_i * x_i) / sum(w_i). Bounded by the extremes of its inputs.
pub fn weighted_cumulative(scored: &[ScoredArticle]) -> Result<f64, SentimentError> {
    weighted_mean(scored.iter().map(|s| (s.weight, s.signed_score)))
}

/// Aggregation bucket width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Day,
    Hour,
}

impl FromStr for Granularity {
    type Err = SentimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(Granularity::Day),
            "hour" => Ok(Granularity::Hour),
            other => Err(SentimentError::BadTag { text: other.to_string() }),
        }
    }
}

/// One non-empty bucket: its UTC bounds, cumulative score, and size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentimentInterval {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub w_cs: f64,
    pub article_count: usize,
}

/// The minimal projection aggregation needs: when, how trusted, how signed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentimentPoint {
    pub published_at: DateTime<Utc>,
    pub weight: f64,
    pub signed_score: f64,
}

impl From<&ScoredArticle> for SentimentPoint {
    fn from(s: &ScoredArticle) -> Self {
        Self { published_at: s.article.published_at, weight: s.weight, signed_score: s.signed_score }
    }
}

fn bucket_start(at: DateTime<Utc>, granularity: Granularity) -> DateTime<Utc> {
    match granularity {
        Granularity::Day => Utc
            .from_utc_datetime(&at.date_naive().and_hms_opt(0, 0, 0).expect("midnight exists")),
        Granularity::Hour => at
            .with_minute(0)
            .and_then(|t| t.with_second(0))
            .and_then(|t| t.with_nanosecond(0))
            .expect("truncation to the hour exists"),
    }
}

/// Groups points into UTC calendar buckets and emits one interval per
/// non-empty bucket, ascending; each interval's W_cs is the weighted mean
/// over its members.
pub fn bucket_by_interval(
    points: &[SentimentPoint],
    granularity: Granularity,
) -> Result<Vec<SentimentInterval>, SentimentError> {
    let mut buckets: BTreeMap<DateTime<Utc>, Vec<(f64, f64)>> = BTreeMap::new();
    for p in points {
        buckets
            .entry(bucket_start(p.published_at, granularity))
            .or_default()
            .push((p.weight, p.signed_score));
    }
    let width = match granularity {
        Granularity::Day => Duration::days(1),
        Granularity::Hour => Duration::hours(1),
    };
    let mut intervals = Vec::with_capacity(buckets.len());
    for (start, members) in buckets {
        let article_count = members.len();
        let w_cs = weighted_mean(members)?;
        intervals.push(SentimentInterval { start, end: start + width, w_cs, article_count });
    }
    Ok(intervals)
}

/// Renders scored articles as `published_at,source,weight,tag,confidence,signed_score`.
pub fn to_scored_csv(scored: &[ScoredArticle]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["published_at", "source", "weight", "tag", "confidence", "signed_score"])
        .expect("vec writer");
    for s in scored {
        writer
            .write_record([
                s.article.published_at.to_rfc3339(),
                s.article.source_name.clone(),
                s.weight.to_string(),
                s.label.tag.to_string(),
                s.label.confidence.to_string(),
                s.signed_score.to_string(),
            ])
            .expect("vec writer");
    }
    String::from_utf8(writer.into_inner().expect("vec writer")).expect("csv is utf-8")
}

/// One row of a scored-articles CSV (the text columns are not exported, so
/// the article itself cannot be reconstructed).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord {
    pub published_at: DateTime<Utc>,
    pub source_name: String,
    pub weight: f64,
    pub label: SentimentLabel,
    pub signed_score: f64,
}

impl From<&ScoredRecord> for SentimentPoint {
    fn from(r: &ScoredRecord) -> Self {
        Self { published_at: r.published_at, weight: r.weight, signed_score: r.signed_score }
    }
}

/// Parses the CSV written by [`to_scored_csv`], re-validating every row.
pub fn from_scored_csv(text: &str) -> Result<Vec<ScoredRecord>, SentimentError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let expect = ["published_at", "source", "weight", "tag", "confidence", "signed_score"];
    let headers = reader
        .headers()
        .map_err(|e| SentimentError::ScoredCsv { line: 1, reason: e.to_string() })?;
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(SentimentError::ScoredCsv {
            line: 1,
            reason: format!("expected header {}", expect.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let bad = |reason: String| SentimentError::ScoredCsv { line, reason };
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != expect.len() {
            return Err(bad(format!("expected {} fields, got {}", expect.len(), record.len())));
        }
        let published_at = DateTime::parse_from_rfc3339(&record[0])
            .map_err(|e| bad(format!("bad timestamp: {e}")))?
            .with_timezone(&Utc);
        let source_name = record[1].to_string();
        let weight: f64 =
            record[2].parse().map_err(|_| bad(format!("bad weight {:?}", &record[2])))?;
        if !(weight.is_finite() && weight > 0.0 && weight <= 1.0) {
            return Err(bad(format!("weight {weight} outside (0, 1]")));
        }
        let tag: SentimentTag = record[3].parse().map_err(|_| bad(format!("bad tag {:?}", &record[3])))?;
        let confidence: f64 =
            record[4].parse().map_err(|_| bad(format!("bad confidence {:?}", &record[4])))?;
        let label =
            SentimentLabel::new(tag, confidence).map_err(|e| bad(e.to_string()))?;
        let stated: f64 = record[5]
            .parse()
            .map_err(|_| bad(format!("bad signed score {:?}", &record[5])))?;
        let expected = signed_score(&label);
        if (stated - expected).abs() > 1e-9 {
            return Err(bad(format!(
                "signed score {stated} disagrees with tag and confidence (expected {expected})"
            )));
        }
        rows.push(ScoredRecord { published_at, source_name, weight, label, signed_score: expected });
    }
    Ok(rows)
}
