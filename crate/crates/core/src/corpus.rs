//! Post storage: ingestion, validation, deduplication and point-in-time
//! snapshots. Every other module reads posts through a [`CorpusSnapshot`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::entities::EntitySpan;
use crate::error::{Error, Result};
use crate::sentiment::{SentimentClass, SentimentScore};
use crate::textprep::{self, PrepOptions};
use crate::topics::{TopicLabel, UNKNOWN_TOPIC};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    pub text: String,
    #[serde(with = "timestamp_format")]
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "misleading")]
    Misleading,
    #[serde(rename = "non-misleading")]
    NonMisleading,
    #[serde(rename = "unlabeled")]
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Misleading => "misleading",
            Label::NonMisleading => "non-misleading",
            Label::Unlabeled => "unlabeled",
        }
    }

    /// Parse an ingest/API label value. Empty means unlabeled.
    pub fn parse(value: &str) -> Option<Label> {
        match value.trim().to_lowercase().as_str() {
            "misleading" => Some(Label::Misleading),
            "non-misleading" | "nonmisleading" | "non_misleading" => Some(Label::NonMisleading),
            "" | "unlabeled" | "null" => Some(Label::Unlabeled),
            _ => None,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Misleading => Label::NonMisleading,
            Label::NonMisleading => Label::Misleading,
            Label::Unlabeled => Label::Unlabeled,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the current label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelOrigin {
    #[default]
    None,
    Human,
    Feedback,
    Model,
}

impl LabelOrigin {
    pub fn is_human(self) -> bool {
        matches!(self, LabelOrigin::Human | LabelOrigin::Feedback)
    }
}

/// Versions of the models that produced a post's annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ModelVersions {
    pub classifier: u64,
    pub lexicon: u64,
    pub gazetteer: u64,
    pub sentiment: u64,
    pub embeddings: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub topic: TopicLabel,
    pub entities: Vec<EntitySpan>,
    pub sentiment: SentimentClass,
    pub sentiment_score: SentimentScore,
    pub vector_id: Option<usize>,
    pub versions: ModelVersions,
    /// Fields whose value was set by human feedback rather than a model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub human_fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPost {
    #[serde(flatten)]
    pub post: RawPost,
    pub label: Label,
    pub label_confidence: f64,
    #[serde(default)]
    pub label_origin: LabelOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Annotations>,
}

impl AnnotatedPost {
    pub fn new(post: RawPost, label: Label) -> Self {
        let (label_confidence, label_origin) = match label {
            Label::Unlabeled => (0.0, LabelOrigin::None),
            _ => (1.0, LabelOrigin::Human),
        };
        AnnotatedPost {
            post,
            label,
            label_confidence,
            label_origin,
            annotations: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.post.id
    }

    pub fn topic_name(&self) -> &str {
        self.annotations
            .as_ref()
            .map(|a| a.topic.name.as_str())
            .unwrap_or(UNKNOWN_TOPIC)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CorpusStats {
    pub total: usize,
    pub per_label: BTreeMap<Label, usize>,
    pub per_topic: BTreeMap<String, usize>,
    pub time_range: Option<(DateTime<Utc>, DateTime<Utc>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestOutcome {
    pub stats: CorpusStats,
    pub accepted: usize,
    pub rejects: Vec<Reject>,
}

impl IngestOutcome {
    /// Write the rejects report as JSONL.
    pub fn write_rejects(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for r in &self.rejects {
            let line = serde_json::to_string(r).map_err(|e| Error::json("rejects report", e))?;
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    Jsonl,
    Csv,
}

impl IngestFormat {
    pub fn from_path(path: &Path) -> IngestFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => IngestFormat::Csv,
            _ => IngestFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for IngestFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "jsonl" | "json" => Ok(IngestFormat::Jsonl),
            "csv" => Ok(IngestFormat::Csv),
            other => Err(Error::Validation(format!("unknown ingest format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relevance {
    MultiMatch,
    SingleMatch,
    NoMatch,
}

/// Count distinct keywords present in the post (as tokens, hashtags or
/// 2-/3-grams). A single match is the case flagged for manual review.
pub fn relevance_filter(post: &RawPost, keywords: &[String]) -> Relevance {
    let tokens = textprep::tokenize(&post.text, &PrepOptions::default()).tokens;
    let plain: Vec<String> = tokens.iter().map(|t| textprep::strip_hash(t).to_string()).collect();
    let mut present: HashSet<String> = plain.iter().cloned().collect();
    present.extend(tokens.iter().cloned());
    present.extend(textprep::ngrams(&plain, 2));
    present.extend(textprep::ngrams(&plain, 3));

    let hits = keywords
        .iter()
        .map(|k| textprep::normalize_phrase(k))
        .filter(|k| !k.is_empty())
        .collect::<HashSet<_>>()
        .into_iter()
        .filter(|k| present.contains(k))
        .count();
    match hits {
        0 => Relevance::NoMatch,
        1 => Relevance::SingleMatch,
        _ => Relevance::MultiMatch,
    }
}

#[derive(Debug, Default, Clone)]
struct StoreState {
    posts: Vec<AnnotatedPost>,
    index: HashMap<String, usize>,
}

impl StoreState {
    fn from_posts(posts: Vec<AnnotatedPost>) -> Self {
        let index = posts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.post.id.clone(), i))
            .collect();
        StoreState { posts, index }
    }
}

/// Read-only, point-in-time view of the corpus. Cheap to clone and safe to
/// send across threads.
#[derive(Debug, Clone, Default)]
pub struct CorpusSnapshot {
    state: Arc<StoreState>,
}

impl CorpusSnapshot {
    /// Build a snapshot directly from posts. Later duplicates of an id are
    /// dropped.
    pub fn from_posts(posts: Vec<AnnotatedPost>) -> Self {
        let mut seen = HashSet::new();
        let posts = posts
            .into_iter()
            .filter(|p| seen.insert(p.post.id.clone()))
            .collect();
        CorpusSnapshot {
            state: Arc::new(StoreState::from_posts(posts)),
        }
    }

    pub fn posts(&self) -> &[AnnotatedPost] {
        &self.state.posts
    }

    pub fn len(&self) -> usize {
        self.state.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.posts.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedPost> {
        self.state.index.get(id).map(|&i| &self.state.posts[i])
    }

    pub fn stats(&self) -> CorpusStats {
        let mut stats = CorpusStats {
            total: self.len(),
            ..Default::default()
        };
        for p in self.posts() {
            *stats.per_label.entry(p.label).or_default() += 1;
            *stats.per_topic.entry(p.topic_name().to_string()).or_default() += 1;
            let ts = p.post.timestamp;
            stats.time_range = Some(match stats.time_range {
                None => (ts, ts),
                Some((lo, hi)) => (lo.min(ts), hi.max(ts)),
            });
        }
        stats
    }

    /// Posts ordered by id, the canonical export order.
    pub fn sorted_by_id(&self) -> Vec<&AnnotatedPost> {
        let mut posts: Vec<&AnnotatedPost> = self.posts().iter().collect();
        posts.sort_by(|a, b| a.post.id.cmp(&b.post.id));
        posts
    }

    /// One `AnnotatedPost` JSON document per line, ordered by id.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in self.sorted_by_id() {
            let line = serde_json::to_string(p).map_err(std::io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        out.flush()
    }

    /// Write via a sibling temporary file and rename, so readers never see
    /// a half-written store.
    pub fn export_jsonl(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        self.write_jsonl(BufWriter::new(file)).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

type AcceptFn = dyn Fn(&RawPost) -> bool + Send + Sync;

/// Single-writer, many-reader post store.
pub struct CorpusStore {
    state: RwLock<Arc<StoreState>>,
    writer: Mutex<()>,
    accept: Box<AcceptFn>,
}

impl Default for CorpusStore {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for CorpusStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorpusStore").field("len", &self.snapshot().len()).finish()
    }
}

impl CorpusStore {
    pub fn new() -> Self {
        CorpusStore {
            state: RwLock::new(Arc::new(StoreState::default())),
            writer: Mutex::new(()),
            accept: Box::new(|_| true),
        }
    }

    /// Store with a record-level acceptance predicate (e.g. a language
    /// filter). Rejected records land in the rejects report.
    pub fn with_filter(accept: impl Fn(&RawPost) -> bool + Send + Sync + 'static) -> Self {
        CorpusStore {
            accept: Box::new(accept),
            ..Self::new()
        }
    }

    /// Load a persisted JSONL store. A missing file yields an empty store.
    pub fn open(path: &Path) -> Result<Self> {
        let store = CorpusStore::new();
        if path.exists() {
            store.ingest(path, IngestFormat::Jsonl)?;
        }
        Ok(store)
    }

    pub fn snapshot(&self) -> CorpusSnapshot {
        CorpusSnapshot {
            state: Arc::clone(&self.state.read().expect("store lock poisoned")),
        }
    }

    pub fn ingest(&self, path: &Path, format: IngestFormat) -> Result<IngestOutcome> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let records = match format {
            IngestFormat::Jsonl => read_jsonl(BufReader::new(file), path)?,
            IngestFormat::Csv => read_csv(file, path)?,
        };
        Ok(self.insert_records(records))
    }

    /// Insert already-parsed records; used by both file formats.
    fn insert_records(&self, records: Vec<(usize, Result<AnnotatedPost, String>)>) -> IngestOutcome {
        let _guard = self.writer.lock().expect("writer lock poisoned");
        let mut next: StoreState = (**self.state.read().expect("store lock poisoned")).clone();
        let mut rejects = Vec::new();
        let mut accepted = 0;

        for (line, record) in records {
            let post = match record {
                Ok(p) => p,
                Err(reason) => {
                    rejects.push(Reject { line, reason });
                    continue;
                }
            };
            if next.index.contains_key(&post.post.id) {
                rejects.push(Reject {
                    line,
                    reason: format!("duplicate id {:?}", post.post.id),
                });
                continue;
            }
            if !(self.accept)(&post.post) {
                rejects.push(Reject {
                    line,
                    reason: "rejected by ingest filter".into(),
                });
                continue;
            }
            next.index.insert(post.post.id.clone(), next.posts.len());
            next.posts.push(post);
            accepted += 1;
        }

        let snapshot = CorpusSnapshot {
            state: Arc::new(next),
        };
        *self.state.write().expect("store lock poisoned") = Arc::clone(&snapshot.state);
        IngestOutcome {
            stats: snapshot.stats(),
            accepted,
            rejects,
        }
    }

    /// Replace the whole store contents (used after annotation).
    pub fn replace(&self, snapshot: &CorpusSnapshot) {
        let _guard = self.writer.lock().expect("writer lock poisoned");
        *self.state.write().expect("store lock poisoned") = Arc::clone(&snapshot.state);
    }
}

/// Ingest record: the documented schema plus the optional annotation
/// fields written by export, so exported stores re-ingest losslessly.
#[derive(Debug, Deserialize)]
struct IngestRecord {
    id: Option<String>,
    text: Option<String>,
    timestamp: Option<serde_json::Value>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    label_confidence: Option<f64>,
    #[serde(default)]
    label_origin: Option<LabelOrigin>,
    #[serde(default)]
    annotations: Option<Annotations>,
}

fn parse_timestamp(value: &serde_json::Value) -> Result<DateTime<Utc>, String> {
    match value {
        serde_json::Value::Number(n) => n
            .as_i64()
            .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
            .ok_or_else(|| format!("invalid epoch timestamp {n}")),
        serde_json::Value::String(s) => parse_timestamp_str(s),
        other => Err(format!("invalid timestamp {other}")),
    }
}

fn parse_timestamp_str(s: &str) -> Result<DateTime<Utc>, String> {
    let s = s.trim();
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit() || b == b'-') {
        if let Some(ts) = s.parse::<i64>().ok().and_then(|secs| Utc.timestamp_opt(secs, 0).single()) {
            return Ok(ts);
        }
    }
    DateTime::parse_from_rfc3339(s)
        .map(|dt| {
            let utc = dt.with_timezone(&Utc);
            Utc.timestamp_opt(utc.timestamp(), 0).single().unwrap_or(utc)
        })
        .map_err(|_| format!("invalid timestamp {s:?}"))
}

fn validate(record: IngestRecord) -> Result<AnnotatedPost, String> {
    let id = record.id.map(|s| s.trim().to_string()).unwrap_or_default();
    if id.is_empty() {
        return Err("missing id".into());
    }
    let text = record.text.unwrap_or_default();
    if text.trim().is_empty() {
        return Err("empty text".into());
    }
    let timestamp = match &record.timestamp {
        Some(v) => parse_timestamp(v)?,
        None => return Err("missing timestamp".into()),
    };
    let label = match record.label.as_deref() {
        None => Label::Unlabeled,
        Some(s) => Label::parse(s).ok_or_else(|| format!("invalid label {s:?}"))?,
    };
    let mut post = AnnotatedPost::new(
        RawPost {
            id,
            text,
            timestamp,
            source: record.source.unwrap_or_default(),
        },
        label,
    );
    if let Some(origin) = record.label_origin {
        post.label_origin = origin;
    }
    if let Some(conf) = record.label_confidence {
        if !(0.0..=1.0).contains(&conf) {
            return Err(format!("label_confidence {conf} outside [0,1]"));
        }
        post.label_confidence = conf;
    }
    post.annotations = record.annotations;
    Ok(post)
}

fn read_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<Vec<(usize, Result<AnnotatedPost, String>)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<IngestRecord>(&line)
            .map_err(|e| format!("malformed record: {e}"))
            .and_then(validate);
        out.push((i + 1, parsed));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct CsvRecord {
    id: Option<String>,
    text: Option<String>,
    timestamp: Option<String>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    source: Option<String>,
}

fn read_csv(file: File, path: &Path) -> Result<Vec<(usize, Result<AnnotatedPost, String>)>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<CsvRecord>().enumerate() {
        let line = i + 2;
        let parsed = match row {
            Ok(r) => validate(IngestRecord {
                id: r.id,
                text: r.text,
                timestamp: r.timestamp.map(serde_json::Value::String),
                label: r.label,
                source: r.source,
                label_confidence: None,
                label_origin: None,
                annotations: None,
            }),
            Err(e) if e.is_io_error() => {
                return Err(Error::Validation(format!("{}: {e}", path.display())));
            }
            Err(e) => Err(format!("malformed record: {e}")),
        };
        out.push((line, parsed));
    }
    Ok(out)
}

pub(crate) mod timestamp_format {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        super::parse_timestamp(&v).map_err(serde::de::Error::custom)
    }
}

/// RFC 3339 with second precision and a `Z` suffix.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}
