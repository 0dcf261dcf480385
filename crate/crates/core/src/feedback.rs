//! User corrections: validation, an append-only JSONL log, and the merge
//! rule applied at retrain time.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{format_timestamp, Label};
use crate::entities::EntityType;
use crate::error::{Error, Result};
use crate::sentiment::SentimentClass;
use crate::textprep;
use crate::topics::{TopicLexicon, UNKNOWN_TOPIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackField {
    Label,
    Topic,
    Sentiment,
    Entity,
}

/// One correction as stored in the log. `proposed` and `prior` are plain
/// strings for label, topic and sentiment, and `{"surface", "type"}`
/// objects for entities (`prior` may be null).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    #[serde(default)]
    pub id: String,
    pub post_id: String,
    pub field: FeedbackField,
    pub proposed: Value,
    #[serde(default)]
    pub prior: Value,
    #[serde(default, with = "optional_timestamp", skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
}

mod optional_timestamp {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &Option<DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
        match ts {
            Some(ts) => s.serialize_str(&crate::corpus::format_timestamp(ts)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DateTime<Utc>>, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        raw.map(|s| {
            DateTime::parse_from_rfc3339(&s)
                .map(|t| t.with_timezone(&Utc))
                .map_err(serde::de::Error::custom)
        })
        .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityCorrection {
    pub surface: String,
    #[serde(rename = "type")]
    pub etype: EntityType,
}

/// A validated correction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Correction {
    Label(Label),
    Topic(String),
    Sentiment(SentimentClass),
    Entity(EntityCorrection),
}

fn as_text<'a>(v: &'a Value, what: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::Validation(format!("{what} must be a string, got {v}")))
}

fn parse_entity(v: &Value) -> Result<EntityCorrection> {
    let e: EntityCorrection =
        serde_json::from_value(v.clone()).map_err(|e| Error::Validation(format!("entity value {v}: {e}")))?;
    let surface = textprep::normalize_phrase(&e.surface);
    if surface.is_empty() {
        return Err(Error::Validation("entity surface is empty".into()));
    }
    Ok(EntityCorrection { surface, etype: e.etype })
}

impl FeedbackRecord {
    /// Check the proposed value against the schema and that it differs from
    /// the prior value.
    pub fn validate(&self, lexicon: &TopicLexicon) -> Result<Correction> {
        if self.post_id.trim().is_empty() {
            return Err(Error::Validation("post_id is empty".into()));
        }
        let correction = match self.field {
            FeedbackField::Label => {
                let s = as_text(&self.proposed, "label")?;
                match Label::parse(s) {
                    Some(l @ (Label::Misleading | Label::NonMisleading)) => Correction::Label(l),
                    _ => return Err(Error::Validation(format!("label must be misleading or non-misleading, got {s:?}"))),
                }
            }
            FeedbackField::Topic => {
                let s = as_text(&self.proposed, "topic")?;
                if s != UNKNOWN_TOPIC && !lexicon.contains(s) {
                    return Err(Error::Validation(format!("unknown topic {s:?}")));
                }
                Correction::Topic(s.to_string())
            }
            FeedbackField::Sentiment => {
                let s = as_text(&self.proposed, "sentiment")?;
                let class = SentimentClass::parse(s)
                    .ok_or_else(|| Error::Validation(format!("unknown sentiment class {s:?}")))?;
                Correction::Sentiment(class)
            }
            FeedbackField::Entity => Correction::Entity(parse_entity(&self.proposed)?),
        };
        let same_as_prior = match (&correction, &self.prior) {
            (_, Value::Null) => false,
            (Correction::Entity(e), prior) => parse_entity(prior).is_ok_and(|p| &p == e),
            (Correction::Label(l), Value::String(p)) => Label::parse(p) == Some(*l),
            (Correction::Sentiment(c), Value::String(p)) => SentimentClass::parse(p) == Some(*c),
            (Correction::Topic(t), Value::String(p)) => p == t,
            _ => false,
        };
        if same_as_prior {
            return Err(Error::Validation("proposed value equals the prior value".into()));
        }
        Ok(correction)
    }
}

/// Append-only JSONL log. Every append is flushed before returning.
#[derive(Debug)]
pub struct FeedbackLog {
    path: PathBuf,
    records: Vec<FeedbackRecord>,
    writer: BufWriter<File>,
    skipped: usize,
}

impl FeedbackLog {
    /// Open or create the log and replay it. Unparsable lines (such as a
    /// torn final write) are skipped with a warning.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let (records, skipped) = if path.exists() { replay(path)? } else { (Vec::new(), 0) };
        let unterminated = std::fs::read(path).is_ok_and(|b| b.last().is_some_and(|&c| c != b'\n'));
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if unterminated {
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(FeedbackLog {
            path: path.to_path_buf(),
            records,
            writer: BufWriter::new(file),
            skipped,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[FeedbackRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Assign an id (`fb-<n>`) and a timestamp if missing, then persist.
    pub fn append(&mut self, mut record: FeedbackRecord) -> Result<FeedbackRecord> {
        record.id = format!("fb-{}", self.records.len() + self.skipped + 1);
        record.submitted_at.get_or_insert_with(Utc::now);
        let line = serde_json::to_string(&record).map_err(|e| Error::json("feedback record", e))?;
        writeln!(self.writer, "{line}")
            .and_then(|_| self.writer.flush())
            .and_then(|_| self.writer.get_ref().sync_data())
            .map_err(|e| Error::io(&self.path, e))?;
        self.records.push(record.clone());
        Ok(record)
    }
}

pub fn replay(path: &Path) -> Result<(Vec<FeedbackRecord>, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<FeedbackRecord>(line) {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("{} line {}: skipping unreadable feedback ({e})", path.display(), i + 1);
                skipped += 1;
            }
        }
    }
    Ok((records, skipped))
}

/// Net effect of a feedback log.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeedbackOverrides {
    pub labels: BTreeMap<String, Label>,
    pub topics: BTreeMap<String, String>,
    pub sentiments: BTreeMap<String, SentimentClass>,
    /// Gazetteer additions keyed by normalized surface.
    pub entities: BTreeMap<String, EntityType>,
    /// Distinct corrections after deduplication.
    pub applied: usize,
    pub rejected: usize,
}

impl FeedbackOverrides {
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty() && self.topics.is_empty() && self.sentiments.is_empty() && self.entities.is_empty()
    }

    pub fn entity_additions(&self) -> Vec<(String, EntityType)> {
        self.entities.iter().map(|(s, t)| (s.clone(), *t)).collect()
    }
}

/// Latest submission wins per (post, field); entity corrections feed one
/// gazetteer, so the latest wins per surface. Equal timestamps fall back to
/// log order. Records that no longer validate are counted and dropped.
pub fn merge(records: &[FeedbackRecord], lexicon: &TopicLexicon) -> FeedbackOverrides {
    let mut ordered: Vec<(usize, &FeedbackRecord)> = records.iter().enumerate().collect();
    ordered.sort_by_key(|(i, r)| (r.submitted_at, *i));
    let mut out = FeedbackOverrides::default();
    for (_, r) in ordered {
        match r.validate(lexicon) {
            Ok(Correction::Label(l)) => {
                out.labels.insert(r.post_id.clone(), l);
            }
            Ok(Correction::Topic(t)) => {
                out.topics.insert(r.post_id.clone(), t);
            }
            Ok(Correction::Sentiment(c)) => {
                out.sentiments.insert(r.post_id.clone(), c);
            }
            Ok(Correction::Entity(e)) => {
                out.entities.insert(e.surface, e.etype);
            }
            Err(e) => {
                log::warn!("feedback {} dropped: {e}", r.id);
                out.rejected += 1;
            }
        }
    }
    out.applied = out.labels.len() + out.topics.len() + out.sentiments.len() + out.entities.len();
    out
}

/// The log as JSONL, in submission order.
pub fn export_jsonl<W: Write>(records: &[FeedbackRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::json("feedback record", e))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

impl std::fmt::Display for FeedbackRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let when = self.submitted_at.as_ref().map(format_timestamp).unwrap_or_default();
        write!(
            f,
            "{} {} {:?} {} -> {} {}",
            self.id, self.post_id, self.field, self.prior, self.proposed, when
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use serde_json::json;

    fn rec(post: &str, field: FeedbackField, proposed: Value, prior: Value, minute: u32) -> FeedbackRecord {
        FeedbackRecord {
            id: String::new(),
            post_id: post.into(),
            field,
            proposed,
            prior,
            submitted_at: Some(Utc.with_ymd_and_hms(2021, 5, 1, 10, minute, 0).unwrap()),
            session: None,
        }
    }

    #[test]
    fn validation() {
        let lex = TopicLexicon::builtin();
        let ok = rec("T1", FeedbackField::Label, json!("non-misleading"), json!("misleading"), 0);
        assert_eq!(ok.validate(&lex).unwrap(), Correction::Label(Label::NonMisleading));
        let same = rec("T1", FeedbackField::Label, json!("misleading"), json!("misleading"), 0);
        assert!(same.validate(&lex).is_err());
        assert!(rec("T1", FeedbackField::Label, json!("unlabeled"), Value::Null, 0).validate(&lex).is_err());
        assert!(rec("T1", FeedbackField::Topic, json!("Nope"), Value::Null, 0).validate(&lex).is_err());
        assert!(rec("T1", FeedbackField::Topic, json!("Trials"), Value::Null, 0).validate(&lex).is_ok());
        assert!(rec("T1", FeedbackField::Sentiment, json!("grumpy"), Value::Null, 0).validate(&lex).is_err());
        let ent = rec("T1", FeedbackField::Entity, json!({"surface": "Ohio", "type": "GPE"}), json!({"surface": "ohio", "type": "VAC_TYPE"}), 0);
        assert_eq!(
            ent.validate(&lex).unwrap(),
            Correction::Entity(EntityCorrection { surface: "ohio".into(), etype: EntityType::Gpe })
        );
        let ent_same = rec("T1", FeedbackField::Entity, json!({"surface": "ohio", "type": "GPE"}), json!({"surface": "Ohio", "type": "GPE"}), 0);
        assert!(ent_same.validate(&lex).is_err());
        assert!(rec("T1", FeedbackField::Entity, json!({"surface": "x", "type": "ALIEN"}), Value::Null, 0).validate(&lex).is_err());
    }

    #[test]
    fn latest_wins() {
        let lex = TopicLexicon::builtin();
        let records = vec![
            rec("T1", FeedbackField::Label, json!("misleading"), Value::Null, 5),
            rec("T1", FeedbackField::Label, json!("non-misleading"), Value::Null, 1),
            rec("T1", FeedbackField::Label, json!("non-misleading"), Value::Null, 1),
            rec("T2", FeedbackField::Entity, json!({"surface": "ohio", "type": "GPE"}), Value::Null, 2),
            rec("T3", FeedbackField::Entity, json!({"surface": "ohio", "type": "ORG"}), Value::Null, 3),
        ];
        let m = merge(&records, &lex);
        assert_eq!(m.labels["T1"], Label::Misleading);
        assert_eq!(m.entities["ohio"], EntityType::Org);
        assert_eq!((m.applied, m.rejected), (2, 0));
    }

    #[test]
    fn log_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fb/feedback.jsonl");
        let mut log = FeedbackLog::open(&path).unwrap();
        let r = rec("T1", FeedbackField::Sentiment, json!("positive"), json!("negative"), 0);
        let stored = log.append(r.clone()).unwrap();
        log.append(r).unwrap();
        assert_eq!(stored.id, "fb-1");
        drop(log);
        let log = FeedbackLog::open(&path).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.records()[0], stored);
        assert_eq!(log.records()[1].id, "fb-2");

        std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"torn").unwrap();
        let mut log = FeedbackLog::open(&path).unwrap();
        assert_eq!((log.len(), log.skipped()), (2, 1));
        let third = log.append(rec("T9", FeedbackField::Label, json!("misleading"), Value::Null, 0)).unwrap();
        assert_eq!(third.id, "fb-4");
    }
}
