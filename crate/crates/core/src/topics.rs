//! Topic lexicon matching and the Table-I-shaped topic report.
//!
//! Topics are assigned by keyword presence against a curated lexicon (topic
//! names ascribed by humans, typically after inspecting an LDA fit, see
//! [`crate::lda`]). Posts matching nothing are `Unknown` and get a second
//! pass over per-topic synonym lists.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusSnapshot;
use crate::error::{Error, Result};
use crate::textprep::{self, TokenizedText};

pub const UNKNOWN_TOPIC: &str = "Unknown";

const BUILTIN_LEXICON: &str = include_str!("../data/topic_lexicon.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub name: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

/// Ordered topic entries; order decides ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicLexicon {
    entries: Vec<TopicEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLabel {
    pub name: String,
    pub matched_terms: Vec<String>,
    pub rescue: bool,
}

impl TopicLabel {
    pub fn unknown() -> Self {
        TopicLabel {
            name: UNKNOWN_TOPIC.to_string(),
            matched_terms: Vec::new(),
            rescue: false,
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.name == UNKNOWN_TOPIC
    }
}

impl TopicLexicon {
    /// Validate and normalize: names unique and not `Unknown`, terms
    /// normalized with the shared tokenizer (so they are lowercase).
    pub fn new(entries: Vec<TopicEntry>) -> Result<Self> {
        let mut names = HashSet::new();
        let mut normalized = Vec::with_capacity(entries.len());
        for e in entries {
            let name = e.name.trim().to_string();
            if name.is_empty() {
                return Err(Error::Validation("topic with empty name".into()));
            }
            if name.eq_ignore_ascii_case(UNKNOWN_TOPIC) {
                return Err(Error::Validation(format!("{UNKNOWN_TOPIC:?} is reserved and takes no keywords")));
            }
            if !names.insert(name.clone()) {
                return Err(Error::Validation(format!("duplicate topic name {name:?}")));
            }
            normalized.push(TopicEntry {
                name,
                keywords: normalize_terms(&e.keywords),
                synonyms: normalize_terms(&e.synonyms),
            });
        }
        Ok(TopicLexicon { entries: normalized })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let entries: Vec<TopicEntry> = serde_json::from_str(json).map_err(|e| Error::json("topic lexicon", e))?;
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The shipped COVID-19 vaccine lexicon. Its keyword lists are
    /// illustrative, not the ones used to label any published dataset.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_LEXICON).expect("builtin topic lexicon is valid")
    }

    pub fn entries(&self) -> &[TopicEntry] {
        &self.entries
    }

    /// Lexicon topic names in order, followed by `Unknown`.
    pub fn names(&self) -> Vec<&str> {
        self.entries
            .iter()
            .map(|e| e.name.as_str())
            .chain(std::iter::once(UNKNOWN_TOPIC))
            .collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        name == UNKNOWN_TOPIC || self.entries.iter().any(|e| e.name == name)
    }
}

fn normalize_terms(terms: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    terms
        .iter()
        .map(|t| textprep::normalize_phrase(t))
        .filter(|t| !t.is_empty() && seen.insert(t.clone()))
        .collect()
}

/// All unigrams (with and without `#`), 2-grams and 3-grams of the text.
fn candidate_terms(t: &TokenizedText) -> HashSet<String> {
    let plain: Vec<String> = t.tokens.iter().map(|x| textprep::strip_hash(x).to_string()).collect();
    let mut set: HashSet<String> = t.tokens.iter().cloned().collect();
    set.extend(plain.iter().cloned());
    set.extend(textprep::ngrams(&plain, 2));
    set.extend(textprep::ngrams(&plain, 3));
    set
}

fn best_match<'a>(
    t: &TokenizedText,
    lex: &'a TopicLexicon,
    terms_of: impl Fn(&'a TopicEntry) -> &'a [String],
) -> Option<(&'a str, Vec<String>)> {
    let present = candidate_terms(t);
    let mut best: Option<(&str, Vec<String>)> = None;
    for entry in lex.entries() {
        let mut hits: Vec<String> = terms_of(entry).iter().filter(|k| present.contains(*k)).cloned().collect();
        if hits.is_empty() {
            continue;
        }
        hits.sort();
        // strictly greater: earlier entries win ties
        if best.as_ref().is_none_or(|(_, b)| hits.len() > b.len()) {
            best = Some((entry.name.as_str(), hits));
        }
    }
    best
}

/// Topic with the most distinct keyword hits (tokens, 2- and 3-grams); ties
/// go to the earlier lexicon entry; no hits gives `Unknown`.
pub fn assign_topic(t: &TokenizedText, lex: &TopicLexicon) -> TopicLabel {
    match best_match(t, lex, |e| &e.keywords) {
        Some((name, matched_terms)) => TopicLabel {
            name: name.to_string(),
            matched_terms,
            rescue: false,
        },
        None => TopicLabel::unknown(),
    }
}

/// Second pass for `Unknown` posts using synonym lists.
pub fn synonym_rescue(t: &TokenizedText, lex: &TopicLexicon) -> Option<TopicLabel> {
    best_match(t, lex, |e| &e.synonyms).map(|(name, matched_terms)| TopicLabel {
        name: name.to_string(),
        matched_terms,
        rescue: true,
    })
}

/// Keyword assignment followed by synonym rescue when nothing matched.
pub fn label_topic(t: &TokenizedText, lex: &TopicLexicon) -> TopicLabel {
    let label = assign_topic(t, lex);
    if label.is_unknown() {
        synonym_rescue(t, lex).unwrap_or(label)
    } else {
        label
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicReportRow {
    pub topic: String,
    pub count: usize,
    /// Percentage of the corpus, two decimals.
    pub percentage: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicReport {
    pub total: usize,
    pub rows: Vec<TopicReportRow>,
}

/// `count / total` as a percentage with two decimals, truncated rather
/// than rounded (8.3465% renders as 8.34).
pub fn format_percentage(count: usize, total: usize) -> String {
    if total == 0 {
        return "0.00".into();
    }
    let scaled = count as u128 * 10_000 / total as u128;
    format!("{}.{:02}", scaled / 100, scaled % 100)
}

/// Rows sorted by count descending, then by name.
pub fn topic_report_from_counts(counts: &BTreeMap<String, usize>) -> TopicReport {
    let total = counts.values().sum();
    let mut rows: Vec<TopicReportRow> = counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(topic, &count)| TopicReportRow {
            topic: topic.clone(),
            count,
            percentage: format_percentage(count, total),
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.topic.cmp(&b.topic)));
    TopicReport { total, rows }
}

pub fn topic_report(snapshot: &CorpusSnapshot) -> TopicReport {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in snapshot.posts() {
        *counts.entry(p.topic_name().to_string()).or_default() += 1;
    }
    topic_report_from_counts(&counts)
}

/// Per-topic distinct matched terms, a debugging aid for lexicon curation.
pub fn matched_vocabulary(snapshot: &CorpusSnapshot) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for p in snapshot.posts() {
        if let Some(a) = &p.annotations {
            out.entry(a.topic.name.clone())
                .or_default()
                .extend(a.topic.matched_terms.iter().cloned());
        }
    }
    out
}
