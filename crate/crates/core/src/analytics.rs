//! Aggregates for the overview screens: topic distribution by label, entity
//! clouds and label-split timelines.

use std::collections::BTreeMap;
use std::str::FromStr;

use chrono::{Datelike, Days, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedPost, CorpusSnapshot, Label};
use crate::entities::EntityType;
use crate::error::{Error, Result};
use crate::topics::{format_percentage, TopicLexicon, UNKNOWN_TOPIC};

pub const DEFAULT_CLOUD_SIZE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub misleading: usize,
    pub non_misleading: usize,
    pub unlabeled: usize,
}

impl LabelCounts {
    fn add(&mut self, label: Label) {
        match label {
            Label::Misleading => self.misleading += 1,
            Label::NonMisleading => self.non_misleading += 1,
            Label::Unlabeled => self.unlabeled += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.misleading + self.non_misleading + self.unlabeled
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicRow {
    pub topic: String,
    pub misleading: usize,
    pub non_misleading: usize,
    pub unlabeled: usize,
    pub total: usize,
    /// Share of the whole corpus, two decimals.
    pub percentage: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicDistribution {
    pub total: usize,
    pub rows: Vec<TopicRow>,
}

/// One row per topic that has posts, sorted by total descending, then name.
pub fn topic_distribution(snapshot: &CorpusSnapshot) -> TopicDistribution {
    let mut counts: BTreeMap<&str, LabelCounts> = BTreeMap::new();
    for p in snapshot.posts() {
        counts.entry(p.topic_name()).or_default().add(p.label);
    }
    let total = snapshot.len();
    let mut rows: Vec<TopicRow> = counts
        .into_iter()
        .map(|(topic, c)| TopicRow {
            topic: topic.to_string(),
            misleading: c.misleading,
            non_misleading: c.non_misleading,
            unlabeled: c.unlabeled,
            total: c.total(),
            percentage: format_percentage(c.total(), total),
        })
        .collect();
    rows.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.topic.cmp(&b.topic)));
    TopicDistribution { total, rows }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudEntry {
    pub surface: String,
    #[serde(rename = "type")]
    pub etype: EntityType,
    pub frequency: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCloud {
    pub topic: String,
    pub misleading: Vec<CloudEntry>,
    pub non_misleading: Vec<CloudEntry>,
}

fn check_topic(topic: &str, lexicon: &TopicLexicon) -> Result<()> {
    if topic == UNKNOWN_TOPIC || lexicon.contains(topic) {
        Ok(())
    } else {
        Err(Error::NotFound(format!("topic {topic:?}")))
    }
}

fn cloud(posts: &[&AnnotatedPost], n: usize) -> Vec<CloudEntry> {
    let mut freq: BTreeMap<(String, EntityType), usize> = BTreeMap::new();
    for p in posts {
        if let Some(a) = &p.annotations {
            for e in &a.entities {
                *freq.entry(e.key()).or_default() += 1;
            }
        }
    }
    let mut entries: Vec<CloudEntry> = freq
        .into_iter()
        .map(|((surface, etype), frequency)| CloudEntry {
            surface,
            etype,
            frequency,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then_with(|| a.surface.cmp(&b.surface))
            .then_with(|| a.etype.cmp(&b.etype))
    });
    entries.truncate(n);
    entries
}

/// Entity frequencies among the posts of `topic`, split by label, top `n`
/// per label. Every mention counts; entities are grouped by canonical key.
pub fn entity_cloud(snapshot: &CorpusSnapshot, lexicon: &TopicLexicon, topic: &str, n: usize) -> Result<EntityCloud> {
    check_topic(topic, lexicon)?;
    let in_topic = |label: Label| -> Vec<&AnnotatedPost> {
        snapshot
            .posts()
            .iter()
            .filter(|p| p.label == label && p.topic_name() == topic)
            .collect()
    };
    Ok(EntityCloud {
        topic: topic.to_string(),
        misleading: cloud(&in_topic(Label::Misleading), n),
        non_misleading: cloud(&in_topic(Label::NonMisleading), n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Day,
    Week,
    Month,
}

impl Granularity {
    /// Start of the bucket containing `date`. Weeks start on Monday.
    pub fn bucket_start(self, date: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Day => date,
            Granularity::Week => date - Days::new(date.weekday().num_days_from_monday() as u64),
            Granularity::Month => date.with_day(1).expect("day 1 exists"),
        }
    }

    pub fn next(self, start: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Day => start + Days::new(1),
            Granularity::Week => start + Days::new(7),
            Granularity::Month => start + Months::new(1),
        }
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day" => Ok(Granularity::Day),
            "week" => Ok(Granularity::Week),
            "month" => Ok(Granularity::Month),
            other => Err(Error::Validation(format!("unknown granularity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    /// `YYYY-MM-DD`, UTC.
    pub start: String,
    pub misleading: usize,
    pub non_misleading: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub topic: Option<String>,
    pub granularity: Granularity,
    pub buckets: Vec<Bucket>,
}

/// Contiguous zero-filled buckets spanning the matching posts.
pub fn timeline(
    snapshot: &CorpusSnapshot,
    lexicon: &TopicLexicon,
    topic: Option<&str>,
    granularity: Granularity,
) -> Result<TimeSeries> {
    if let Some(t) = topic {
        check_topic(t, lexicon)?;
    }
    let mut counts: BTreeMap<NaiveDate, LabelCounts> = BTreeMap::new();
    for p in snapshot.posts() {
        if topic.is_some_and(|t| p.topic_name() != t) {
            continue;
        }
        let start = granularity.bucket_start(p.post.timestamp.date_naive());
        counts.entry(start).or_default().add(p.label);
    }
    let mut buckets = Vec::new();
    if let (Some(&first), Some(&last)) = (counts.keys().next(), counts.keys().next_back()) {
        let mut day = first;
        while day <= last {
            let c = counts.get(&day).copied().unwrap_or_default();
            buckets.push(Bucket {
                start: day.format("%Y-%m-%d").to_string(),
                misleading: c.misleading,
                non_misleading: c.non_misleading,
                unlabeled: c.unlabeled,
            });
            day = granularity.next(day);
        }
    }
    Ok(TimeSeries {
        topic: topic.map(str::to_string),
        granularity,
        buckets,
    })
}
