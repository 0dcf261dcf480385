//! Counter-message retrieval: filter by topic, sentiment class and shared
//! entities, rank by embedding cosine, and widen the filter in tiers when
//! the strict pool runs short.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedPost, Annotations, CorpusSnapshot, Label};
use crate::embedding::VectorStore;
use crate::entities::{EntitySpan, EntityType};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum Relaxation {
    /// Topic, sentiment class and at least one shared entity.
    #[default]
    #[serde(rename = "strict")]
    Strict,
    /// Also fall back to topic and sentiment class only.
    #[serde(rename = "entity-drop")]
    AllowEntityDrop,
    /// Also fall back to topic only.
    #[serde(rename = "sentiment-drop")]
    AllowSentimentDrop,
}

impl Relaxation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relaxation::Strict => "strict",
            Relaxation::AllowEntityDrop => "entity-drop",
            Relaxation::AllowSentimentDrop => "sentiment-drop",
        }
    }

    pub fn parse(s: &str) -> Option<Relaxation> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "strict" => Some(Relaxation::Strict),
            "entity-drop" | "allow-entity-drop" => Some(Relaxation::AllowEntityDrop),
            "sentiment-drop" | "allow-sentiment-drop" => Some(Relaxation::AllowSentimentDrop),
            _ => None,
        }
    }

    fn tiers(self) -> &'static [Tier] {
        match self {
            Relaxation::Strict => &[Tier::Strict],
            Relaxation::AllowEntityDrop => &[Tier::Strict, Tier::TopicSentiment],
            Relaxation::AllowSentimentDrop => &[Tier::Strict, Tier::TopicSentiment, Tier::TopicOnly],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tier {
    Strict,
    TopicSentiment,
    TopicOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationQuery {
    pub post_id: String,
    pub target_label: Label,
    pub k: usize,
    pub relaxation: Relaxation,
}

impl RecommendationQuery {
    /// Rebuttal query with the default k and strict matching.
    pub fn rebuttal(post_id: impl Into<String>) -> Self {
        RecommendationQuery {
            post_id: post_id.into(),
            target_label: Label::NonMisleading,
            k: DEFAULT_K,
            relaxation: Relaxation::Strict,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_relaxation(mut self, relaxation: Relaxation) -> Self {
        self.relaxation = relaxation;
        self
    }

    pub fn with_target(mut self, target: Label) -> Self {
        self.target_label = target;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityPair {
    pub surface: String,
    #[serde(rename = "type")]
    pub etype: EntityType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedCriteria {
    pub topic: bool,
    pub entities: Vec<EntityPair>,
    pub sentiment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub post_id: String,
    pub similarity: f64,
    pub matched_criteria: MatchedCriteria,
    pub relaxed: bool,
}

/// Entity identities of a post: canonical surface without `#` or spaces,
/// plus type.
pub fn entity_pairs(entities: &[EntitySpan]) -> BTreeSet<EntityPair> {
    entities
        .iter()
        .map(|e| {
            let (surface, etype) = e.key();
            EntityPair { surface, etype }
        })
        .collect()
}

fn criteria(src: &Annotations, src_pairs: &BTreeSet<EntityPair>, other: &Annotations) -> MatchedCriteria {
    let other_pairs = entity_pairs(&other.entities);
    MatchedCriteria {
        topic: src.topic.name == other.topic.name,
        entities: src_pairs.intersection(&other_pairs).cloned().collect(),
        sentiment: src.sentiment == other.sentiment,
    }
}

fn satisfies(m: &MatchedCriteria, tier: Tier) -> bool {
    match tier {
        Tier::Strict => m.topic && m.sentiment && !m.entities.is_empty(),
        Tier::TopicSentiment => m.topic && m.sentiment,
        Tier::TopicOnly => m.topic,
    }
}

fn annotated_source<'a>(snapshot: &'a CorpusSnapshot, post_id: &str) -> Result<(&'a AnnotatedPost, &'a Annotations)> {
    let src = snapshot
        .get(post_id)
        .ok_or_else(|| Error::NotFound(format!("post {post_id}")))?;
    let ann = src
        .annotations
        .as_ref()
        .ok_or_else(|| Error::UnannotatedSource(post_id.to_string()))?;
    Ok((src, ann))
}

/// Ids of posts with the target label that match the source on topic,
/// sentiment class and at least one entity. The source is excluded.
pub fn filter_candidates(src: &AnnotatedPost, snapshot: &CorpusSnapshot, target: Label) -> Result<BTreeSet<String>> {
    let ann = src
        .annotations
        .as_ref()
        .ok_or_else(|| Error::UnannotatedSource(src.id().to_string()))?;
    let pairs = entity_pairs(&ann.entities);
    Ok(tier_members(src, ann, &pairs, snapshot, target, Tier::Strict)
        .into_iter()
        .map(|(id, _)| id.to_string())
        .collect())
}

fn tier_members<'a>(
    src: &AnnotatedPost,
    ann: &Annotations,
    pairs: &BTreeSet<EntityPair>,
    snapshot: &'a CorpusSnapshot,
    target: Label,
    tier: Tier,
) -> Vec<(&'a str, MatchedCriteria)> {
    snapshot
        .posts()
        .iter()
        .filter(|p| p.id() != src.id() && p.label == target)
        .filter_map(|p| {
            let other = p.annotations.as_ref()?;
            let m = criteria(ann, pairs, other);
            satisfies(&m, tier).then_some((p.id(), m))
        })
        .collect()
}

/// Ranked recommendations, at most `k`. Stricter tiers always come first.
pub fn recommend<F: Real>(
    q: &RecommendationQuery,
    snapshot: &CorpusSnapshot,
    vectors: &VectorStore<F>,
) -> Result<Vec<Recommendation>> {
    if q.k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if q.target_label == Label::Unlabeled {
        return Err(Error::Validation("target label must be misleading or non-misleading".into()));
    }
    let (src, ann) = annotated_source(snapshot, &q.post_id)?;
    if q.target_label == Label::NonMisleading && src.label != Label::Misleading {
        return Err(Error::Contract(format!(
            "rebuttals are only found for misleading posts; {} is {}",
            q.post_id, src.label
        )));
    }
    let Some(query) = vectors.get(&q.post_id) else {
        return Ok(Vec::new());
    };
    let pairs = entity_pairs(&ann.entities);

    let mut out: Vec<Recommendation> = Vec::new();
    let mut claimed: BTreeSet<&str> = BTreeSet::new();
    for (level, &tier) in q.relaxation.tiers().iter().enumerate() {
        if out.len() >= q.k {
            break;
        }
        let members: Vec<(&str, MatchedCriteria)> = tier_members(src, ann, &pairs, snapshot, q.target_label, tier)
            .into_iter()
            .filter(|(id, _)| !claimed.contains(id))
            .collect();
        let ranked = vectors.top_k(query, members.iter().map(|(id, _)| *id), q.k - out.len());
        for neighbor in ranked {
            let matched = members
                .iter()
                .find(|(id, _)| *id == neighbor.id)
                .map(|(_, m)| m.clone())
                .expect("ranked ids come from the member list");
            out.push(Recommendation {
                post_id: neighbor.id,
                similarity: neighbor.similarity,
                matched_criteria: matched,
                relaxed: level > 0,
            });
        }
        claimed.extend(members.iter().map(|(id, _)| *id));
    }
    Ok(out)
}

/// Posts with the Misleading label that resemble the source.
pub fn similar_misleading<F: Real>(
    post_id: &str,
    k: usize,
    relaxation: Relaxation,
    snapshot: &CorpusSnapshot,
    vectors: &VectorStore<F>,
) -> Result<Vec<Recommendation>> {
    let q = RecommendationQuery::rebuttal(post_id)
        .with_target(Label::Misleading)
        .with_k(k)
        .with_relaxation(relaxation);
    recommend(&q, snapshot, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ModelVersions, RawPost};
    use crate::embedding::PostVector;
    use crate::entities::MatchMethod;
    use crate::sentiment::{SentimentClass, SentimentScore};
    use crate::topics::TopicLabel;
    use chrono::{TimeZone, Utc};

    fn post(id: &str, label: Label, topic: &str, sentiment: SentimentClass, entities: &[&str]) -> AnnotatedPost {
        let mut p = AnnotatedPost::new(
            RawPost {
                id: id.into(),
                text: id.into(),
                timestamp: Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap(),
                source: String::new(),
            },
            label,
        );
        p.annotations = Some(Annotations {
            topic: TopicLabel {
                name: topic.into(),
                matched_terms: vec![],
                rescue: false,
            },
            entities: entities
                .iter()
                .enumerate()
                .map(|(i, s)| EntitySpan {
                    surface: s.to_string(),
                    canonical: s.to_string(),
                    start: i,
                    end: i + 1,
                    etype: EntityType::VacType,
                    method: MatchMethod::Exact,
                    score: 1.0,
                })
                .collect(),
            sentiment,
            sentiment_score: SentimentScore {
                compound: 0.0,
                pos: 0.0,
                neu: 1.0,
                neg: 0.0,
                class: sentiment,
            },
            vector_id: None,
            versions: ModelVersions::default(),
            human_fields: vec![],
        });
        p
    }

    fn vec2(id: &str, x: f64, y: f64) -> PostVector<f64> {
        PostVector {
            post_id: id.into(),
            vector: vec![x, y],
            coverage: 1.0,
        }
    }

    /// Source S; A strict; B, C share topic+sentiment; D shares topic only;
    /// E is off-topic.
    fn six() -> (CorpusSnapshot, VectorStore<f64>) {
        use Label::*;
        use SentimentClass::*;
        let posts = vec![
            post("S", Misleading, "Shots", Negative, &["pfizer"]),
            post("A", NonMisleading, "Shots", Negative, &["pfizer"]),
            post("B", NonMisleading, "Shots", Negative, &["moderna"]),
            post("C", NonMisleading, "Shots", Negative, &[]),
            post("D", NonMisleading, "Shots", Positive, &["pfizer"]),
            post("E", NonMisleading, "Trials", Negative, &["pfizer"]),
        ];
        let vectors = vec![
            vec2("S", 1.0, 0.0),
            vec2("A", 0.0, 1.0),
            vec2("B", 1.0, 0.1),
            vec2("C", 1.0, 0.5),
            vec2("D", 1.0, 0.0),
            vec2("E", 1.0, 0.0),
        ];
        (CorpusSnapshot::from_posts(posts), VectorStore::new(2, vectors).unwrap())
    }

    fn ids(recs: &[Recommendation]) -> Vec<&str> {
        recs.iter().map(|r| r.post_id.as_str()).collect()
    }

    #[test]
    fn tiers_never_interleave() {
        let (snap, vs) = six();
        let q = RecommendationQuery::rebuttal("S");
        assert_eq!(ids(&recommend(&q, &snap, &vs).unwrap()), ["A"]);
        let q = q.with_relaxation(Relaxation::AllowEntityDrop);
        let recs = recommend(&q, &snap, &vs).unwrap();
        assert_eq!(ids(&recs), ["A", "B", "C"]);
        assert_eq!(recs.iter().map(|r| r.relaxed).collect::<Vec<_>>(), [false, true, true]);
        let q = q.with_relaxation(Relaxation::AllowSentimentDrop).with_k(5);
        assert_eq!(ids(&recommend(&q, &snap, &vs).unwrap()), ["A", "B", "C", "D"]);
    }

    #[test]
    fn k_prefixes() {
        let (snap, vs) = six();
        let full = recommend(
            &RecommendationQuery::rebuttal("S").with_relaxation(Relaxation::AllowSentimentDrop).with_k(5),
            &snap,
            &vs,
        )
        .unwrap();
        for k in 1..=5 {
            let q = RecommendationQuery::rebuttal("S").with_relaxation(Relaxation::AllowSentimentDrop).with_k(k);
            let got = recommend(&q, &snap, &vs).unwrap();
            assert_eq!(got[..], full[..k.min(full.len())]);
        }
    }

    #[test]
    fn errors() {
        let (snap, vs) = six();
        assert!(matches!(recommend(&RecommendationQuery::rebuttal("nope"), &snap, &vs), Err(Error::NotFound(_))));
        assert!(matches!(recommend(&RecommendationQuery::rebuttal("A"), &snap, &vs), Err(Error::Contract(_))));
        assert!(recommend(&RecommendationQuery::rebuttal("S").with_k(0), &snap, &vs).is_err());

        let mut bare = AnnotatedPost::new(snap.get("S").unwrap().post.clone(), Label::Misleading);
        bare.annotations = None;
        let lone = CorpusSnapshot::from_posts(vec![bare]);
        assert!(matches!(
            recommend(&RecommendationQuery::rebuttal("S"), &lone, &vs),
            Err(Error::UnannotatedSource(_))
        ));
    }

    #[test]
    fn self_excluded_and_identical_included() {
        let (snap, _) = six();
        let only = CorpusSnapshot::from_posts(vec![snap.get("S").unwrap().clone()]);
        assert!(filter_candidates(only.get("S").unwrap(), &only, Label::Misleading).unwrap().is_empty());
        let mut twin = snap.get("S").unwrap().clone();
        twin.post.id = "T".into();
        let pair = CorpusSnapshot::from_posts(vec![snap.get("S").unwrap().clone(), twin]);
        let c = filter_candidates(pair.get("S").unwrap(), &pair, Label::Misleading).unwrap();
        assert_eq!(c.into_iter().collect::<Vec<_>>(), ["T"]);
    }

    #[test]
    fn duplicate_ranks_first_for_echo_queries() {
        let (snap, _) = six();
        let mut twin = snap.get("S").unwrap().clone();
        twin.post.id = "S2".into();
        let mut far = twin.clone();
        far.post.id = "S3".into();
        let snap = CorpusSnapshot::from_posts(vec![snap.get("S").unwrap().clone(), twin, far]);
        let vs = VectorStore::new(2, vec![vec2("S", 1.0, 0.0), vec2("S2", 2.0, 0.0), vec2("S3", 1.0, 1.0)]).unwrap();
        let recs = similar_misleading("S", 1, Relaxation::Strict, &snap, &vs).unwrap();
        assert_eq!(ids(&recs), ["S2"]);
        assert_eq!(recs[0].similarity, 1.0);
        assert_eq!(recs[0].matched_criteria.entities[0].surface, "pfizer");
    }
}
