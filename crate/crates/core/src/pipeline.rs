//! End-to-end annotation: labels, topics, entities, sentiment and vectors
//! for every post, bundled into an immutable [`PipelineSnapshot`].
//!
//! Human labels (from ingest or feedback) seed the classifier and are never
//! overwritten by it. Feedback on topics and sentiment replaces the model
//! output for that post; entity feedback extends the gazetteer.

use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    train_text_classifier, PseudoLabel, SelfTrainConfig, TextDocument, TrainConfig,
};
use crate::config::Config;
use crate::corpus::{AnnotatedPost, Annotations, CorpusSnapshot, CorpusStore, Label, LabelOrigin, ModelVersions};
use crate::entities::{recognize, EntitySpan, Gazetteer, RecognizerConfig};
use crate::error::{Error, Result};
use crate::feedback::{self, FeedbackOverrides, FeedbackRecord};
use crate::recommender::{self, Recommendation, RecommendationQuery};
use crate::sentiment::{SentimentAnalyzer, SentimentClass, SentimentLexicon, SentimentScore};
use crate::textprep::{tokenize, PrepOptions, TokenizedText};
use crate::topics::{label_topic, TopicLabel, TopicLexicon};
use crate::{ClassifierModel, EmbeddingTable, PostVector, VectorStore};

pub const LEXICON_VERSION: u64 = 1;
pub const EMBEDDINGS_VERSION: u64 = 1;

const MANIFEST_FILE: &str = "manifest.json";
const CLASSIFIER_FILE: &str = "classifier.json";
const GAZETTEER_FILE: &str = "gazetteer.json";

/// Static resources and hyperparameters shared by every build.
#[derive(Debug, Clone)]
pub struct Models {
    pub prep: PrepOptions,
    pub lexicon: Arc<TopicLexicon>,
    pub gazetteer: Arc<Gazetteer>,
    pub recognizer: RecognizerConfig,
    pub sentiment: Arc<SentimentAnalyzer>,
    pub embeddings: Arc<EmbeddingTable>,
    pub train: TrainConfig,
    pub self_train: SelfTrainConfig,
}

impl Models {
    pub fn builtin() -> Self {
        Models {
            prep: PrepOptions::default(),
            lexicon: Arc::new(TopicLexicon::builtin()),
            gazetteer: Arc::new(Gazetteer::builtin()),
            recognizer: RecognizerConfig::default(),
            sentiment: Arc::new(SentimentAnalyzer::default()),
            embeddings: Arc::new(EmbeddingTable::builtin()),
            train: TrainConfig::default(),
            self_train: SelfTrainConfig::default(),
        }
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let lexicon = match &cfg.topics.lexicon {
            Some(p) => TopicLexicon::load(p)?,
            None => TopicLexicon::builtin(),
        };
        let gazetteer = if cfg.entities.gazetteers.is_empty() {
            Gazetteer::builtin()
        } else {
            let paths: Vec<&Path> = cfg.entities.gazetteers.iter().map(|p| p.as_path()).collect();
            Gazetteer::load(&paths)?
        };
        let sentiment_lexicon = match &cfg.sentiment.lexicon {
            Some(p) => SentimentLexicon::load(p, cfg.sentiment.boosters.as_deref(), cfg.sentiment.negations.as_deref())?,
            None => SentimentLexicon::builtin(),
        };
        let embeddings = match &cfg.embeddings.path {
            Some(p) => EmbeddingTable::load(p, Some(cfg.embeddings.dim))?,
            None => EmbeddingTable::builtin(),
        };
        Ok(Models {
            prep: PrepOptions::default(),
            lexicon: Arc::new(lexicon),
            gazetteer: Arc::new(gazetteer),
            recognizer: cfg.entities.recognizer(),
            sentiment: Arc::new(SentimentAnalyzer::new(sentiment_lexicon, cfg.sentiment.rules)),
            embeddings: Arc::new(embeddings),
            train: cfg.classifier,
            self_train: cfg.self_training,
        })
    }
}

/// Version bookkeeping persisted next to the models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub version: u64,
    #[serde(with = "crate::corpus::timestamp_format")]
    pub built_at: DateTime<Utc>,
    pub models: ModelVersions,
    pub posts: usize,
    pub feedback_applied: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineSnapshot {
    pub version: u64,
    pub built_at: DateTime<Utc>,
    pub corpus: CorpusSnapshot,
    pub classifier: Option<Arc<ClassifierModel>>,
    pub gazetteer: Arc<Gazetteer>,
    pub models: Models,
    pub vectors: Arc<VectorStore>,
    pub versions: ModelVersions,
    pub pseudo_labels: Vec<PseudoLabel>,
    pub feedback_applied: usize,
}

/// Everything the per-post stages need, computed once per build.
struct Stage<'a> {
    models: &'a Models,
    gazetteer: &'a Gazetteer,
}

impl Stage<'_> {
    fn topic(&self, t: &TokenizedText) -> TopicLabel {
        label_topic(t, &self.models.lexicon)
    }

    fn entities(&self, t: &TokenizedText) -> Vec<EntitySpan> {
        recognize(t, self.gazetteer, &self.models.recognizer)
    }

    fn sentiment(&self, t: &TokenizedText) -> SentimentScore {
        self.models.sentiment.score(t)
    }

    fn vector(&self, id: &str, t: &TokenizedText) -> PostVector {
        self.models.embeddings.embed(id, t)
    }
}

impl PipelineSnapshot {
    /// Annotate `corpus` from scratch. `previous` supplies the version
    /// counters to continue from.
    pub fn build(
        corpus: &CorpusSnapshot,
        models: &Models,
        overrides: &FeedbackOverrides,
        previous: Option<&SnapshotManifest>,
    ) -> Result<Self> {
        let posts: Vec<AnnotatedPost> = corpus.sorted_by_id().into_iter().cloned().collect();
        let tokens: Vec<TokenizedText> = posts
            .par_iter()
            .map(|p| tokenize(&p.post.text, &models.prep))
            .collect();

        // human labels, then feedback on top
        let mut labels: Vec<(Label, f64, LabelOrigin)> = posts
            .iter()
            .map(|p| match (p.label, p.label_origin.is_human()) {
                (Label::Misleading | Label::NonMisleading, true) => (p.label, 1.0, p.label_origin),
                _ => (Label::Unlabeled, 0.0, LabelOrigin::None),
            })
            .collect();
        for (p, slot) in posts.iter().zip(labels.iter_mut()) {
            if let Some(&l) = overrides.labels.get(p.id()) {
                *slot = (l, 1.0, LabelOrigin::Feedback);
            }
        }

        let prev_classifier = previous.map_or(0, |m| m.models.classifier);
        let (classifier, pseudo_labels) = train_classifier(&posts, &tokens, &labels, models, prev_classifier + 1)?;
        if let Some(model) = &classifier {
            let predictions: Vec<_> = tokens.par_iter().map(|t| model.predict(&t.tokens)).collect();
            for (slot, p) in labels.iter_mut().zip(predictions) {
                if slot.2 == LabelOrigin::None {
                    *slot = (p.label, p.confidence, LabelOrigin::Model);
                }
            }
        }

        let gazetteer = if overrides.entities.is_empty() {
            models.gazetteer.clone()
        } else {
            Arc::new(models.gazetteer.augment(&overrides.entity_additions())?)
        };
        let versions = ModelVersions {
            classifier: classifier.as_ref().map_or(0, |c| c.version),
            lexicon: LEXICON_VERSION,
            gazetteer: gazetteer.version(),
            sentiment: models.sentiment.version(),
            embeddings: EMBEDDINGS_VERSION,
        };
        let stage = Stage {
            models,
            gazetteer: &gazetteer,
        };

        let annotated: Vec<(AnnotatedPost, PostVector)> = posts
            .into_par_iter()
            .zip(tokens.par_iter())
            .zip(labels.par_iter())
            .enumerate()
            .map(|(i, ((mut post, t), &(label, confidence, origin)))| {
                let mut human_fields = Vec::new();
                let mut topic = stage.topic(t);
                if let Some(name) = overrides.topics.get(post.id()) {
                    topic = TopicLabel {
                        name: name.clone(),
                        matched_terms: Vec::new(),
                        rescue: false,
                    };
                    human_fields.push("topic".to_string());
                }
                let score = stage.sentiment(t);
                let mut sentiment = score.class;
                if let Some(&class) = overrides.sentiments.get(post.id()) {
                    sentiment = class;
                    human_fields.push("sentiment".to_string());
                }
                if origin.is_human() {
                    human_fields.insert(0, "label".to_string());
                }
                let vector = stage.vector(post.id(), t);
                post.label = label;
                post.label_confidence = confidence;
                post.label_origin = origin;
                post.annotations = Some(Annotations {
                    topic,
                    entities: stage.entities(t),
                    sentiment,
                    sentiment_score: score,
                    vector_id: Some(i),
                    versions,
                    human_fields,
                });
                (post, vector)
            })
            .collect();

        let (posts, vectors): (Vec<AnnotatedPost>, Vec<PostVector>) = annotated.into_iter().unzip();
        let vectors = VectorStore::new(models.embeddings.dim(), vectors)?;
        Ok(PipelineSnapshot {
            version: previous.map_or(1, |m| m.version + 1),
            built_at: Utc::now(),
            corpus: CorpusSnapshot::from_posts(posts),
            classifier: classifier.map(Arc::new),
            gazetteer,
            models: models.clone(),
            vectors: Arc::new(vectors),
            versions,
            pseudo_labels,
            feedback_applied: overrides.applied,
        })
    }

    /// Rebuild from this snapshot's corpus with the given feedback. The
    /// current snapshot is untouched.
    pub fn retrain(&self, records: &[FeedbackRecord]) -> Result<Self> {
        let overrides = feedback::merge(records, &self.models.lexicon);
        Self::build(&self.corpus, &self.models, &overrides, Some(&self.manifest()))
    }

    pub fn manifest(&self) -> SnapshotManifest {
        SnapshotManifest {
            version: self.version,
            built_at: self.built_at,
            models: self.versions,
            posts: self.corpus.len(),
            feedback_applied: self.feedback_applied,
        }
    }

    /// Write models and manifest to `models_dir`, then the annotated store.
    pub fn persist(&self, store_path: &Path, models_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(models_dir).map_err(|e| Error::io(models_dir, e))?;
        let classifier_path = models_dir.join(CLASSIFIER_FILE);
        match &self.classifier {
            Some(c) => write_atomic(&classifier_path, &c.to_json()?)?,
            None if classifier_path.exists() => {
                std::fs::remove_file(&classifier_path).map_err(|e| Error::io(&classifier_path, e))?
            }
            None => {}
        }
        write_atomic(&models_dir.join(GAZETTEER_FILE), &self.gazetteer.to_json()?)?;
        let manifest = serde_json::to_string_pretty(&self.manifest()).map_err(|e| Error::json("manifest", e))?;
        write_atomic(&models_dir.join(MANIFEST_FILE), &manifest)?;
        self.corpus.export_jsonl(store_path)
    }

    /// Reload a persisted snapshot. Vectors are recomputed from the text;
    /// the classifier and gazetteer come from `models_dir`.
    pub fn restore(store_path: &Path, models_dir: &Path, models: &Models) -> Result<Self> {
        let manifest = read_manifest(models_dir)?
            .ok_or_else(|| Error::NotFound(format!("no snapshot manifest in {}; run annotate first", models_dir.display())))?;
        let corpus = CorpusStore::open(store_path)?.snapshot();
        if let Some(p) = corpus.posts().iter().find(|p| p.annotations.is_none()) {
            return Err(Error::Validation(format!(
                "post {} in {} is not annotated; run annotate first",
                p.id(),
                store_path.display()
            )));
        }
        let classifier_path = models_dir.join(CLASSIFIER_FILE);
        let classifier = if classifier_path.exists() {
            let text = std::fs::read_to_string(&classifier_path).map_err(|e| Error::io(&classifier_path, e))?;
            Some(Arc::new(ClassifierModel::from_json(&text)?))
        } else {
            None
        };
        let gazetteer_path = models_dir.join(GAZETTEER_FILE);
        let text = std::fs::read_to_string(&gazetteer_path).map_err(|e| Error::io(&gazetteer_path, e))?;
        let gazetteer = Arc::new(Gazetteer::from_json(&text)?);

        let posts = corpus.sorted_by_id();
        let vectors: Vec<PostVector> = posts
            .par_iter()
            .map(|p| models.embeddings.embed(p.id(), &tokenize(&p.post.text, &models.prep)))
            .collect();
        let vectors = VectorStore::new(models.embeddings.dim(), vectors)?;
        Ok(PipelineSnapshot {
            version: manifest.version,
            built_at: manifest.built_at,
            corpus,
            classifier,
            gazetteer,
            models: models.clone(),
            vectors: Arc::new(vectors),
            versions: manifest.models,
            pseudo_labels: Vec::new(),
            feedback_applied: manifest.feedback_applied,
        })
    }

    pub fn recommend(&self, q: &RecommendationQuery) -> Result<Vec<Recommendation>> {
        recommender::recommend(q, &self.corpus, &self.vectors)
    }

    /// Full annotation of free text. Nothing is stored.
    pub fn analyze(&self, text: &str) -> Analysis {
        let t = tokenize(text, &self.models.prep);
        let (label, label_confidence) = match &self.classifier {
            Some(c) => {
                let p = c.predict(&t.tokens);
                (p.label, p.confidence)
            }
            None => (Label::Unlabeled, 0.0),
        };
        let stage = Stage {
            models: &self.models,
            gazetteer: &self.gazetteer,
        };
        let score = stage.sentiment(&t);
        let vector = stage.vector("", &t);
        Analysis {
            label,
            label_confidence,
            topic: stage.topic(&t),
            entities: stage.entities(&t),
            sentiment: score.class,
            sentiment_score: score,
            embedding_coverage: vector.coverage,
            tokens: t.tokens,
            versions: self.versions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub tokens: Vec<String>,
    pub label: Label,
    pub label_confidence: f64,
    pub topic: TopicLabel,
    pub entities: Vec<EntitySpan>,
    pub sentiment: SentimentClass,
    pub sentiment_score: SentimentScore,
    pub embedding_coverage: f64,
    pub versions: ModelVersions,
}

fn train_classifier(
    posts: &[AnnotatedPost],
    tokens: &[TokenizedText],
    labels: &[(Label, f64, LabelOrigin)],
    models: &Models,
    version: u64,
) -> Result<(Option<ClassifierModel>, Vec<PseudoLabel>)> {
    let mut seed = Vec::new();
    let mut pool = Vec::new();
    for ((p, t), &(label, _, origin)) in posts.iter().zip(tokens).zip(labels) {
        let doc = TextDocument {
            id: p.id(),
            tokens: &t.tokens,
        };
        if origin.is_human() {
            seed.push((doc, label));
        } else {
            pool.push(doc);
        }
    }
    match train_text_classifier::<f64>(&seed, &pool, version, &models.self_train, &models.train) {
        Ok(out) => Ok((Some(out.model), out.pseudo_labels)),
        Err(Error::DegenerateTrainingSet(why)) => {
            log::warn!("classifier not trained ({why}); unlabeled posts stay unlabeled");
            Ok((None, Vec::new()))
        }
        Err(e) => Err(e),
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(models_dir: &Path) -> Result<Option<SnapshotManifest>> {
    let path = models_dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::json(path.display().to_string(), e))
}

/// Load the store and feedback log named in `cfg`, annotate, and persist.
pub fn annotate_store(cfg: &Config, models: &Models) -> Result<PipelineSnapshot> {
    let corpus = CorpusStore::open(&cfg.data.store)?.snapshot();
    let records = if cfg.data.feedback.exists() {
        feedback::replay(&cfg.data.feedback)?.0
    } else {
        Vec::new()
    };
    let overrides = feedback::merge(&records, &models.lexicon);
    let previous = read_manifest(&cfg.data.models)?;
    let snapshot = PipelineSnapshot::build(&corpus, models, &overrides, previous.as_ref())?;
    snapshot.persist(&cfg.data.store, &cfg.data.models)?;
    Ok(snapshot)
}
