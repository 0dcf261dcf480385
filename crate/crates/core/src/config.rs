//! TOML configuration. Every key is optional; omitted data paths fall back
//! to the bundled resources.
//!
//! ```toml
//! seed = 20201201
//!
//! [data]
//! store = "data/store.jsonl"
//! feedback = "data/feedback.jsonl"
//! models = "data/models"
//!
//! [topics]
//! lexicon = "topics.json"
//!
//! [entities]
//! gazetteers = ["gazetteer_general.json", "vaccines.json"]
//! max_edit = 1
//!
//! [embeddings]
//! path = "glove.6B.50d.txt"
//! dim = 50
//!
//! [classifier]
//! l2 = 0.01
//!
//! [self_training]
//! confidence_threshold = 0.9
//! batch_cap = 0.1
//!
//! [service]
//! port = 8080
//! default_k = 3
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{SelfTrainConfig, TrainConfig};
use crate::entities::{FuzzyConfig, RecognizerConfig};
use crate::error::{Error, Result};
use crate::lda::LdaParams;
use crate::recommender::{Relaxation, DEFAULT_K};
use crate::sentiment::SentimentConfig;

pub const CONFIG_ENV: &str = "CONCIERGE_CONFIG";
pub const DEFAULT_CONFIG_FILE: &str = "concierge.toml";
pub const DEFAULT_SEED: u64 = 20201201;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub store: PathBuf,
    pub feedback: PathBuf,
    /// Directory for persisted models and the snapshot manifest.
    pub models: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            store: PathBuf::from("data/store.jsonl"),
            feedback: PathBuf::from("data/feedback.jsonl"),
            models: PathBuf::from("data/models"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsConfig {
    pub lexicon: Option<PathBuf>,
    pub lda_topics: usize,
    pub lda_iterations: usize,
}

impl Default for TopicsConfig {
    fn default() -> Self {
        let lda = LdaParams::default();
        TopicsConfig {
            lexicon: None,
            lda_topics: lda.num_topics,
            lda_iterations: lda.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntitiesConfig {
    /// Seed files merged in order; empty means the bundled gazetteer.
    pub gazetteers: Vec<PathBuf>,
    pub max_edit: usize,
    pub min_len: usize,
    pub affix_min_len: usize,
}

impl Default for EntitiesConfig {
    fn default() -> Self {
        let f = FuzzyConfig::default();
        EntitiesConfig {
            gazetteers: Vec::new(),
            max_edit: f.max_edit,
            min_len: f.min_len,
            affix_min_len: f.affix_min_len,
        }
    }
}

impl EntitiesConfig {
    pub fn recognizer(&self) -> RecognizerConfig {
        RecognizerConfig {
            fuzzy: FuzzyConfig {
                max_edit: self.max_edit,
                min_len: self.min_len,
                affix_min_len: self.affix_min_len,
            },
            ..RecognizerConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentimentSection {
    pub lexicon: Option<PathBuf>,
    pub boosters: Option<PathBuf>,
    pub negations: Option<PathBuf>,
    #[serde(flatten)]
    pub rules: SentimentConfig,
}

impl Default for SentimentSection {
    fn default() -> Self {
        SentimentSection {
            lexicon: None,
            boosters: None,
            negations: None,
            rules: SentimentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingsConfig {
    pub path: Option<PathBuf>,
    pub dim: usize,
}

impl Default for EmbeddingsConfig {
    fn default() -> Self {
        EmbeddingsConfig { path: None, dim: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub default_k: usize,
    pub relaxation: Relaxation,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            default_k: DEFAULT_K,
            relaxation: Relaxation::AllowSentimentDrop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub data: DataConfig,
    pub topics: TopicsConfig,
    pub entities: EntitiesConfig,
    pub sentiment: SentimentSection,
    pub embeddings: EmbeddingsConfig,
    pub classifier: TrainConfig,
    pub self_training: SelfTrainConfig,
    pub service: ServiceConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: DEFAULT_SEED,
            data: DataConfig::default(),
            topics: TopicsConfig::default(),
            entities: EntitiesConfig::default(),
            sentiment: SentimentSection::default(),
            embeddings: EmbeddingsConfig::default(),
            classifier: TrainConfig::default(),
            self_training: SelfTrainConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config file and resolve its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.data.store);
        rebase(base, &mut self.data.feedback);
        rebase(base, &mut self.data.models);
        for p in self
            .topics
            .lexicon
            .iter_mut()
            .chain(self.sentiment.lexicon.iter_mut())
            .chain(self.sentiment.boosters.iter_mut())
            .chain(self.sentiment.negations.iter_mut())
            .chain(self.embeddings.path.iter_mut())
            .chain(self.entities.gazetteers.iter_mut())
        {
            rebase(base, p);
        }
    }

    /// Explicit path, else `$CONCIERGE_CONFIG`, else `concierge.toml` in the
    /// working directory if present, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        if let Some(p) = explicit {
            return Self::load(p);
        }
        if let Some(p) = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()) {
            return Self::load(Path::new(&p));
        }
        let default = Path::new(DEFAULT_CONFIG_FILE);
        if default.exists() {
            return Self::load(default);
        }
        Ok(Config::default())
    }

    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        self.self_training.validate()?;
        if self.service.default_k == 0 {
            return Err(Error::Config("service.default_k must be at least 1".into()));
        }
        if self.embeddings.dim == 0 {
            return Err(Error::Config("embeddings.dim must be positive".into()));
        }
        if self.topics.lda_topics == 0 || self.topics.lda_iterations == 0 {
            return Err(Error::Config("topics.lda_topics and topics.lda_iterations must be positive".into()));
        }
        let s = &self.sentiment.rules;
        if !(s.negative_threshold < s.positive_threshold) {
            return Err(Error::Config("sentiment thresholds must satisfy negative < positive".into()));
        }
        Ok(())
    }

    pub fn lda_params(&self) -> LdaParams {
        LdaParams {
            iterations: self.topics.lda_iterations,
            seed: self.seed,
            ..LdaParams::with_topics(self.topics.lda_topics)
        }
    }
}
