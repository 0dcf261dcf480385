//! Misinformation triage: ingest posts, label them, group them by topic,
//! extract entities and sentiment, and retrieve counter-messages.
//!
//! Numeric models are generic over [`scalar::Real`]; the aliases below fix
//! the precision used by the pipeline.

pub mod analytics;
pub mod classifier;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod entities;
pub mod error;
pub mod feedback;
pub mod lda;
pub mod pipeline;
pub mod recommender;
pub mod scalar;
pub mod sentiment;
pub mod textprep;
pub mod topics;

pub use error::{Error, Result};

pub type EmbeddingTable = embedding::EmbeddingTable<f32>;
pub type PostVector = embedding::PostVector<f32>;
pub type VectorStore = embedding::VectorStore<f32>;
pub type ClassifierModel = classifier::ClassifierModel<f64>;
pub type SparseFeatureVector = classifier::SparseFeatureVector<f64>;
