//! HTTP/JSON API over pipeline snapshots.
//!
//! Every handler loads the current snapshot exactly once, so a response is
//! answered from a single version even while a retrain swaps in a new one.
//! Successful responses are wrapped as `{snapshot_version, data}`; errors are
//! `{code, message, detail}`.

mod error;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use concierge_core::analytics::{self, Granularity, DEFAULT_CLOUD_SIZE};
use concierge_core::config::Config;
use concierge_core::corpus::{AnnotatedPost, Label};
use concierge_core::feedback::{FeedbackField, FeedbackLog, FeedbackRecord};
use concierge_core::pipeline::{Models, PipelineSnapshot};
use concierge_core::recommender::{RecommendationQuery, Relaxation};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use error::ApiError;

pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, Clone)]
pub struct Paths {
    pub store: PathBuf,
    pub models: PathBuf,
}

/// Query defaults for recommendation requests.
#[derive(Debug, Clone, Copy)]
pub struct Defaults {
    pub k: usize,
    pub relaxation: Relaxation,
}

pub struct AppState {
    snapshot: ArcSwap<PipelineSnapshot>,
    feedback: Mutex<FeedbackLog>,
    retrain: tokio::sync::Mutex<()>,
    paths: Paths,
    defaults: Defaults,
}

impl AppState {
    pub fn new(snapshot: PipelineSnapshot, feedback: FeedbackLog, paths: Paths, defaults: Defaults) -> Self {
        AppState {
            snapshot: ArcSwap::from_pointee(snapshot),
            feedback: Mutex::new(feedback),
            retrain: tokio::sync::Mutex::new(()),
            paths,
            defaults,
        }
    }

    /// Restore the persisted snapshot and replay the feedback log named in
    /// `cfg`. Fails if no snapshot has been built yet.
    pub fn open(cfg: &Config, models: &Models) -> concierge_core::Result<Self> {
        let snapshot = PipelineSnapshot::restore(&cfg.data.store, &cfg.data.models, models)?;
        let feedback = FeedbackLog::open(&cfg.data.feedback)?;
        if feedback.skipped() > 0 {
            log::warn!("{} unreadable feedback lines skipped", feedback.skipped());
        }
        Ok(Self::new(
            snapshot,
            feedback,
            Paths {
                store: cfg.data.store.clone(),
                models: cfg.data.models.clone(),
            },
            Defaults {
                k: cfg.service.default_k,
                relaxation: cfg.service.relaxation,
            },
        ))
    }

    pub fn snapshot(&self) -> Arc<PipelineSnapshot> {
        self.snapshot.load_full()
    }

    pub fn defaults(&self) -> Defaults {
        self.defaults
    }

    pub fn feedback_records(&self) -> Vec<FeedbackRecord> {
        self.feedback.lock().expect("feedback log poisoned").records().to_vec()
    }

    /// Build a new snapshot from the current one plus every logged feedback
    /// record, persist it, then swap it in. On any failure the current
    /// snapshot stays live. Concurrent calls are serialized.
    pub async fn retrain(self: &Arc<Self>) -> Result<Arc<PipelineSnapshot>, ApiError> {
        let _guard = self.retrain.lock().await;
        let current = self.snapshot();
        let records = self.feedback_records();
        let paths = self.paths.clone();
        let next = tokio::task::spawn_blocking(move || {
            let next = current.retrain(&records)?;
            next.persist(&paths.store, &paths.models)?;
            Ok::<_, concierge_core::Error>(next)
        })
        .await
        .map_err(|e| ApiError::from(concierge_core::Error::Internal(format!("retrain task failed: {e}"))))??;
        let next = Arc::new(next);
        self.snapshot.store(next.clone());
        log::info!("snapshot {} live ({} feedback records applied)", next.version, next.feedback_applied);
        Ok(next)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub snapshot_version: u64,
    pub data: T,
}

fn reply<T: Serialize>(snapshot: &PipelineSnapshot, data: T) -> Response {
    Json(Envelope {
        snapshot_version: snapshot.version,
        data,
    })
    .into_response()
}

type Shared = State<Arc<AppState>>;
type Params = Query<HashMap<String, String>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/stats/topics", get(stats_topics))
        .route("/stats/entities", get(stats_entities))
        .route("/stats/timeline", get(stats_timeline))
        .route("/posts", get(list_posts))
        .route("/posts/{id}", get(get_post))
        .route("/posts/{id}/recommendations", get(recommendations))
        .route("/feedback", post(submit_feedback))
        .route("/analyze", post(analyze))
        .route("/admin/retrain", post(retrain))
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed on this route")
        })
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn param<T>(params: &HashMap<String, String>, name: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>, ApiError> {
    match params.get(name).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(raw) => parse(raw)
            .map(Some)
            .ok_or_else(|| ApiError::invalid_parameter(name, format!("invalid value {raw:?} for {name}"))),
    }
}

fn positive(s: &str) -> Option<usize> {
    s.parse().ok().filter(|&n| n > 0)
}

fn target_label(s: &str) -> Option<Label> {
    Label::parse(s).filter(|l| *l != Label::Unlabeled)
}

/// Recommendation query from optional `k`, `target` and `relaxation`
/// strings, filling gaps from `defaults`. Shared with the CLI so both
/// front ends interpret arguments identically.
pub fn recommendation_query(
    post_id: &str,
    k: Option<&str>,
    target: Option<&str>,
    relaxation: Option<&str>,
    defaults: Defaults,
) -> Result<RecommendationQuery, ApiError> {
    let mut params = HashMap::new();
    for (name, v) in [("k", k), ("target", target), ("relaxation", relaxation)] {
        if let Some(v) = v {
            params.insert(name.to_string(), v.to_string());
        }
    }
    query_from_params(post_id, &params, defaults)
}

fn query_from_params(post_id: &str, params: &HashMap<String, String>, defaults: Defaults) -> Result<RecommendationQuery, ApiError> {
    let k = param(params, "k", positive)?.unwrap_or(defaults.k);
    let target = param(params, "target", target_label)?.unwrap_or(Label::NonMisleading);
    let relaxation = param(params, "relaxation", Relaxation::parse)?.unwrap_or(defaults.relaxation);
    Ok(RecommendationQuery::rebuttal(post_id)
        .with_k(k)
        .with_target(target)
        .with_relaxation(relaxation))
}

async fn health(State(state): Shared) -> Response {
    let snap = state.snapshot();
    Json(serde_json::json!({ "status": "ok", "snapshot_version": snap.version })).into_response()
}

async fn stats_topics(State(state): Shared) -> Response {
    let snap = state.snapshot();
    reply(&snap, analytics::topic_distribution(&snap.corpus))
}

async fn stats_entities(State(state): Shared, Query(params): Params) -> Result<Response, ApiError> {
    let snap = state.snapshot();
    let topic = params
        .get("topic")
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ApiError::invalid_parameter("topic", "topic is required"))?;
    let n = param(&params, "n", positive)?.unwrap_or(DEFAULT_CLOUD_SIZE);
    let cloud = analytics::entity_cloud(&snap.corpus, &snap.models.lexicon, topic, n)?;
    Ok(reply(&snap, cloud))
}

async fn stats_timeline(State(state): Shared, Query(params): Params) -> Result<Response, ApiError> {
    let snap = state.snapshot();
    let topic = params.get("topic").map(String::as_str).filter(|t| !t.is_empty());
    let granularity = param(&params, "granularity", |s| s.parse::<Granularity>().ok())?.unwrap_or(Granularity::Day);
    let series = analytics::timeline(&snap.corpus, &snap.models.lexicon, topic, granularity)?;
    Ok(reply(&snap, series))
}

#[derive(Debug, Serialize)]
struct Page<'a> {
    page: usize,
    page_size: usize,
    total: usize,
    items: Vec<&'a AnnotatedPost>,
}

async fn list_posts(State(state): Shared, Query(params): Params) -> Result<Response, ApiError> {
    let snap = state.snapshot();
    let topic = params.get("topic").map(String::as_str).filter(|t| !t.is_empty());
    let label = param(&params, "label", Label::parse)?;
    let page = param(&params, "page", positive)?.unwrap_or(1);
    let page_size = param(&params, "page_size", |s| positive(s).filter(|&n| n <= MAX_PAGE_SIZE))?
        .unwrap_or(DEFAULT_PAGE_SIZE);
    let matching: Vec<&AnnotatedPost> = snap
        .corpus
        .posts()
        .iter()
        .filter(|p| topic.is_none_or(|t| p.topic_name() == t))
        .filter(|p| label.is_none_or(|l| p.label == l))
        .collect();
    let total = matching.len();
    let items = matching
        .into_iter()
        .skip((page - 1).saturating_mul(page_size))
        .take(page_size)
        .collect();
    Ok(reply(
        &snap,
        Page {
            page,
            page_size,
            total,
            items,
        },
    ))
}

async fn get_post(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snap = state.snapshot();
    let post = snap
        .corpus
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown post {id}")))?;
    Ok(reply(&snap, post))
}

async fn recommendations(State(state): Shared, Path(id): Path<String>, Query(params): Params) -> Result<Response, ApiError> {
    let snap = state.snapshot();
    let q = query_from_params(&id, &params, state.defaults)?;
    let recs = snap.recommend(&q)?;
    Ok(reply(&snap, recs))
}

/// Current value of `field` on `post`, used when a client omits `prior`.
fn current_value(post: &AnnotatedPost, field: FeedbackField) -> Value {
    match field {
        FeedbackField::Label => Value::String(post.label.as_str().into()),
        FeedbackField::Topic => Value::String(post.topic_name().into()),
        FeedbackField::Sentiment => post
            .annotations
            .as_ref()
            .map_or(Value::Null, |a| Value::String(a.sentiment.as_str().into())),
        FeedbackField::Entity => Value::Null,
    }
}

async fn submit_feedback(
    State(state): Shared,
    body: Result<Json<FeedbackRecord>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(mut record) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.body_text()))?;
    let snap = state.snapshot();
    let post = snap
        .corpus
        .get(&record.post_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown post {}", record.post_id)))?;
    if record.prior.is_null() {
        record.prior = current_value(post, record.field);
    }
    record.validate(&snap.models.lexicon).map_err(|e| {
        ApiError::from(e).with_detail(serde_json::json!({ "field": record.field }))
    })?;
    let stored = {
        let mut log = state.feedback.lock().expect("feedback log poisoned");
        log.append(record)?
    };
    let mut resp = reply(&snap, stored);
    *resp.status_mut() = StatusCode::CREATED;
    Ok(resp)
}

#[derive(Debug, Deserialize)]
struct AnalyzeRequest {
    text: String,
}

async fn analyze(State(state): Shared, body: Result<Json<AnalyzeRequest>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.body_text()))?;
    let snap = state.snapshot();
    Ok(reply(&snap, snap.analyze(&req.text)))
}

async fn retrain(State(state): Shared) -> Result<Response, ApiError> {
    let next = state.retrain().await?;
    Ok(reply(&next, next.manifest()))
}
