//! HTTP facade over a trained encoder: sessions, profiles, tag feedback
//! and explained recommendations.

mod error;
pub mod session;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use teaser_core::dataset::PreparedDataset;
use teaser_core::ease::ItemItemModel;
use teaser_core::recommend::{category_impact, profile, recommend, UserState};
use teaser_core::solver::EncoderModel;

pub use error::ApiError;
use session::{Change, Direction, SessionStore};

/// Recommendations returned with every state change.
pub const DEFAULT_K: usize = 20;

/// Read-only models shared by all sessions.
pub struct Models {
    pub dataset: PreparedDataset,
    pub encoder: EncoderModel,
    pub ease: Option<ItemItemModel>,
}

impl Models {
    pub fn new(
        dataset: PreparedDataset,
        encoder: EncoderModel,
        ease: Option<ItemItemModel>,
    ) -> teaser_core::Result<Self> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(teaser_core::Error::Validation(msg.to_owned()))
            }
        };
        check(
            encoder.num_items() == dataset.num_items(),
            "encoder and dataset item counts differ",
        )?;
        check(
            encoder.vocabulary == dataset.tags.vocabulary(),
            "encoder and dataset tag vocabularies differ",
        )?;
        if let Some(e) = &ease {
            check(
                e.num_items() == dataset.num_items(),
                "EASE and dataset item counts differ",
            )?;
        }
        Ok(Models {
            dataset,
            encoder,
            ease,
        })
    }

    pub fn load(dataset: &Path, encoder: &Path, ease: Option<&Path>) -> teaser_core::Result<Self> {
        let ease = ease.map(ItemItemModel::load).transpose()?;
        Self::new(
            PreparedDataset::load(dataset)?,
            EncoderModel::load(encoder)?,
            ease,
        )
    }
}

pub struct Service {
    models: Option<Models>,
    sessions: SessionStore,
}

pub type AppState = Arc<Service>;

impl Service {
    /// In-memory sessions only.
    pub fn new(models: Option<Models>) -> Self {
        Service {
            models,
            sessions: SessionStore::default(),
        }
    }

    /// Sessions persisted to (and restored from) the event log at `path`.
    pub fn with_log(models: Models, path: &Path) -> Result<Self, ApiError> {
        let sessions = SessionStore::open(&models, path)?;
        Ok(Service {
            models: Some(models),
            sessions,
        })
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    fn models(&self) -> Result<&Models, ApiError> {
        self.models.as_ref().ok_or_else(ApiError::no_model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub item_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagView {
    pub tag_id: usize,
    pub tag: String,
    pub category: String,
    pub display_affinity: f64,
    pub feedback_clicks: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryView {
    pub name: String,
    pub impact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileView {
    pub certainty: f64,
    pub history: Vec<HistoryEntry>,
    pub tags: Vec<TagView>,
    pub categories: Vec<CategoryView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationView {
    pub tag_id: usize,
    pub tag: String,
    pub category: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub item_id: String,
    pub title: String,
    pub score: f64,
    pub percent_match: f64,
    pub explanations: Vec<ExplanationView>,
}

/// Profile panel plus ranked items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub profile: ProfileView,
    pub items: Vec<RecommendationView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub item_id: String,
    pub title: String,
    pub display: BTreeMap<String, String>,
    pub tags: Vec<ItemTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemTag {
    pub tag_id: usize,
    pub tag: String,
    pub category: String,
}

fn profile_view(models: &Models, state: &UserState) -> Result<ProfileView, ApiError> {
    let ds = &models.dataset;
    let tags = &ds.tags;
    let prof = profile(state, &models.encoder, tags)?;
    let impact = category_impact(&prof, tags);
    Ok(ProfileView {
        certainty: prof.certainty,
        history: state
            .history()
            .iter()
            .map(|&i| HistoryEntry {
                item_id: ds.items.id(i).to_owned(),
                title: ds.title(i).to_owned(),
            })
            .collect(),
        tags: (0..tags.num_tags())
            .map(|t| {
                let (category, label) = tags.tag(t);
                TagView {
                    tag_id: t,
                    tag: label.to_owned(),
                    category: category.to_owned(),
                    display_affinity: prof.display[t],
                    feedback_clicks: state.clicks()[t],
                }
            })
            .collect(),
        categories: tags
            .categories()
            .iter()
            .zip(impact)
            .map(|(name, impact)| CategoryView {
                name: name.clone(),
                impact,
            })
            .collect(),
    })
}

fn session_view(
    models: &Models,
    state: &UserState,
    k: usize,
    ensemble: bool,
) -> Result<SessionView, ApiError> {
    let ds = &models.dataset;
    let ease = if ensemble {
        Some(models.ease.as_ref().ok_or_else(|| {
            ApiError::bad_request("ensemble requested but no EASE model is loaded")
        })?)
    } else {
        None
    };
    let k = k.min(ds.num_items());
    let ranked = if k == 0 {
        Vec::new()
    } else {
        recommend(state, &models.encoder, &ds.tags, k, ease)?
    };
    let items = ranked
        .into_iter()
        .map(|r| RecommendationView {
            item_id: ds.items.id(r.item).to_owned(),
            title: ds.title(r.item).to_owned(),
            score: r.score,
            percent_match: r.percent_match,
            explanations: r
                .explanations
                .iter()
                .map(|e| {
                    let (category, label) = ds.tags.tag(e.tag);
                    ExplanationView {
                        tag_id: e.tag,
                        tag: label.to_owned(),
                        category: category.to_owned(),
                        percent: e.percent,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(SessionView {
        profile: profile_view(models, state)?,
        items,
    })
}

#[derive(Debug, Deserialize)]
struct RecommendationQuery {
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default)]
    ensemble: bool,
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Deserialize)]
struct HistoryBody {
    item_id: String,
}

#[derive(Debug, Deserialize)]
struct FeedbackBody {
    tag_id: usize,
    direction: Direction,
}

async fn create_session(
    State(app): State<AppState>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let models = app.models()?;
    let session = app.sessions.create(models)?;
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: session.id,
        }),
    ))
}

async fn get_profile(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ProfileView>, ApiError> {
    let models = app.models()?;
    Ok(Json(profile_view(models, &app.sessions.state(&id)?)?))
}

fn change(app: &Service, id: &str, change: Change) -> Result<Json<SessionView>, ApiError> {
    let models = app.models()?;
    let state = app.sessions.update(models, id, change)?;
    Ok(Json(session_view(models, &state, DEFAULT_K, false)?))
}

async fn add_history(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<HistoryBody>,
) -> Result<Json<SessionView>, ApiError> {
    change(
        &app,
        &id,
        Change::AddItem {
            item_id: body.item_id,
        },
    )
}

async fn remove_history(
    State(app): State<AppState>,
    UrlPath((id, item_id)): UrlPath<(String, String)>,
) -> Result<Json<SessionView>, ApiError> {
    change(&app, &id, Change::RemoveItem { item_id })
}

async fn post_feedback(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<FeedbackBody>,
) -> Result<Json<SessionView>, ApiError> {
    change(
        &app,
        &id,
        Change::Feedback {
            tag_id: body.tag_id,
            direction: body.direction,
        },
    )
}

async fn get_recommendations(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<RecommendationQuery>,
) -> Result<Json<SessionView>, ApiError> {
    let models = app.models()?;
    if q.k == 0 {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    let state = app.sessions.state(&id)?;
    Ok(Json(session_view(models, &state, q.k, q.ensemble)?))
}

async fn get_item(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ItemView>, ApiError> {
    let ds = &app.models()?.dataset;
    let item = ds
        .items
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("item `{id}`")))?;
    let tags = ds
        .tags
        .item_entries(item)
        .map(|(t, _)| {
            let (category, label) = ds.tags.tag(t);
            ItemTag {
                tag_id: t,
                tag: label.to_owned(),
                category: category.to_owned(),
            }
        })
        .collect();
    Ok(Json(ItemView {
        item_id: id,
        title: ds.title(item).to_owned(),
        display: ds.display[item].clone(),
        tags,
    }))
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/profile", get(get_profile))
        .route("/sessions/{id}/history", post(add_history))
        .route("/sessions/{id}/history/{item_id}", delete(remove_history))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/sessions/{id}/recommendations", get(get_recommendations))
        .route("/items/{id}", get(get_item))
        .with_state(app)
}

/// Serves until Ctrl-C.
pub async fn serve(app: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
