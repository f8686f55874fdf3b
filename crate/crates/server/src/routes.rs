use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use nanoscope_core::estimator::{uniqueness_report, UniquenessReport, DEFAULT_PROBABILITIES};
use nanoscope_core::index::CensorPolicy;
use nanoscope_core::risk::{risk_list, whatif_uniqueness, ProfileSession, RiskEntry, SessionAction, SessionSummary, WhatIfReport};
use nanoscope_core::selection::{SelectionKind, SelectionStrategy};
use nanoscope_core::{InterestId, UserId, MAX_QUERY_INTERESTS};
use serde::{Deserialize, Serialize};

use crate::{ApiError, AppState, Source};

type ApiResult<T> = Result<Json<T>, ApiError>;
type Params = Result<Query<HashMap<String, String>>, QueryRejection>;

pub(crate) fn api() -> Router<Arc<AppState>> {
    Router::new()
        .route("/health", get(health))
        .route("/users/{id}/risks", get(risks))
        .route("/users/{id}/session", get(session))
        .route("/users/{id}/interests/{iid}/{action}", post(mutate))
        .route("/users/{id}/whatif", get(whatif))
        .route("/report", get(report))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub population_digest: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VersionBody {
    version: u64,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        population_digest: state.source.digest(),
    })
}

fn parse_id<T: std::str::FromStr>(raw: &str, what: &str) -> Result<T, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("{what} must be a non-negative integer, got {raw:?}")))
}

fn params(raw: Params) -> Result<HashMap<String, String>, ApiError> {
    raw.map(|Query(p)| p).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn param<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str, default: T) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    match params.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .parse()
            .map_err(|e| ApiError::bad_request(format!("invalid {key} {raw:?}: {e}"))),
    }
}

/// Runs `f` on the user's session, creating it on first use.
fn with_session<T>(state: &AppState, user: UserId, f: impl FnOnce(&mut ProfileSession) -> Result<T, ApiError>) -> Result<T, ApiError> {
    let mut sessions = state.sessions.lock().map_err(|_| ApiError::internal("session store poisoned"))?;
    let session = match sessions.entry(user) {
        Entry::Occupied(e) => e.into_mut(),
        Entry::Vacant(e) => e.insert(match &state.source {
            Source::Population { population, .. } => ProfileSession::for_user(population, user)?,
            Source::Table { user_id, table, .. } if *user_id == user => ProfileSession::new(user, table.interests()),
            Source::Table { .. } => return Err(nanoscope_core::Error::UnknownUser(user).into()),
        }),
    };
    f(session)
}

async fn risks(State(state): State<Arc<AppState>>, path: Result<Path<String>, PathRejection>) -> ApiResult<Vec<RiskEntry>> {
    let Path(raw) = path.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let user = parse_id(&raw, "user id")?;
    let session = with_session(&state, user, |s| Ok(s.clone()))?;
    let list = match &state.source {
        Source::Population { population, .. } => risk_list(&session, population.as_ref(), &state.config.thresholds)?,
        Source::Table { table, .. } => risk_list(&session, table.as_ref(), &state.config.thresholds)?,
    };
    Ok(Json(list))
}

async fn session(State(state): State<Arc<AppState>>, path: Result<Path<String>, PathRejection>) -> ApiResult<SessionSummary> {
    let Path(raw) = path.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let user = parse_id(&raw, "user id")?;
    Ok(Json(with_session(&state, user, |s| Ok(s.summary()))?))
}

async fn mutate(
    State(state): State<Arc<AppState>>,
    path: Result<Path<(String, String, String)>, PathRejection>,
    body: Bytes,
) -> ApiResult<SessionSummary> {
    let Path((raw_user, raw_interest, raw_action)) = path.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let action: SessionAction = raw_action
        .parse()
        .map_err(|_| ApiError::not_found(format!("unknown action {raw_action:?}")))?;
    let user: UserId = parse_id(&raw_user, "user id")?;
    let interest: InterestId = parse_id(&raw_interest, "interest id")?;
    let VersionBody { version } = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("expected a JSON body {{\"version\": <integer>}}: {e}")))?;
    let summary = with_session(&state, user, |s| {
        s.apply_at(version, action, interest)?;
        Ok(s.summary())
    })?;
    Ok(Json(summary))
}

fn strategy_from(params: &HashMap<String, String>, default_seed: u64) -> Result<SelectionStrategy, ApiError> {
    let kind: SelectionKind = param(params, "strategy", SelectionKind::LeastPopular)?;
    let seed = param(params, "seed", default_seed)?;
    let n_max = param(params, "n_max", MAX_QUERY_INTERESTS)?;
    Ok(SelectionStrategy::new(kind, seed).with_n_max(n_max)?)
}

fn policy_from(params: &HashMap<String, String>) -> Result<CensorPolicy, ApiError> {
    Ok(CensorPolicy::new(param(params, "floor", 1u64)?)?)
}

async fn whatif(
    State(state): State<Arc<AppState>>,
    path: Result<Path<String>, PathRejection>,
    query: Params,
) -> ApiResult<WhatIfReport> {
    let Path(raw) = path.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let user = parse_id(&raw, "user id")?;
    let params = params(query)?;
    let strategy = strategy_from(&params, state.config.strategy_seed)?;
    let policy = policy_from(&params)?;
    let Source::Population { population, index } = &state.source else {
        return Err(ApiError::bad_request("what-if needs a loaded population, not an audience table"));
    };
    let session = with_session(&state, user, |s| Ok(s.clone()))?;
    Ok(Json(whatif_uniqueness(&session, index, population, &strategy, policy)?))
}

async fn report(State(state): State<Arc<AppState>>, query: Params) -> ApiResult<UniquenessReport> {
    let params = params(query)?;
    let Source::Population { population, index } = &state.source else {
        return Err(ApiError::bad_request("reports need a loaded population, not an audience table"));
    };
    let kinds = match params.get("strategy") {
        None => vec![SelectionKind::LeastPopular, SelectionKind::Random],
        Some(raw) => raw
            .split(',')
            .map(|s| s.trim().parse::<SelectionKind>())
            .collect::<Result<Vec<_>, _>>()?,
    };
    let p_list = match params.get("p") {
        None => DEFAULT_PROBABILITIES.to_vec(),
        Some(raw) => raw
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| ApiError::bad_request(format!("invalid p {s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let policy = policy_from(&params)?;
    let strategies: Vec<SelectionStrategy> = kinds
        .iter()
        .map(|&k| SelectionStrategy::new(k, state.config.strategy_seed))
        .collect();
    let key = format!("{kinds:?}|{p_list:?}|{}", policy.floor());

    // Held across the computation so concurrent identical requests wait for one result.
    let mut cache = state.reports.lock().await;
    if let Some(hit) = cache.get(&key) {
        return Ok(Json(hit.as_ref().clone()));
    }
    let (population, index) = (population.clone(), index.clone());
    let settings = state.config.bootstrap;
    let computed = tokio::task::spawn_blocking(move || uniqueness_report(&population, &index, &strategies, &p_list, policy, &settings))
        .await
        .map_err(|e| ApiError::internal(format!("report task failed: {e}")))??;
    let computed = Arc::new(computed);
    cache.insert(key, computed.clone());
    Ok(Json(computed.as_ref().clone()))
}
