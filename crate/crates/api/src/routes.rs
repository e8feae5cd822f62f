use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use setpoint_core::session::{Session, SessionConfig};
use setpoint_core::ComfortType;

use crate::views::{project, CreatedView, EventsView, LedgerView, RoundView, SessionView};
use crate::{bearer, ApiError, AppState, Viewer, MAX_WAIT_MS};

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/round", get(get_round))
        .route("/sessions/{id}/reports", post(post_report))
        .route("/sessions/{id}/ledger", get(get_ledger))
        .route("/sessions/{id}/events", get(get_events))
        .route("/sessions/{id}/events/stream", get(stream_events))
        .route("/sessions/{id}/admin/open-round", post(admin_open_round))
        .route("/sessions/{id}/admin/close-round", post(admin_close_round))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

#[derive(Debug, Default, Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    after: u64,
    /// Long-poll: wait this long for an event past `after`.
    #[serde(default)]
    wait_ms: u64,
    token: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportBody {
    type_id: u8,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(ApiError::from)
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(ApiError::from)
}

async fn health(State(state): Shared) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "sessions": state.session_count() }))
}

async fn create_session(
    State(state): Shared,
    payload: Result<Json<SessionConfig>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let config = body(payload)?;
    let (handle, tokens) = state.create_session(config)?;
    let view = CreatedView {
        session_id: handle.id().to_string(),
        tokens,
        last_seq: handle.snapshot().last_seq(),
    };
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(
    State(state): Shared,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(SessionView::new(&state.session(&id)?.snapshot())))
}

async fn get_round(
    State(state): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    q: Result<Query<TokenQuery>, QueryRejection>,
) -> Result<Json<RoundView>, ApiError> {
    let q = query(q)?;
    let handle = state.session(&id)?;
    let viewer = handle
        .credentials()
        .viewer(bearer(&headers, q.token.as_deref()))?;
    Ok(Json(RoundView::new(&handle.snapshot(), &viewer)))
}

async fn post_report(
    State(state): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    payload: Result<Json<ReportBody>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let handle = state.session(&id)?;
    let occupant = handle
        .credentials()
        .require_occupant(bearer(&headers, None))?;
    let report = body(payload)?;
    let comfort_type = ComfortType::new(report.type_id)
        .map_err(|e| ApiError::invalid("type_id", e.to_string()))?;
    let ack = handle.submit_report(occupant, comfort_type).await?;
    Ok(Json(json!({
        "round": ack.round,
        "occupant": ack.occupant,
        "type_id": ack.comfort_type.id(),
        "recorded": ack.recorded,
    })))
}

async fn get_ledger(
    State(state): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    q: Result<Query<TokenQuery>, QueryRejection>,
) -> Result<Json<LedgerView>, ApiError> {
    let q = query(q)?;
    let handle = state.session(&id)?;
    let occupant = handle
        .credentials()
        .require_occupant(bearer(&headers, q.token.as_deref()))?;
    Ok(Json(LedgerView::new(&handle.snapshot(), &occupant)))
}

fn events_view(session: &Session, after: u64, viewer: &Viewer) -> EventsView {
    EventsView {
        events: session
            .events_after(after)
            .iter()
            .map(|e| project(session, e, viewer))
            .collect(),
        last_seq: session.last_seq(),
    }
}

async fn get_events(
    State(state): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    q: Result<Query<EventsQuery>, QueryRejection>,
) -> Result<Json<EventsView>, ApiError> {
    let q = query(q)?;
    let handle = state.session(&id)?;
    let viewer = handle
        .credentials()
        .viewer(bearer(&headers, q.token.as_deref()))?;
    let mut rx = handle.subscribe();
    let deadline = tokio::time::Instant::now() + Duration::from_millis(q.wait_ms.min(MAX_WAIT_MS));
    loop {
        let snapshot = rx.borrow_and_update().clone();
        if snapshot.last_seq() > q.after || q.wait_ms == 0 {
            return Ok(Json(events_view(&snapshot, q.after, &viewer)));
        }
        match tokio::time::timeout_at(deadline, rx.changed()).await {
            Ok(Ok(())) => continue,
            _ => return Ok(Json(events_view(&snapshot, q.after, &viewer))),
        }
    }
}

/// Server-sent events from `after` (or `Last-Event-ID`). Each event's SSE id
/// is its sequence number so clients can resume and de-duplicate.
async fn stream_events(
    State(state): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    q: Result<Query<EventsQuery>, QueryRejection>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let q = query(q)?;
    let handle = state.session(&id)?;
    let viewer = handle
        .credentials()
        .viewer(bearer(&headers, q.token.as_deref()))?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let cursor = resume.unwrap_or(q.after);
    let rx = handle.subscribe();
    let stream = futures::stream::unfold(
        (rx, cursor, VecDeque::new()),
        move |(mut rx, mut cursor, mut pending)| {
            let viewer = viewer.clone();
            async move {
                loop {
                    if let Some(event) = pending.pop_front() {
                        return Some((Ok(event), (rx, cursor, pending)));
                    }
                    let snapshot = rx.borrow_and_update().clone();
                    for e in snapshot.events_after(cursor) {
                        let data = project(&snapshot, e, &viewer).to_string();
                        pending.push_back(
                            Event::default()
                                .id(e.seq.to_string())
                                .event(e.kind.name())
                                .data(data),
                        );
                        cursor = e.seq;
                    }
                    if pending.is_empty() && rx.changed().await.is_err() {
                        return None;
                    }
                }
            }
        },
    );
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn admin_open_round(
    State(state): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<RoundView>, ApiError> {
    let handle = state.session(&id)?;
    handle.credentials().require_admin(bearer(&headers, None))?;
    handle.open_round().await?;
    Ok(Json(RoundView::new(&handle.snapshot(), &Viewer::Admin)))
}

async fn admin_close_round(
    State(state): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<RoundView>, ApiError> {
    let handle = state.session(&id)?;
    handle.credentials().require_admin(bearer(&headers, None))?;
    handle.close_round().await?;
    Ok(Json(RoundView::new(&handle.snapshot(), &Viewer::Admin)))
}
