//! HTTP gateway through which human managers operate the system.
//!
//! Each bearer token authenticates as a manager agent that the service has
//! adopted under the manager law. A request becomes an m-message sent by
//! that agent, so it passes the same two controllers as any other message
//! and the gateway itself holds no authority. The JSON shapes are pinned by
//! golden files in the test suite.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value as JsonValue};
use tokio_stream::wrappers::{BroadcastStream, IntervalStream};

use super::config::CosConfig;
use super::frame::PROTOCOL_VERSION;
use super::hub::{Hub, HubEvent, Step};
use crate::capabilities::audit::{AuditKind, AuditRecord};
use crate::engine::{AgentId, Layer, Payload};
use crate::runtime::Record;
use crate::value::Value;

#[derive(Debug, Clone)]
struct Session {
    manager: AgentId,
    role: String,
}

#[derive(Clone)]
struct GatewayState {
    hub: Arc<Hub>,
    sessions: Arc<BTreeMap<String, Session>>,
    heartbeat: Duration,
}

pub fn router(hub: Arc<Hub>, cfg: &CosConfig) -> Router {
    let sessions = cfg
        .tokens
        .iter()
        .map(|t| (t.token.clone(), Session { manager: AgentId::new(&t.manager, &t.branch, Layer::M), role: t.role.clone() }))
        .collect();
    let state = GatewayState { hub, sessions: Arc::new(sessions), heartbeat: Duration::from_millis(cfg.heartbeat_ms.max(1)) };
    Router::new()
        .route("/health", get(health))
        .route("/v1/session", get(session))
        .route("/v1/components", get(components))
        .route("/v1/examine", post(examine))
        .route("/v1/invoke", post(invoke))
        .route("/v1/acquire", post(acquire))
        .route("/v1/release", post(release))
        .route("/v1/subscribe", post(subscribe))
        .route("/v1/unsubscribe", post(unsubscribe))
        .route("/v1/events", get(events))
        .route("/v1/audit", get(audit))
        .with_state(state)
}

fn reply(status: StatusCode, body: JsonValue) -> Response {
    (status, Json(body)).into_response()
}

fn error(status: StatusCode, msg: &str) -> Response {
    reply(status, json!({"status": "error", "error": msg}))
}

#[allow(clippy::result_large_err)]
fn authenticate(st: &GatewayState, headers: &HeaderMap) -> Result<Session, Response> {
    let token = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|h| h.to_str().ok())
        .and_then(|h| h.strip_prefix("Bearer "))
        .ok_or_else(|| error(StatusCode::UNAUTHORIZED, "missing bearer token"))?;
    st.sessions.get(token).cloned().ok_or_else(|| error(StatusCode::UNAUTHORIZED, "unknown token"))
}

async fn health(State(st): State<GatewayState>) -> Response {
    reply(
        StatusCode::OK,
        json!({"status": "ok", "protocol": PROTOCOL_VERSION, "agents": st.hub.agents().len(), "root": st.hub.tree().root().hash}),
    )
}

async fn session(State(st): State<GatewayState>, headers: HeaderMap) -> Response {
    let s = match authenticate(&st, &headers) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let law = st.hub.leaf_of(&s.manager);
    reply(StatusCode::OK, json!({"manager": s.manager, "role": s.role, "law": law}))
}

async fn components(State(st): State<GatewayState>, headers: HeaderMap) -> Response {
    let s = match authenticate(&st, &headers) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let list: Vec<JsonValue> = st
        .hub
        .agents()
        .into_iter()
        .filter(|(a, _)| a.layer == Layer::B && a.branch == s.manager.branch)
        .map(|(a, law)| json!({"agent": a, "law": law}))
        .collect();
    reply(StatusCode::OK, json!({"components": list}))
}

#[derive(Deserialize)]
struct TargetRequest {
    target: AgentId,
    #[serde(alias = "property", alias = "operation", alias = "event")]
    name: String,
}

fn is_sender(v: Option<&JsonValue>, who: &JsonValue) -> bool {
    v == Some(who)
}

/// Reads the outcome of a manager request out of the records it produced.
fn outcome(manager: &AgentId, step: &Step) -> Response {
    let me = serde_json::to_value(manager).expect("triples serialize");
    for r in &step.records {
        if let Record::Deliver { agent, payload, sender, .. } = r {
            if agent == manager {
                let status = if payload.kind == "refused" { "refused" } else { "ok" };
                let mut body = json!({"status": status, "reply": payload, "from": sender});
                if payload.kind == "value" {
                    body["value"] = serde_json::to_value(payload.arg(1).cloned().unwrap_or_default()).unwrap_or_default();
                }
                if payload.kind == "refused" {
                    body["holder"] = serde_json::to_value(payload.arg(1).cloned().unwrap_or_default()).unwrap_or_default();
                }
                return reply(StatusCode::OK, body);
            }
        }
    }
    for r in &step.records {
        match r {
            Record::Audit { record } => {
                if let Some(reason) = denial_reason(record, manager, &me) {
                    return reply(StatusCode::FORBIDDEN, json!({"status": "denied", "reason": reason, "audit": record}));
                }
            }
            Record::Reject { source, reason, .. } if source == manager => {
                return reply(StatusCode::FORBIDDEN, json!({"status": "denied", "reason": reason}));
            }
            _ => {}
        }
    }
    if !step.forwarded {
        return reply(StatusCode::FORBIDDEN, json!({"status": "denied", "reason": "dropped"}));
    }
    reply(StatusCode::OK, json!({"status": "noReply"}))
}

fn denial_reason(record: &AuditRecord, manager: &AgentId, me: &JsonValue) -> Option<String> {
    let note = record.detail.get("note");
    let first = |i: usize| note.and_then(|n| n.get(i)).and_then(JsonValue::as_str).map(str::to_string);
    match record.kind {
        AuditKind::ManagerMsg if record.actor.as_ref() == Some(manager) && first(0).as_deref() == Some("denied") => {
            Some(first(1).unwrap_or_else(|| "denied".into()))
        }
        AuditKind::Rejection if is_sender(record.detail.get("sender"), me) || is_sender(record.detail.get("requester"), me) => {
            Some(first(0).unwrap_or_else(|| "rejected".into()))
        }
        AuditKind::DeadLetter if record.actor.as_ref() == Some(manager) => Some("deadLetter".into()),
        _ => None,
    }
}

async fn request(st: GatewayState, headers: HeaderMap, form: &str, req: TargetRequest) -> Response {
    let s = match authenticate(&st, &headers) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let hub = st.hub.clone();
    let payload = Payload::new(form, vec![Value::str(&req.name)]);
    let manager = s.manager.clone();
    let step = tokio::task::spawn_blocking(move || hub.send(&manager, &req.target, payload)).await;
    match step {
        Ok(Ok(step)) => outcome(&s.manager, &step),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, &e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}

async fn examine(State(st): State<GatewayState>, headers: HeaderMap, Json(r): Json<TargetRequest>) -> Response {
    request(st, headers, "examine", r).await
}

async fn invoke(State(st): State<GatewayState>, headers: HeaderMap, Json(r): Json<TargetRequest>) -> Response {
    request(st, headers, "invoke", r).await
}

async fn acquire(State(st): State<GatewayState>, headers: HeaderMap, Json(r): Json<TargetRequest>) -> Response {
    request(st, headers, "acquire", r).await
}

async fn release(State(st): State<GatewayState>, headers: HeaderMap, Json(r): Json<TargetRequest>) -> Response {
    request(st, headers, "release", r).await
}

async fn subscribe(State(st): State<GatewayState>, headers: HeaderMap, Json(r): Json<TargetRequest>) -> Response {
    request(st, headers, "subscribe", r).await
}

async fn unsubscribe(State(st): State<GatewayState>, headers: HeaderMap, Json(r): Json<TargetRequest>) -> Response {
    request(st, headers, "unsubscribe", r).await
}

/// Server-sent events: every message delivered to the session's manager,
/// interleaved with heartbeats.
async fn events(State(st): State<GatewayState>, headers: HeaderMap) -> Response {
    let s = match authenticate(&st, &headers) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let me = s.manager.clone();
    let deliveries = BroadcastStream::new(st.hub.subscribe()).filter_map(move |e| {
        let out = match e {
            Ok(HubEvent::Delivery { t, agent, payload, sender }) if agent == me => {
                Some(Event::default().event("message").json_data(json!({"t": t, "sender": sender, "payload": payload})))
            }
            _ => None,
        };
        async move { out.and_then(Result::ok) }
    });
    let hub = st.hub.clone();
    let beats = IntervalStream::new(tokio::time::interval(st.heartbeat))
        .map(move |_| Event::default().event("heartbeat").json_data(json!({"t": hub.clock()})).expect("static json"));
    let merged: std::pin::Pin<Box<dyn Stream<Item = Result<Event, Infallible>> + Send>> =
        Box::pin(stream::select(deliveries, beats).map(Ok));
    Sse::new(merged).keep_alive(KeepAlive::default()).into_response()
}

#[derive(Deserialize)]
struct AuditQuery {
    limit: Option<usize>,
    kind: Option<String>,
    actor: Option<String>,
}

async fn audit(State(st): State<GatewayState>, headers: HeaderMap, Query(q): Query<AuditQuery>) -> Response {
    let s = match authenticate(&st, &headers) {
        Ok(s) => s,
        Err(r) => return r,
    };
    if !matches!(s.role.as_str(), "operator" | "observer") {
        return reply(StatusCode::FORBIDDEN, json!({"status": "denied", "reason": "role"}));
    }
    let kind = match q.kind.as_deref().map(AuditKind::parse) {
        Some(None) => return error(StatusCode::BAD_REQUEST, "unknown audit kind"),
        Some(k) => k,
        None => None,
    };
    let records: Vec<AuditRecord> = st
        .hub
        .recent_audit(usize::MAX)
        .into_iter()
        .filter(|r| kind.is_none_or(|k| r.kind == k))
        .filter(|r| q.actor.as_deref().is_none_or(|a| r.actor.as_ref().is_some_and(|x| x.name == a)))
        .collect();
    let skip = records.len().saturating_sub(q.limit.unwrap_or(100));
    reply(StatusCode::OK, json!({"records": records[skip..]}))
}
