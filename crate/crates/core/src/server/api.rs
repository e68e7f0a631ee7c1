//! Transport-independent HTTP API. The CLI mounts [`handle`] behind a real
//! HTTP server; tests call it directly.
//!
//! Every state-changing route answers with the `seq` of the log record it
//! appended (`null` when nothing changed). Errors are
//! `{"error": {"kind", "message", "field"?}}`.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use super::platform::{OpenSessionRequest, Platform, PlatformError};
use crate::assistant::ChatQuery;
use crate::attendance::{Millis, RawPayload};
use crate::ecosmart::TraceRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiRequest {
    pub method: String,
    /// Path without the query string.
    pub path: String,
    pub body: Vec<u8>,
    /// Bearer token from the Authorization header.
    pub token: Option<String>,
}

impl ApiRequest {
    pub fn new(method: &str, path: &str) -> Self {
        Self { method: method.to_string(), path: path.to_string(), body: Vec::new(), token: None }
    }

    pub fn json(method: &str, path: &str, body: &Value) -> Self {
        Self { body: serde_json::to_vec(body).expect("json serializes"), ..Self::new(method, path) }
    }

    pub fn with_token(mut self, token: &str) -> Self {
        self.token = Some(token.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl ApiResponse {
    fn ok(body: Value) -> Self {
        Self { status: 200, body }
    }

    fn created(body: Value) -> Self {
        Self { status: 201, body }
    }

    fn error(e: &PlatformError) -> Self {
        let mut err = json!({ "kind": e.kind(), "message": e.to_string() });
        if let PlatformError::BadRequest { field: Some(f), .. } = e {
            err["field"] = json!(f);
        }
        if let PlatformError::AccessDenied { status, reason } = e {
            err["status"] = json!(status);
            err["reason"] = json!(reason);
        }
        Self { status: e.status(), body: json!({ "error": err }) }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("response serializes")
}

/// A JSON object body with field-named errors.
struct Fields(Map<String, Value>);

impl Fields {
    fn parse(body: &[u8], allowed: &[&str]) -> Result<Self, PlatformError> {
        let value: Value = serde_json::from_slice(body)
            .map_err(|e| PlatformError::BadRequest { field: None, message: format!("body is not JSON: {e}") })?;
        let Value::Object(map) = value else {
            return Err(PlatformError::BadRequest { field: None, message: "body must be a JSON object".into() });
        };
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(PlatformError::bad(k, "unknown field"));
        }
        Ok(Self(map))
    }

    fn opt<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>, PlatformError> {
        match self.0.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| PlatformError::bad(name, e.to_string())),
        }
    }

    fn req<T: DeserializeOwned>(&self, name: &str) -> Result<T, PlatformError> {
        self.opt(name)?.ok_or_else(|| PlatformError::bad(name, "is required"))
    }
}

fn require_admin(platform: &Platform, req: &ApiRequest) -> Result<(), PlatformError> {
    match &platform.config().server.admin_token {
        Some(token) if req.token.as_deref() != Some(token.as_str()) => Err(PlatformError::Unauthorized),
        _ => Ok(()),
    }
}

/// Routes one request.
pub fn handle(platform: &Platform, req: &ApiRequest) -> ApiResponse {
    if req.method == "OPTIONS" {
        return ApiResponse { status: 204, body: Value::Null };
    }
    match route(platform, req) {
        Ok(r) => r,
        Err(e) => ApiResponse::error(&e),
    }
}

fn route(p: &Platform, req: &ApiRequest) -> Result<ApiResponse, PlatformError> {
    let segments: Vec<&str> = req.path.trim_matches('/').split('/').filter(|s| !s.is_empty()).collect();
    let admin = || require_admin(p, req);
    match (req.method.as_str(), segments.as_slice()) {
        ("GET", ["health"]) => Ok(ApiResponse::ok(json!({ "status": "ok", "last_seq": p.snapshot().last_seq }))),
        ("GET", ["digest"]) => {
            let s = p.snapshot();
            Ok(ApiResponse::ok(json!({ "digest": s.digest(), "last_seq": s.last_seq })))
        }
        ("GET", ["students"]) => {
            let s = p.snapshot();
            Ok(ApiResponse::ok(json!({ "students": s.registry.iter().collect::<Vec<_>>() })))
        }
        ("POST", ["students"]) => {
            admin()?;
            let f = Fields::parse(&req.body, &["student_id", "display_name", "tag_uid", "mac"])?;
            let (seq, record) = p.register_student(
                &f.req::<String>("student_id")?,
                &f.opt::<String>("display_name")?.unwrap_or_default(),
                &f.req::<String>("tag_uid")?,
                &f.req::<String>("mac")?,
            )?;
            Ok(ApiResponse::created(json!({ "seq": seq, "student": record })))
        }
        ("GET", ["sessions"]) => {
            let s = p.snapshot();
            let list: Vec<Value> = s
                .sessions
                .iter()
                .map(|(id, e)| {
                    json!({
                        "session_id": id,
                        "class_id": e.session.class_id,
                        "room_id": e.room_id,
                        "state": e.session.state,
                        "window_start": e.session.window_start,
                        "window_end": e.session.window_end,
                        "pairing_window_ms": e.session.pairing_window_ms,
                        "network_id": e.session.network_id,
                        "fraud_rules": e.session.fraud_rules,
                    })
                })
                .collect();
            Ok(ApiResponse::ok(json!({ "sessions": list })))
        }
        ("POST", ["sessions"]) => {
            admin()?;
            let f = Fields::parse(
                &req.body,
                &[
                    "session_id",
                    "class_id",
                    "room_id",
                    "window_start",
                    "window_end",
                    "pairing_window_ms",
                    "network_id",
                    "fraud_rules",
                ],
            )?;
            let (seq, id) = p.open_session(OpenSessionRequest {
                session_id: f.opt("session_id")?,
                class_id: f.req("class_id")?,
                room_id: f.opt("room_id")?,
                window_start: f.req("window_start")?,
                window_end: f.req("window_end")?,
                pairing_window_ms: f.opt("pairing_window_ms")?,
                network_id: f.req("network_id")?,
                fraud_rules: f.opt("fraud_rules")?,
            })?;
            Ok(ApiResponse::created(json!({ "seq": seq, "session_id": id })))
        }
        ("POST", ["sessions", id, "close"]) => {
            admin()?;
            let (seq, results) = p.close_session(id)?;
            Ok(ApiResponse::ok(json!({ "seq": seq, "session_id": id, "results": results })))
        }
        ("GET", ["sessions", id, "attendance"]) => {
            let s = p.snapshot();
            let entry = s.sessions.get(*id).ok_or_else(|| PlatformError::NotFound(format!("unknown session {id}")))?;
            let rows: Vec<Value> = s
                .session_results(id)
                .expect("session exists")
                .into_iter()
                .map(|r| {
                    let name = s.registry.get(&r.student_id).map(|st| st.display_name.clone()).unwrap_or_default();
                    json!({
                        "student_id": r.student_id,
                        "display_name": name,
                        "status": r.status,
                        "reason": r.reason,
                        "evidence": r.evidence,
                    })
                })
                .collect();
            Ok(ApiResponse::ok(json!({
                "session_id": id,
                "state": entry.session.state,
                "last_seq": s.last_seq,
                "results": rows,
            })))
        }
        ("GET", ["sessions", id, "events"]) => {
            let s = p.snapshot();
            let e = s.sessions.get(*id).ok_or_else(|| PlatformError::NotFound(format!("unknown session {id}")))?;
            Ok(ApiResponse::ok(json!({ "events": e.session.events(), "failures": e.session.failures() })))
        }
        ("POST", ["sessions", id, "events"]) => {
            admin()?;
            let f = Fields::parse(&req.body, &["timestamp", "node_id", "payload"])?;
            let payload: RawPayload = f.req("payload")?;
            let node_id: String = f.opt("node_id")?.unwrap_or_else(|| "api".into());
            let (seq, ack) = p.ingest_auth(id, f.req::<Millis>("timestamp")?, &node_id, payload)?;
            Ok(ApiResponse::ok(json!({ "seq": seq, "ack": ack })))
        }
        ("GET", ["documents"]) => {
            let s = p.snapshot();
            let docs: Vec<Value> = s
                .documents
                .values()
                .map(|d| json!({ "doc_id": d.doc_id, "title": d.title, "version": d.version, "chars": d.text.chars().count() }))
                .collect();
            Ok(ApiResponse::ok(json!({ "documents": docs })))
        }
        ("POST", ["documents"]) => {
            admin()?;
            let f = Fields::parse(&req.body, &["doc_id", "title", "text"])?;
            let doc_id: String = f.req("doc_id")?;
            let (seq, d) =
                p.ingest_document(&doc_id, &f.opt::<String>("title")?.unwrap_or_else(|| doc_id.clone()), &f.req::<String>("text")?)?;
            Ok(ApiResponse::created(json!({ "seq": seq, "doc_id": d.doc_id, "version": d.version })))
        }
        ("POST", ["chat"]) => {
            let f = Fields::parse(&req.body, &["student_id", "session_id", "doc_id", "text", "k"])?;
            let query = ChatQuery {
                student_id: f.req("student_id")?,
                session_id: f.req("session_id")?,
                doc_id: f.req("doc_id")?,
                text: f.req("text")?,
                k: f.opt("k")?,
            };
            let (seq, answer) = p.chat(&query)?;
            Ok(ApiResponse::ok(json!({ "seq": seq, "answer": answer })))
        }
        ("POST", ["quiz"]) => {
            let f = Fields::parse(&req.body, &["doc_id", "topic", "num_questions"])?;
            let (seq, quiz) = p.quiz(&f.req::<String>("doc_id")?, &f.req::<String>("topic")?, f.opt("num_questions")?)?;
            Ok(ApiResponse::ok(json!({ "seq": seq, "quiz": quiz, "text": quiz.text() })))
        }
        ("GET", ["environment"]) => Ok(ApiResponse::ok(json!({ "rooms": to_value(&p.snapshot().rooms) }))),
        ("GET", ["environment", room]) => {
            let s = p.snapshot();
            let r = s.rooms.get(*room).ok_or_else(|| PlatformError::NotFound(format!("unknown room {room}")))?;
            Ok(ApiResponse::ok(json!({ "room_id": room, "environment": r, "last_seq": s.last_seq })))
        }
        ("POST", ["environment", room, "samples"]) => {
            admin()?;
            let f = Fields::parse(&req.body, &["timestamp_ms", "temp_c", "humidity_pct", "lux_raw", "air_raw"])?;
            let record = TraceRecord {
                timestamp_ms: f.req("timestamp_ms")?,
                temp_c: f.req("temp_c")?,
                humidity_pct: f.req("humidity_pct")?,
                lux_raw: f.req("lux_raw")?,
                air_raw: f.req("air_raw")?,
            };
            let (seq, outcome) = p.sample_environment(room, record)?;
            Ok(ApiResponse::ok(json!({ "seq": seq, "outcome": outcome })))
        }
        ("GET", ["nodes"]) => Ok(ApiResponse::ok(json!({ "nodes": to_value(&p.snapshot().nodes) }))),
        (_, segs) if known_path(segs) => {
            Err(PlatformError::MethodNotAllowed(format!("method {} not allowed on {}", req.method, req.path)))
        }
        _ => Err(PlatformError::NotFound(format!("no route for {}", req.path))),
    }
}

fn known_path(segs: &[&str]) -> bool {
    matches!(
        segs,
        ["health"]
            | ["digest"]
            | ["students"]
            | ["sessions"]
            | ["sessions", _, "close" | "attendance" | "events"]
            | ["documents"]
            | ["chat"]
            | ["quiz"]
            | ["environment"]
            | ["environment", _]
            | ["environment", _, "samples"]
            | ["nodes"]
    )
}
