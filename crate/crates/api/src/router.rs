//! Transport-independent request routing.
//!
//! | method | path | body | success |
//! |---|---|---|---|
//! | POST | `/change-requests` | [`SubmitRequest`] | 201, change request |
//! | GET | `/change-requests?state=S&limit=N` | | 200, list of change requests |
//! | POST | `/change-requests/{id}/formulate` | [`FormulateRequest`] | 200, change request |
//! | POST | `/change-requests/{id}/triage` | [`TriageBody`] | 200, change request |
//! | POST | `/change-requests/{id}/votes` | [`VoteBody`] | 200, change request |
//! | POST | `/change-requests/{id}/tally` | [`TallyBody`] | 200, decision and change request |
//! | GET | `/change-requests/{id}/impact?phase=preliminary\|final&format=json\|dot` | | 200, impact analysis or DOT |
//! | POST | `/change-requests/{id}/implement` | `{}` | 200, implementation outcome |
//! | POST | `/harness/tick` | [`TickBody`] | 200, tick outcome |
//! | GET | `/sites` | | 200, site board |
//! | GET | `/change-requests/{id}/report?format=json\|text` | | 200, assessment report |
//! | GET | `/transition-table` | | 200, the published transition table |
//!
//! Mutating routes name their actor in the [`ACTOR_HEADER`] header. Errors
//! come back as `{"error":{"code":..,"message":..,"details":..}}`.

use std::collections::BTreeMap;

use rcm_core::domain::{ActorId, ChangeRequestId};
use rcm_core::engine::{Engine, EngineError, FormulateRequest, ImpactPhase, SubmitRequest};
use rcm_core::persistence::{LogStore, PersistenceError};
use rcm_core::workflow::{CrState, TriageDecision, VoteDecision, WorkflowError, TRANSITIONS_JSON};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Request header carrying the acting [`ActorId`].
pub const ACTOR_HEADER: &str = "x-rcm-actor";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Get,
    Post,
}

impl Method {
    pub fn parse(raw: &str) -> Option<Method> {
        match raw.to_ascii_uppercase().as_str() {
            "GET" => Some(Method::Get),
            "POST" => Some(Method::Post),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiRequest {
    pub method: Method,
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub actor: Option<String>,
    pub body: String,
}

impl ApiRequest {
    pub fn get(path: &str) -> Self {
        let (path, query) = split_query(path);
        ApiRequest { method: Method::Get, path, query, actor: None, body: String::new() }
    }

    pub fn post(path: &str, actor: &str, body: impl Into<String>) -> Self {
        let (path, query) = split_query(path);
        ApiRequest { method: Method::Post, path, query, actor: Some(actor.into()), body: body.into() }
    }
}

/// Splits `a/b?x=1&y=2`. Values are taken literally; ids and enum names
/// never need percent-encoding.
pub fn split_query(target: &str) -> (String, BTreeMap<String, String>) {
    match target.split_once('?') {
        None => (target.to_string(), BTreeMap::new()),
        Some((path, query)) => {
            let pairs = query
                .split('&')
                .filter(|p| !p.is_empty())
                .map(|p| match p.split_once('=') {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => (p.to_string(), String::new()),
                })
                .collect();
            (path.to_string(), pairs)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: String,
}

impl ApiResponse {
    fn json(status: u16, value: &impl Serialize) -> Self {
        ApiResponse {
            status,
            content_type: "application/json",
            body: serde_json::to_string(value).expect("responses serialize"),
        }
    }

    fn text(content_type: &'static str, body: String) -> Self {
        ApiResponse { status: 200, content_type, body }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// The `code` of an error envelope.
    pub fn error_code(&self) -> Option<String> {
        let value: Value = serde_json::from_str(&self.body).ok()?;
        value.pointer("/error/code")?.as_str().map(str::to_string)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: u16,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into(), details: Value::Null } }
    }

    fn with_details(mut self, details: Value) -> Self {
        self.body.details = details;
        self
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(404, "NotFound", what)
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        ApiError::new(400, "MalformedBody", message)
    }

    pub fn into_response(self) -> ApiResponse {
        ApiResponse::json(self.status, &json!({ "error": self.body }))
    }
}

fn status_for(code: &str) -> u16 {
    match code {
        "ForbiddenRole" | "UnknownActor" => 403,
        "UnknownChangeRequest" | "ImpactUnavailable" => 404,
        "IllegalTransition" | "ConfigMismatch" => 409,
        "StorageFailure" | "ChainBroken" | "ReplayFailed" | "UnknownEventKind" | "InvalidConfig" => 500,
        _ => 422,
    }
}

fn details(error: &EngineError) -> Value {
    match error {
        EngineError::Workflow(WorkflowError::ValidationFailed { failures }) => json!({ "failures": failures }),
        EngineError::Workflow(WorkflowError::VerificationIncomplete { missing, hashes_match }) => {
            json!({ "missing": missing, "hashes_match": hashes_match })
        }
        EngineError::Workflow(WorkflowError::IllegalTransition { state, action }) => {
            json!({ "state": state, "action": action })
        }
        EngineError::Workflow(WorkflowError::ForbiddenRole { actor, role, action }) => {
            json!({ "actor": actor, "role": role, "action": action })
        }
        EngineError::Persistence(PersistenceError::ChainBroken { seq, .. }) => json!({ "seq": seq }),
        _ => Value::Null,
    }
}

impl From<EngineError> for ApiError {
    fn from(error: EngineError) -> Self {
        let code = error.code();
        ApiError::new(status_for(code), code, error.to_string()).with_details(details(&error))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriageBody {
    pub decision: TriageDecision,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteBody {
    pub decision: VoteDecision,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TallyBody {
    #[serde(default)]
    pub quorum: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImplementBody {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickBody {
    pub count: u64,
}

/// Every route, as `(method, path pattern)`.
pub const ROUTES: [(Method, &str); 12] = [
    (Method::Post, "/change-requests"),
    (Method::Get, "/change-requests"),
    (Method::Post, "/change-requests/{id}/formulate"),
    (Method::Post, "/change-requests/{id}/triage"),
    (Method::Post, "/change-requests/{id}/votes"),
    (Method::Post, "/change-requests/{id}/tally"),
    (Method::Get, "/change-requests/{id}/impact"),
    (Method::Post, "/change-requests/{id}/implement"),
    (Method::Post, "/harness/tick"),
    (Method::Get, "/sites"),
    (Method::Get, "/change-requests/{id}/report"),
    (Method::Get, "/transition-table"),
];

/// Matches `path` against the route table, returning the pattern and the
/// `{id}` segment if any.
pub fn match_route(path: &str) -> Option<(&'static str, Option<&str>)> {
    let segments: Vec<&str> = path.trim_end_matches('/').split('/').collect();
    ROUTES.iter().map(|(_, pattern)| *pattern).find_map(|pattern| {
        let parts: Vec<&str> = pattern.split('/').collect();
        if parts.len() != segments.len() {
            return None;
        }
        let mut id = None;
        for (p, s) in parts.iter().zip(&segments) {
            if *p == "{id}" && !s.is_empty() {
                id = Some(*s);
            } else if p != s {
                return None;
            }
        }
        Some((pattern, id))
    })
}

/// The service: one engine behind the route table.
#[derive(Debug)]
pub struct Service<S> {
    engine: Engine<S>,
}

/// Bodies must be JSON objects matching the route's schema exactly.
fn parse_body<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, ApiError> {
    let value: Value = serde_json::from_str(body).map_err(|e| ApiError::malformed(e.to_string()))?;
    if !value.is_object() {
        return Err(ApiError::malformed("body must be a JSON object"));
    }
    serde_json::from_value(value).map_err(|e| ApiError::malformed(e.to_string()))
}

fn parse_cr_id(raw: &str) -> Result<ChangeRequestId, ApiError> {
    ChangeRequestId::new(raw).map_err(|_| ApiError::not_found(format!("no change request {raw:?}")))
}

impl<S: LogStore> Service<S> {
    pub fn new(engine: Engine<S>) -> Self {
        Service { engine }
    }

    pub fn engine(&self) -> &Engine<S> {
        &self.engine
    }

    pub fn handle(&mut self, request: &ApiRequest) -> ApiResponse {
        self.route(request).unwrap_or_else(ApiError::into_response)
    }

    fn actor(request: &ApiRequest) -> Result<ActorId, ApiError> {
        let raw = request.actor.as_deref().unwrap_or_default();
        ActorId::new(raw).map_err(|_| {
            ApiError::new(403, "UnknownActor", format!("the {ACTOR_HEADER} header must name a configured actor"))
        })
    }

    fn route(&mut self, request: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let Some((pattern, id)) = match_route(&request.path) else {
            return Err(ApiError::not_found(format!("no route for {}", request.path)));
        };
        if !ROUTES.contains(&(request.method, pattern)) {
            return Err(ApiError::new(405, "MethodNotAllowed", format!("{:?} is not supported on {pattern}", request.method)));
        }
        let cr_id = id.map(parse_cr_id).transpose()?;
        let cr_id = || cr_id.clone().expect("pattern has an id");
        match (request.method, pattern) {
            (Method::Get, "/change-requests") => self.list(&request.query),
            (Method::Get, "/change-requests/{id}/impact") => self.impact(&cr_id(), &request.query),
            (Method::Get, "/change-requests/{id}/report") => self.report(&cr_id(), &request.query),
            (Method::Get, "/sites") => Ok(ApiResponse::json(200, &self.engine.state().site_status())),
            (Method::Get, "/transition-table") => Ok(ApiResponse::text("application/json", TRANSITIONS_JSON.to_string())),
            (Method::Post, _) => self.mutate(pattern, cr_id, request),
            _ => unreachable!("route table and dispatch agree"),
        }
    }

    fn change_request(&self, id: &ChangeRequestId, status: u16) -> Result<ApiResponse, ApiError> {
        Ok(ApiResponse::json(status, self.engine.state().request(id)?))
    }

    /// Parses the body completely before touching the engine, so a malformed
    /// request never reaches the log.
    fn mutate(
        &mut self,
        pattern: &str,
        cr_id: impl Fn() -> ChangeRequestId,
        request: &ApiRequest,
    ) -> Result<ApiResponse, ApiError> {
        let body = request.body.as_str();
        match pattern {
            "/change-requests" => {
                let req: SubmitRequest = parse_body(body)?;
                let id = self.engine.submit(&Self::actor(request)?, req)?;
                self.change_request(&id, 201)
            }
            "/change-requests/{id}/formulate" => {
                let req: FormulateRequest = parse_body(body)?;
                self.engine.formulate(&Self::actor(request)?, &cr_id(), req)?;
                self.change_request(&cr_id(), 200)
            }
            "/change-requests/{id}/triage" => {
                let req: TriageBody = parse_body(body)?;
                self.engine.triage(&Self::actor(request)?, &cr_id(), req.decision, req.rationale)?;
                self.change_request(&cr_id(), 200)
            }
            "/change-requests/{id}/votes" => {
                let req: VoteBody = parse_body(body)?;
                self.engine.vote(&Self::actor(request)?, &cr_id(), req.decision, req.rationale)?;
                self.change_request(&cr_id(), 200)
            }
            "/change-requests/{id}/tally" => {
                let req: TallyBody = parse_body(body)?;
                let decision = self.engine.tally(&Self::actor(request)?, &cr_id(), req.quorum)?;
                let cr = self.engine.state().request(&cr_id())?;
                Ok(ApiResponse::json(200, &json!({ "decision": decision, "change_request": cr })))
            }
            "/change-requests/{id}/implement" => {
                let ImplementBody {} = parse_body(body)?;
                let outcome = self.engine.implement(&Self::actor(request)?, &cr_id())?;
                Ok(ApiResponse::json(200, &outcome))
            }
            "/harness/tick" => {
                let req: TickBody = parse_body(body)?;
                let outcome = self.engine.tick(&Self::actor(request)?, req.count)?;
                Ok(ApiResponse::json(200, &outcome))
            }
            _ => unreachable!("only POST patterns reach mutate"),
        }
    }

    fn list(&self, query: &BTreeMap<String, String>) -> Result<ApiResponse, ApiError> {
        let state = query
            .get("state")
            .map(|s| CrState::parse(s).ok_or_else(|| ApiError::new(400, "MalformedQuery", format!("unknown state {s:?}"))))
            .transpose()?;
        let limit = query
            .get("limit")
            .map(|l| l.parse::<usize>().map_err(|_| ApiError::new(400, "MalformedQuery", format!("bad limit {l:?}"))))
            .transpose()?;
        Ok(ApiResponse::json(200, &self.engine.list(state, limit)))
    }

    fn impact(&self, id: &ChangeRequestId, query: &BTreeMap<String, String>) -> Result<ApiResponse, ApiError> {
        let phase = match query.get("phase").map(String::as_str) {
            None | Some("preliminary") => ImpactPhase::Preliminary,
            Some("final") => ImpactPhase::Final,
            Some(other) => return Err(ApiError::new(400, "MalformedQuery", format!("unknown phase {other:?}"))),
        };
        match query.get("format").map(String::as_str) {
            None | Some("json") => Ok(ApiResponse::json(200, &self.engine.impact(id, phase)?)),
            Some("dot") => Ok(ApiResponse::text("text/vnd.graphviz", self.engine.impact_dot(id, phase)?)),
            Some(other) => Err(ApiError::new(400, "MalformedQuery", format!("unknown format {other:?}"))),
        }
    }

    fn report(&self, id: &ChangeRequestId, query: &BTreeMap<String, String>) -> Result<ApiResponse, ApiError> {
        let report = self.engine.report(id)?;
        match query.get("format").map(String::as_str) {
            None | Some("json") => Ok(ApiResponse::json(200, &report)),
            Some("text") => Ok(ApiResponse::text("text/plain; charset=utf-8", report.render_text())),
            Some(other) => Err(ApiError::new(400, "MalformedQuery", format!("unknown format {other:?}"))),
        }
    }
}
