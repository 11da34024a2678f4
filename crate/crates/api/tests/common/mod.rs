#![allow(dead_code)]

use rcm_api::{ApiRequest, ApiResponse, Service};
use rcm_core::config::ServiceConfig;
use rcm_core::engine::Engine;
use rcm_core::persistence::MemoryStore;
use serde_json::Value;

pub const CONFIG: &str = include_str!("../../../../config/rcm.example.toml");

pub fn service() -> Service<MemoryStore> {
    let config = ServiceConfig::from_toml(CONFIG).unwrap();
    Service::new(Engine::open(&config.system, MemoryStore::new()).unwrap())
}

pub fn json(response: &ApiResponse) -> Value {
    serde_json::from_str(&response.body).unwrap_or_else(|e| panic!("{e}: {}", response.body))
}

pub fn ok(service: &mut Service<MemoryStore>, request: ApiRequest) -> Value {
    let response = service.handle(&request);
    assert!(response.is_success(), "{request:?} -> {response:?}");
    json(&response)
}

pub const DELTAS: &str = r#"[{"op":"Modify","requirement_id":"R1","new_text":"SSO plus a second factor"},{"op":"Modify","requirement_id":"R2","new_text":"15 minute idle timeout"}]"#;

/// Submits, formulates and accepts CR-0001, leaving it in CCB review.
pub fn in_ccb_review(service: &mut Service<MemoryStore>) {
    ok(service, ApiRequest::post("/change-requests", "sana", r#"{"targets":["R1","R2"],"description":"2FA","severity":4}"#));
    ok(service, ApiRequest::post("/change-requests/CR-0001/formulate", "sana", format!(r#"{{"deltas":{DELTAS},"goals":["g"]}}"#)));
    ok(service, ApiRequest::post("/change-requests/CR-0001/triage", "pat", r#"{"decision":"Accept","rationale":"ok"}"#));
}
