mod common;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use common::*;
use rcm_api::http::{app, MAX_BODY_BYTES};
use serde_json::Value;
use tower::ServiceExt;

async fn send(app: &Router, method: &str, uri: &str, actor: Option<&str>, body: &str) -> (StatusCode, String, String) {
    let mut builder = Request::builder().method(method).uri(uri);
    if let Some(actor) = actor {
        builder = builder.header("x-rcm-actor", actor);
    }
    let response = app.clone().oneshot(builder.body(Body::from(body.to_string())).unwrap()).await.unwrap();
    let status = response.status();
    let content_type = response.headers()["content-type"].to_str().unwrap().to_string();
    let bytes = to_bytes(response.into_body(), usize::MAX).await.unwrap();
    (status, content_type, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn lifecycle_over_http() {
    let app = app(service());
    let (status, _, body) =
        send(&app, "POST", "/change-requests", Some("sana"), r#"{"targets":["R1","R2"],"severity":4}"#).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["id"], "CR-0001");
    let formulate = format!(r#"{{"deltas":{DELTAS}}}"#);
    let steps = [
        ("/change-requests/CR-0001/formulate", "sana", formulate.as_str()),
        ("/change-requests/CR-0001/triage", "pat", r#"{"decision":"Accept"}"#),
        ("/change-requests/CR-0001/votes", "alice", r#"{"decision":"Approve"}"#),
        ("/change-requests/CR-0001/votes", "bo", r#"{"decision":"Approve"}"#),
        ("/change-requests/CR-0001/tally", "chen", "{}"),
        ("/change-requests/CR-0001/implement", "pat", "{}"),
        ("/harness/tick", "quinn", r#"{"count":40}"#),
    ];
    for (uri, actor, body) in steps {
        let (status, content_type, text) = send(&app, "POST", uri, Some(actor), body).await;
        assert_eq!(status, StatusCode::OK, "{uri}: {text}");
        assert_eq!(content_type, "application/json");
    }
    let (_, _, list) = send(&app, "GET", "/change-requests?state=Closed", None, "").await;
    assert_eq!(serde_json::from_str::<Value>(&list).unwrap().as_array().unwrap().len(), 1);
    let (status, content_type, dot) =
        send(&app, "GET", "/change-requests/CR-0001/impact?phase=final&format=dot", None, "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(content_type, "text/vnd.graphviz");
    assert!(dot.starts_with("digraph"));
}

#[tokio::test]
async fn errors_use_the_envelope() {
    let app = app(service());
    let (status, content_type, body) = send(&app, "POST", "/change-requests", None, r#"{"targets":["R1"],"severity":1}"#).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(content_type, "application/json");
    let error: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(error["error"]["code"], "UnknownActor");
    assert!(error["error"]["message"].is_string());

    let (status, _, body) = send(&app, "DELETE", "/change-requests", Some("pat"), "").await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    assert!(body.contains("MethodNotAllowed"));

    let (status, _, body) = send(&app, "POST", "/change-requests", Some("sana"), "{").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body.contains("MalformedBody"));

    let (status, _, _) = send(&app, "GET", "/nowhere", None, "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn oversized_and_non_utf8_bodies_are_malformed() {
    let app = app(service());
    let big = format!(r#"{{"targets":["R1"],"severity":1,"description":"{}"}}"#, "x".repeat(MAX_BODY_BYTES));
    let (status, _, body) = send(&app, "POST", "/change-requests", Some("sana"), &big).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body.contains("MalformedBody"));

    let request = Request::builder()
        .method("POST")
        .uri("/harness/tick")
        .header("x-rcm-actor", "quinn")
        .body(Body::from(vec![0xff, 0xfe]))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);
    let (_, _, list) = send(&app, "GET", "/change-requests", None, "").await;
    assert_eq!(list, "[]");
}

#[tokio::test]
async fn transition_table_is_a_static_file() {
    let app = app(service());
    let (status, content_type, body) = send(&app, "GET", "/transition-table", None, "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(content_type, "application/json");
    assert_eq!(body, rcm_core::workflow::TRANSITIONS_JSON);
}
