mod common;

use std::collections::BTreeSet;

use clap::Parser;
use common::*;
use rcm_api::cli::Cli;
use rcm_api::router::match_route;
use rcm_api::{ApiRequest, Method, ROUTES};
use rcm_core::domain::Role;
use rcm_core::workflow::{CrState, TransitionTable, TRANSITIONS_JSON};

#[test]
fn create_returns_created_and_submitted() {
    let mut service = service();
    let response = service.handle(&ApiRequest::post(
        "/change-requests",
        "sana",
        r#"{"targets":["R1"],"description":"d","severity":3}"#,
    ));
    assert_eq!(response.status, 201);
    let body = json(&response);
    assert_eq!(body["id"], "CR-0001");
    assert_eq!(body["state"], "Submitted");
}

#[test]
fn triage_by_non_pm_is_forbidden() {
    let mut service = service();
    ok(&mut service, ApiRequest::post("/change-requests", "sana", r#"{"targets":["R1","R2"],"severity":3}"#));
    ok(&mut service, ApiRequest::post("/change-requests/CR-0001/formulate", "sana", format!(r#"{{"deltas":{DELTAS}}}"#)));
    let response = service.handle(&ApiRequest::post("/change-requests/CR-0001/triage", "alice", r#"{"decision":"Accept"}"#));
    assert_eq!(response.status, 403);
    assert_eq!(response.error_code().as_deref(), Some("ForbiddenRole"));
    assert_eq!(json(&response)["error"]["details"]["action"], "triage");
}

#[test]
fn malformed_bodies_append_nothing() {
    let mut service = service();
    in_ccb_review(&mut service);
    let before = service.engine().log().len();
    let paths = [
        "/change-requests",
        "/change-requests/CR-0001/formulate",
        "/change-requests/CR-0001/triage",
        "/change-requests/CR-0001/votes",
        "/change-requests/CR-0001/tally",
        "/change-requests/CR-0001/implement",
        "/harness/tick",
    ];
    for path in paths {
        for body in ["", "not json", "[]", r#"{"unexpected":1}"#] {
            let response = service.handle(&ApiRequest::post(path, "pat", body));
            assert_eq!(response.status, 400, "{path} {body:?}");
            assert_eq!(response.error_code().as_deref(), Some("MalformedBody"), "{path} {body:?}");
        }
    }
    assert_eq!(service.engine().log().len(), before);
}

#[test]
fn failed_requests_append_nothing() {
    let mut service = service();
    in_ccb_review(&mut service);
    let before = service.engine().log().len();
    let refused = [
        (ApiRequest::post("/change-requests/CR-0001/tally", "alice", "{}"), "NoVotes", 422),
        (ApiRequest::post("/change-requests/CR-0001/votes", "pat", r#"{"decision":"Approve"}"#), "ForbiddenRole", 403),
        (ApiRequest::post("/change-requests/CR-0001/implement", "pat", "{}"), "IllegalTransition", 409),
        (ApiRequest::post("/change-requests/CR-0007/implement", "pat", "{}"), "UnknownChangeRequest", 404),
        (ApiRequest::post("/change-requests", "nobody", r#"{"targets":["R1"],"severity":3}"#), "UnknownActor", 403),
        (ApiRequest::post("/change-requests", "sana", r#"{"targets":["R9"],"severity":3}"#), "UnknownRequirement", 422),
        (ApiRequest::post("/change-requests", "sana", r#"{"targets":["R1"],"severity":9}"#), "InvalidSeverity", 422),
        (ApiRequest::post("/harness/tick", "quinn", r#"{"count":0}"#), "InvalidCount", 422),
    ];
    for (request, code, status) in refused {
        let response = service.handle(&request);
        assert_eq!((response.status, response.error_code().as_deref()), (status, Some(code)), "{request:?}");
    }
    let mut missing_actor = ApiRequest::post("/harness/tick", "", r#"{"count":1}"#);
    missing_actor.actor = None;
    assert_eq!(service.handle(&missing_actor).error_code().as_deref(), Some("UnknownActor"));
    assert_eq!(service.engine().log().len(), before);
}

#[test]
fn unknown_paths_and_methods() {
    let mut service = service();
    for path in ["/", "/nope", "/change-requests/CR-0001", "/change-requests/CR-0001/frobnicate", "/sites/extra"] {
        let response = service.handle(&ApiRequest::get(path));
        assert_eq!(response.status, 404, "{path}");
        assert_eq!(response.error_code().as_deref(), Some("NotFound"));
    }
    let response = service.handle(&ApiRequest::get("/harness/tick"));
    assert_eq!((response.status, response.error_code().as_deref()), (405, Some("MethodNotAllowed")));
    let response = service.handle(&ApiRequest::post("/sites", "pat", "{}"));
    assert_eq!(response.status, 405);
}

#[test]
fn full_lifecycle_over_the_api() {
    let mut service = service();
    in_ccb_review(&mut service);
    for member in ["alice", "bo", "chen"] {
        ok(&mut service, ApiRequest::post("/change-requests/CR-0001/votes", member, r#"{"decision":"Approve"}"#));
    }
    let tally = ok(&mut service, ApiRequest::post("/change-requests/CR-0001/tally", "bo", "{}"));
    assert_eq!(tally["decision"]["outcome"], "Approved");
    assert_eq!(tally["change_request"]["state"], "Approved");
    let implemented = ok(&mut service, ApiRequest::post("/change-requests/CR-0001/implement", "pat", "{}"));
    assert_eq!(implemented["state"], "Implementing");
    let tick = ok(&mut service, ApiRequest::post("/harness/tick", "quinn", r#"{"count":30}"#));
    assert_eq!(tick["closed"][0], "CR-0001");

    let closed = ok(&mut service, ApiRequest::get("/change-requests?state=Closed"));
    assert_eq!(closed.as_array().unwrap().len(), 1);
    let sites = ok(&mut service, ApiRequest::get("/sites"));
    let hashes: BTreeSet<&str> = sites.as_array().unwrap().iter().map(|s| s["baseline_hash"].as_str().unwrap()).collect();
    assert_eq!(hashes.len(), 1);

    let text = service.handle(&ApiRequest::get("/change-requests/CR-0001/report?format=text"));
    assert!(text.content_type.starts_with("text/plain"));
    assert!(text.body.contains("8. Verification and closure: Done"));
    let report = ok(&mut service, ApiRequest::get("/change-requests/CR-0001/report"));
    assert_eq!(report["outcome"], "Closed");

    let dot = service.handle(&ApiRequest::get("/change-requests/CR-0001/impact?phase=final&format=dot"));
    assert_eq!(dot.content_type, "text/vnd.graphviz");
    assert!(dot.body.starts_with("digraph"));
    assert!(dot.body.contains("fillcolor"));
    let impact = ok(&mut service, ApiRequest::get("/change-requests/CR-0001/impact?phase=final"));
    assert_eq!(impact["analysis"]["affected"]["R4"], 2);
}

#[test]
fn query_errors() {
    let mut service = service();
    in_ccb_review(&mut service);
    for path in [
        "/change-requests?state=Pending",
        "/change-requests?limit=x",
        "/change-requests/CR-0001/impact?phase=middle",
        "/change-requests/CR-0001/report?format=pdf",
    ] {
        let response = service.handle(&ApiRequest::get(path));
        assert_eq!((response.status, response.error_code().as_deref()), (400, Some("MalformedQuery")), "{path}");
    }
    let response = service.handle(&ApiRequest::get("/change-requests/CR-0001/impact?phase=final"));
    assert_eq!(response.error_code().as_deref(), Some("ImpactUnavailable"));
}

#[test]
fn reads_are_idempotent() {
    let mut service = service();
    in_ccb_review(&mut service);
    let reads = [
        "/change-requests",
        "/change-requests?state=CcbReview&limit=5",
        "/change-requests/CR-0001/impact",
        "/change-requests/CR-0001/impact?format=dot",
        "/change-requests/CR-0001/report",
        "/change-requests/CR-0001/report?format=text",
        "/sites",
        "/transition-table",
    ];
    let len = service.engine().log().len();
    for path in reads {
        let first = service.handle(&ApiRequest::get(path));
        let second = service.handle(&ApiRequest::get(path));
        assert!(first.is_success(), "{path}");
        assert_eq!(first, second, "{path}");
    }
    assert_eq!(service.engine().log().len(), len);
}

#[test]
fn transition_table_is_served_verbatim() {
    let mut service = service();
    let response = service.handle(&ApiRequest::get("/transition-table"));
    assert_eq!(response.body, TRANSITIONS_JSON);
    let table: TransitionTable = serde_json::from_str(&response.body).unwrap();
    assert_eq!(&table, TransitionTable::standard());
    assert!(table.actions_for(CrState::PmReview, Role::ProjectManager, false).contains("triage"));
    assert!(table.actions_for(CrState::PmReview, Role::CcbMember, false).is_empty());
}

#[test]
fn served_table_predicts_role_checks() {
    let table = TransitionTable::standard();
    let members = [("pat", Role::ProjectManager), ("alice", Role::CcbMember), ("quinn", Role::QaManager), ("omar", Role::ChangeRequestManager)];
    for (actor, role) in members {
        let mut service = service();
        in_ccb_review(&mut service);
        let offered = table.actions_for(CrState::CcbReview, role, false);
        let response = service.handle(&ApiRequest::post("/change-requests/CR-0001/votes", actor, r#"{"decision":"Approve"}"#));
        assert_eq!(offered.contains("vote"), response.is_success(), "{actor}: {response:?}");
        let response = service.handle(&ApiRequest::post("/change-requests/CR-0001/triage", actor, r#"{"decision":"Accept"}"#));
        assert_eq!(response.error_code().as_deref(), Some("IllegalTransition"));
    }
}

/// Every route is reachable from exactly the CLI subcommand named after it.
#[test]
fn cli_covers_every_route() {
    let commands: [&[&str]; 13] = [
        &["submit", "--target", "R1", "--severity", "3"],
        &["list"],
        &["formulate", "CR-0001", "--deltas", "[]"],
        &["triage", "CR-0001", "accept"],
        &["vote", "CR-0001", "approve"],
        &["tally", "CR-0001"],
        &["impact", "CR-0001"],
        &["implement", "CR-0001"],
        &["tick", "--count", "5"],
        &["status"],
        &["report", "CR-0001"],
        &["transitions"],
        &["serve"],
    ];
    let mut covered = BTreeSet::new();
    for args in commands {
        let cli = Cli::try_parse_from(std::iter::once("rcm").chain(args.iter().copied())).unwrap();
        if let Some(request) = cli.command.to_request("pat").unwrap() {
            let (pattern, _) = match_route(&request.path).unwrap();
            covered.insert((request.method == Method::Post, pattern));
        }
    }
    let all: BTreeSet<_> = ROUTES.iter().map(|(m, p)| (*m == Method::Post, *p)).collect();
    assert_eq!(covered, all);
}
