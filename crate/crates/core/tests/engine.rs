mod common;

use common::*;
use rcm_core::engine::{replay, Engine, EngineError, FormulateRequest, ImpactPhase, SubmitRequest, SystemState};
use rcm_core::persistence::{parse_log, render_log, FileStore, LogStore, MemoryStore, StepStatus};
use rcm_core::workflow::{CrState, TriageDecision, VoteDecision};

#[test]
fn genesis_records_the_config() {
    let engine = engine();
    let log = engine.log();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].kind, "system.initialized");
    assert_eq!(log[0].actor.as_str(), "system");
    assert_eq!(log[0].payload, serde_json::to_value(config()).unwrap());
    assert_eq!(replay(log).unwrap(), *engine.state());
    assert_eq!(engine.state().site_status().len(), 4);
}

#[test]
fn empty_log_replays_to_empty_state() {
    assert_eq!(replay(&[]).unwrap(), SystemState::default());
    assert!(!SystemState::default().is_initialized());
}

#[test]
fn full_lifecycle_closes_after_all_acks() {
    let mut engine = engine();
    let id = approved(&mut engine, &["R1", "R2"], sso_deltas());
    assert_eq!(id.as_str(), "CR-0001");
    assert_eq!(engine.state().request(&id).unwrap().state, CrState::Approved);

    let outcome = engine.implement(&actor("pat"), &id).unwrap();
    assert_eq!(outcome.seq, 1);
    assert!(!outcome.deferred);
    assert_eq!(outcome.state, CrState::Implementing);

    let mut ticks = 0;
    while engine.state().request(&id).unwrap().state != CrState::Closed {
        engine.tick(&actor("quinn"), 1).unwrap();
        ticks += 1;
        assert!(ticks < 100, "never closed");
    }
    let sites = engine.state().site_status();
    assert!(sites.iter().all(|s| s.applied_seq == 1 && s.baseline_hash == sites[0].baseline_hash));

    let report = engine.report(&id).unwrap();
    assert!(report.steps.iter().all(|s| s.status == StepStatus::Done));
    assert_eq!(report.outcome, Some(CrState::Closed));
    let verification = report.verification.unwrap();
    assert!(verification.complete && verification.hashes_match);
    assert_eq!(verification.acked_sites.len(), 3);

    let pre = engine.impact(&id, ImpactPhase::Preliminary).unwrap().analysis;
    let fin = engine.impact(&id, ImpactPhase::Final).unwrap().analysis;
    assert_eq!(pre.affected_ids(), fin.affected_ids());
    assert!(engine.impact_dot(&id, ImpactPhase::Final).unwrap().starts_with("digraph"));

    assert_eq!(replay(engine.log()).unwrap(), *engine.state());
}

#[test]
fn failed_commands_append_nothing() {
    let mut engine = engine();
    let id = submit(&mut engine, &["R1"], 3);
    let before = engine.log().len();
    let state = engine.state().clone();

    let illegal = engine.vote(&actor("alice"), &id, VoteDecision::Approve, String::new());
    assert_eq!(illegal.unwrap_err().code(), "IllegalTransition");
    let unknown = engine.submit(&actor("mallory"), SubmitRequest { targets: vec![req("R1")], description: String::new(), severity: 1 });
    assert_eq!(unknown.unwrap_err(), EngineError::UnknownActor(actor("mallory")));
    assert_eq!(engine.tick(&actor("quinn"), 0).unwrap_err(), EngineError::InvalidCount);
    assert_eq!(engine.log().len(), before);
    assert_eq!(*engine.state(), state);

    // editing a requirement after deprecating it passes formulation but
    // fails validation at triage, which leaves the request in review
    engine
        .formulate(&actor("sana"), &id, FormulateRequest {
            deltas: vec![
                rcm_core::domain::RequirementDelta::deprecate(req("R1")),
                rcm_core::domain::RequirementDelta::modify_text(req("R1"), "x"),
            ],
            goals: vec![],
            measurements: vec![],
        })
        .unwrap();
    let mid = engine.log().len();
    let state_mid = engine.state().clone();
    let forbidden = engine.triage(&actor("sana"), &id, TriageDecision::Accept, String::new());
    assert_eq!(forbidden.unwrap_err().code(), "ForbiddenRole");
    let invalid = engine.triage(&actor("pat"), &id, TriageDecision::Accept, String::new());
    assert_eq!(invalid.unwrap_err().code(), "ValidationFailed");
    assert_eq!(engine.log().len(), mid);
    assert_eq!(*engine.state(), state_mid);
    assert_eq!(engine.state().request(&id).unwrap().state, CrState::PmReview);

    assert_eq!(before + 2, mid);
}

#[test]
fn each_command_appends_one_event_per_state_change() {
    let mut engine = engine();
    let id = submit(&mut engine, &["R1", "R2"], 3);
    assert_eq!(engine.log().len(), 2);
    engine
        .formulate(&actor("sana"), &id, FormulateRequest { deltas: sso_deltas(), goals: vec![], measurements: vec![] })
        .unwrap();
    let kinds = |e: &Engine<MemoryStore>, from: usize| e.log()[from..].iter().map(|e| e.kind.clone()).collect::<Vec<_>>();
    assert_eq!(kinds(&engine, 1), ["cr.submitted", "cr.formulated", "cr.pm_review_opened"]);
    engine.triage(&actor("pat"), &id, TriageDecision::Accept, String::new()).unwrap();
    assert_eq!(kinds(&engine, 4), ["cr.pm_accepted", "cr.form_generated", "cr.ccb_review_opened"]);
}

#[test]
fn pm_reject_is_final() {
    let mut engine = engine();
    let id = submit(&mut engine, &["R1", "R2"], 2);
    engine
        .formulate(&actor("sana"), &id, FormulateRequest { deltas: sso_deltas(), goals: vec![], measurements: vec![] })
        .unwrap();
    engine.triage(&actor("pat"), &id, TriageDecision::Reject, "out of scope".into()).unwrap();
    let len = engine.log().len();
    let attempts = [
        engine.triage(&actor("pat"), &id, TriageDecision::Accept, String::new()).map(|_| ()),
        engine.vote(&actor("alice"), &id, VoteDecision::Approve, String::new()).map(|_| ()),
        engine.tally(&actor("alice"), &id, None).map(|_| ()),
        engine.implement(&actor("pat"), &id).map(|_| ()),
        engine
            .formulate(&actor("sana"), &id, FormulateRequest { deltas: sso_deltas(), goals: vec![], measurements: vec![] })
            .map(|_| ()),
    ];
    for attempt in attempts {
        assert_eq!(attempt.unwrap_err().code(), "IllegalTransition");
    }
    assert_eq!(engine.log().len(), len);
    let report = engine.report(&id).unwrap();
    assert!(report.ccb_decision.is_none() && report.votes.is_empty());
    assert!(!report.render_text().contains("\nCCB\n"));
}

#[test]
fn conflicting_change_sets_are_serialized() {
    let mut engine = engine();
    let first = approved(&mut engine, &["R1", "R2"], sso_deltas());
    let second = approved(&mut engine, &["R2"], vec![rcm_core::domain::RequirementDelta::modify_text(
        req("R2"),
        "Sessions expire after 10 minutes idle",
    )]);
    let form = engine.state().request(&second).unwrap().form.clone().unwrap();
    assert_eq!(form.conflicts, vec![first.clone()]);

    assert!(!engine.implement(&actor("pat"), &first).unwrap().deferred);
    let outcome = engine.implement(&actor("omar"), &second).unwrap();
    assert_eq!(outcome.seq, 2);
    assert!(outcome.deferred);
    let report = engine.report(&second).unwrap();
    assert_eq!(report.waits_for, vec![1]);

    engine.tick(&actor("quinn"), 60).unwrap();
    for id in [&first, &second] {
        assert_eq!(engine.state().request(id).unwrap().state, CrState::Closed);
    }
    let sites = engine.state().site_status();
    assert!(sites.iter().all(|s| s.applied_seq == 2 && s.baseline_hash == sites[0].baseline_hash));
    assert_eq!(replay(engine.log()).unwrap(), *engine.state());
}

#[test]
fn tick_reports_trace_deliveries() {
    let mut engine = engine();
    let id = approved(&mut engine, &["R1", "R2"], sso_deltas());
    engine.implement(&actor("pat"), &id).unwrap();
    let start = engine.state().cluster().unwrap().transport().clock();
    let outcome = engine.tick(&actor("quinn"), 5).unwrap();
    assert_eq!(outcome.ticks, 5);
    assert_eq!(outcome.clock, start + 5);
    let delivered = engine.export_trace().lines().filter(|l| l.contains(r#""event":"deliver""#)).count();
    assert!(delivered > 0);
    assert_eq!(outcome.delivered, delivered);
}

#[test]
fn file_store_reopens_to_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.log");
    let mut engine = Engine::open(&config(), FileStore::new(&path)).unwrap();
    let id = engine.submit(&actor("sana"), SubmitRequest { targets: vec![req("R1"), req("R2")], description: "d".into(), severity: 5 }).unwrap();
    engine.formulate(&actor("sana"), &id, FormulateRequest { deltas: sso_deltas(), goals: vec![], measurements: vec![] }).unwrap();
    let live = engine.state().clone();
    let log = engine.log().to_vec();
    drop(engine);

    let reopened = Engine::open(&config(), FileStore::new(&path)).unwrap();
    assert_eq!(*reopened.state(), live);
    assert_eq!(reopened.log(), &log[..]);
    assert_eq!(reopened.verify_store().unwrap(), log.len());

    let mut other = config();
    other.ccb.quorum = Some(3);
    assert_eq!(Engine::open(&other, FileStore::new(&path)).unwrap_err(), EngineError::ConfigMismatch);
}

#[test]
fn tampered_store_refuses_to_open() {
    let mut engine = engine();
    submit(&mut engine, &["R1"], 3);
    let text = engine.store().text().replacen("Tighten", "Loosen!", 1);
    let err = Engine::open(&config(), MemoryStore::from_text(text)).unwrap_err();
    assert_eq!(err.code(), "ChainBroken");
    assert!(parse_log(&render_log(engine.log())).is_ok());
    assert_eq!(engine.store().load().unwrap(), engine.log());
}

#[test]
fn unavailable_impact_is_reported() {
    let mut engine = engine();
    let id = submit(&mut engine, &["R1"], 3);
    assert_eq!(engine.impact(&id, ImpactPhase::Preliminary).unwrap_err().code(), "ImpactUnavailable");
    assert_eq!(engine.impact(&cr("CR-0042"), ImpactPhase::Final).unwrap_err().code(), "UnknownChangeRequest");
    assert_eq!(engine.report(&cr("CR-0042")).unwrap_err().code(), "UnknownChangeRequest");
}

#[test]
fn list_filters_by_state() {
    let mut engine = engine();
    submit(&mut engine, &["R1"], 3);
    approved(&mut engine, &["R4"], vec![rcm_core::domain::RequirementDelta::modify_text(req("R4"), "Daily")]);
    assert_eq!(engine.list(None, None).len(), 2);
    assert_eq!(engine.list(Some(CrState::Approved), None).len(), 1);
    assert_eq!(engine.list(None, Some(1))[0].id.as_str(), "CR-0001");
}
