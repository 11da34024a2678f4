//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use rcm_core::config::{ServiceConfig, SystemConfig};
use rcm_core::domain::{ActorId, ChangeRequestId, RequirementDelta, RequirementId};
use rcm_core::engine::{Engine, FormulateRequest, SubmitRequest};
use rcm_core::persistence::MemoryStore;
use rcm_core::workflow::{TriageDecision, VoteDecision};

pub const FOUR_SITES: &str = include_str!("../fixtures/four_sites.toml");

pub fn config() -> SystemConfig {
    ServiceConfig::from_toml(FOUR_SITES).expect("fixture config is valid").system
}

pub fn actor(id: &str) -> ActorId {
    ActorId::new(id).unwrap()
}

pub fn req(id: &str) -> RequirementId {
    RequirementId::new(id).unwrap()
}

pub fn cr(id: &str) -> ChangeRequestId {
    ChangeRequestId::new(id).unwrap()
}

pub fn engine() -> Engine<MemoryStore> {
    Engine::open(&config(), MemoryStore::new()).unwrap()
}

pub fn submit(engine: &mut Engine<MemoryStore>, targets: &[&str], severity: u8) -> ChangeRequestId {
    engine
        .submit(&actor("sana"), SubmitRequest {
            targets: targets.iter().map(|t| req(t)).collect(),
            description: "Tighten sign-in".into(),
            severity,
        })
        .unwrap()
}

pub fn sso_deltas() -> Vec<RequirementDelta> {
    vec![
        RequirementDelta::modify_text(req("R1"), "Users sign in with single sign-on and a second factor"),
        RequirementDelta::modify_text(req("R2"), "Sessions expire after 15 minutes idle"),
    ]
}

/// Drives a fresh request through to `Approved`.
pub fn approved(engine: &mut Engine<MemoryStore>, targets: &[&str], deltas: Vec<RequirementDelta>) -> ChangeRequestId {
    let id = submit(engine, targets, 4);
    engine
        .formulate(&actor("sana"), &id, FormulateRequest {
            deltas,
            goals: vec!["Stronger authentication".into()],
            measurements: vec!["Second-factor enrolment rate".into()],
        })
        .unwrap();
    engine.triage(&actor("pat"), &id, TriageDecision::Accept, "worth it".into()).unwrap();
    for member in ["alice", "bo", "chen"] {
        engine.vote(&actor(member), &id, VoteDecision::Approve, format!("{member} agrees")).unwrap();
    }
    engine.tally(&actor("alice"), &id, None).unwrap();
    id
}
