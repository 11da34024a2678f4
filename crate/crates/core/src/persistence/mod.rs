//! Hash-chained, append-only audit log.
//!
//! The log file holds one event per line, each line the compact JSON object
//!
//! ```text
//! {"seq":1,"logical_ts":0,"actor":"system","cr_id":null,"kind":"system.initialized","payload":{...},"prev_digest":"000...0","digest":"9f2c..."}
//! ```
//!
//! with the fields in exactly that order, object keys inside `payload` sorted
//! bytewise, no insignificant whitespace, and a single `\n` after every line.
//! `digest` is the lowercase hex SHA-256 of seven length-prefixed fields
//! (`<decimal byte length>:<bytes>,`):
//!
//! ```text
//! seq, logical_ts, actor, cr_id (empty when absent), kind, payload (compact JSON), prev_digest
//! ```
//!
//! The first event's `prev_digest` is [`GENESIS_PREV_DIGEST`]; every later one
//! repeats its predecessor's `digest`. A line that does not re-serialize to
//! itself byte for byte is rejected, so any single-bit change to the file
//! is caught either there or by the chain.

mod report;
mod store;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use report::{assessment_report, AssessmentReport, ProcessStep, StepStatus, TimelineEntry};
pub use store::{FileStore, LogStore, MemoryStore};

use crate::domain::{push_field, ActorId, ChangeRequestId, Digest};

/// `prev_digest` of the first event: 64 zero digits.
pub const GENESIS_PREV_DIGEST: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    pub seq: u64,
    pub logical_ts: u64,
    pub actor: ActorId,
    pub cr_id: Option<ChangeRequestId>,
    pub kind: String,
    pub payload: Value,
    pub prev_digest: Digest,
    pub digest: Digest,
}

/// An event before it is placed in the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDraft {
    pub logical_ts: u64,
    pub actor: ActorId,
    pub cr_id: Option<ChangeRequestId>,
    pub kind: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PersistenceError {
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("chain broken at seq {seq}: {reason}")]
    ChainBroken { seq: u64, reason: String },
    #[error("event {seq} has unknown kind {kind:?}")]
    UnknownEventKind { seq: u64, kind: String },
    #[error("event {seq} ({kind}) does not fit the replayed state: {reason}")]
    ReplayFailed { seq: u64, kind: String, reason: String },
    #[error("change request {0} does not appear in the log")]
    UnknownChangeRequest(ChangeRequestId),
}

impl PersistenceError {
    pub fn code(&self) -> &'static str {
        match self {
            PersistenceError::StorageFailure(_) => "StorageFailure",
            PersistenceError::ChainBroken { .. } => "ChainBroken",
            PersistenceError::UnknownEventKind { .. } => "UnknownEventKind",
            PersistenceError::ReplayFailed { .. } => "ReplayFailed",
            PersistenceError::UnknownChangeRequest(_) => "UnknownChangeRequest",
        }
    }
}

fn genesis() -> Digest {
    Digest::from_hex(GENESIS_PREV_DIGEST).expect("genesis constant is valid hex")
}

/// Digest of an event's content fields, ignoring its stored `digest`.
pub fn event_digest(
    seq: u64,
    logical_ts: u64,
    actor: &ActorId,
    cr_id: Option<&ChangeRequestId>,
    kind: &str,
    payload: &Value,
    prev_digest: &Digest,
) -> Digest {
    let mut bytes = Vec::new();
    push_field(&mut bytes, seq.to_string().as_bytes());
    push_field(&mut bytes, logical_ts.to_string().as_bytes());
    push_field(&mut bytes, actor.as_str().as_bytes());
    push_field(&mut bytes, cr_id.map(|c| c.as_str()).unwrap_or_default().as_bytes());
    push_field(&mut bytes, kind.as_bytes());
    push_field(&mut bytes, payload.to_string().as_bytes());
    push_field(&mut bytes, prev_digest.as_str().as_bytes());
    Digest::of(&bytes)
}

impl AuditEvent {
    pub fn computed_digest(&self) -> Digest {
        event_digest(
            self.seq,
            self.logical_ts,
            &self.actor,
            self.cr_id.as_ref(),
            &self.kind,
            &self.payload,
            &self.prev_digest,
        )
    }

    /// Canonical line, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("audit events serialize")
    }
}

/// Places drafts after `log` in the chain: next seq, predecessor digest,
/// own digest.
pub fn chain_events(log: &[AuditEvent], drafts: Vec<EventDraft>) -> Vec<AuditEvent> {
    let mut seq = log.last().map_or(0, |e| e.seq);
    let mut prev = log.last().map_or_else(genesis, |e| e.digest.clone());
    drafts
        .into_iter()
        .map(|d| {
            seq += 1;
            let digest = event_digest(seq, d.logical_ts, &d.actor, d.cr_id.as_ref(), &d.kind, &d.payload, &prev);
            AuditEvent {
                seq,
                logical_ts: d.logical_ts,
                actor: d.actor,
                cr_id: d.cr_id,
                kind: d.kind,
                payload: d.payload,
                prev_digest: std::mem::replace(&mut prev, digest.clone()),
                digest,
            }
        })
        .collect()
}

pub fn render_log(events: &[AuditEvent]) -> String {
    events.iter().map(|e| e.to_line() + "\n").collect()
}

/// Checks seq density and the digest chain. An event whose content was
/// altered is reported at its successor, whose `prev_digest` no longer matches;
/// the last event is checked against its own stored digest.
pub fn verify_chain(events: &[AuditEvent]) -> Result<(), PersistenceError> {
    let broken = |seq: u64, reason: &str| PersistenceError::ChainBroken { seq, reason: reason.into() };
    let mut prev_stored = genesis();
    let mut prev_computed = genesis();
    for (index, event) in events.iter().enumerate() {
        let expected_seq = index as u64 + 1;
        if event.seq != expected_seq {
            return Err(broken(expected_seq, "sequence number out of order"));
        }
        if event.prev_digest != prev_stored || event.prev_digest != prev_computed {
            return Err(broken(expected_seq, "prev_digest does not match the preceding event"));
        }
        prev_stored = event.digest.clone();
        prev_computed = event.computed_digest();
    }
    if let Some(last) = events.last() {
        if prev_stored != prev_computed {
            return Err(broken(last.seq, "digest does not match the event content"));
        }
    }
    Ok(())
}

/// Parses a log file and verifies its chain. A line that fails to parse or
/// is not in canonical form breaks the chain at the seq it should have held.
pub fn parse_log(text: &str) -> Result<Vec<AuditEvent>, PersistenceError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let Some(body) = text.strip_suffix('\n') else {
        let seq = text.split('\n').count() as u64;
        return Err(PersistenceError::ChainBroken { seq, reason: "last line is incomplete".into() });
    };
    let mut events = Vec::new();
    for (index, line) in body.split('\n').enumerate() {
        let seq = index as u64 + 1;
        let event: AuditEvent = serde_json::from_str(line).map_err(|e| PersistenceError::ChainBroken {
            seq,
            reason: format!("unreadable line: {e}"),
        })?;
        if event.to_line() != line {
            return Err(PersistenceError::ChainBroken { seq, reason: "line is not in canonical form".into() });
        }
        events.push(event);
    }
    verify_chain(&events)?;
    Ok(events)
}
